#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "roomgraph/error.hpp"
#include "roomgraph/scenegraph.hpp"

namespace roomgraph {

enum class Author { kModel, kHuman };
enum class SceneStatus { kPending, kInReview, kApproved };

std::string_view author_name(Author a);
std::string_view scene_status_name(SceneStatus s);
std::optional<SceneStatus> scene_status_from_name(std::string_view name);

struct Revision {
  int id = 0;
  SceneGraph graph;
  Author author = Author::kModel;
  std::string timestamp;
};

struct SceneRecord {
  std::string scene_id;
  std::string image_ref;
  std::vector<std::string> object_list;
  std::vector<Revision> revisions;
  SceneStatus status = SceneStatus::kPending;
  std::optional<int> approved_revision;
  bool accepted_as_is = false;

  /// -1 when the scene has no revisions yet.
  int latest_revision() const { return revisions.empty() ? -1 : revisions.back().id; }
};

enum class EditKind { kAddRelation, kRemoveRelation, kMoveSubtree, kRename, kSetRelation };

std::string_view edit_kind_name(EditKind k);

struct EditOp {
  EditKind kind = EditKind::kAddRelation;
  std::string parent;      // add_relation, remove_relation, set_relation; new parent for move_subtree
  std::string child;       // every kind except rename
  Relation relation = Relation::kSupport;
  std::string from;        // rename
  std::string to;          // rename

  static EditOp add_relation(std::string parent, Relation r, std::string child);
  static EditOp remove_relation(std::string parent, std::string child);
  static EditOp move_subtree(std::string child, std::string new_parent, Relation r);
  static EditOp rename(std::string from, std::string to);
  static EditOp set_relation(std::string parent, std::string child, Relation r);
};

struct Correction {
  std::optional<int> base_revision;  // nullopt only for scenes without revisions
  std::vector<EditOp> ops;
};

nlohmann::ordered_json to_json(const EditOp& op);
EditOp edit_op_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const Correction& c);
Correction correction_from_json(const nlohmann::json& j);

/// Applies ops in order; remove_relation drops the whole subtree. Throws
/// Error(kInvalidEdit) naming the failing op; `g` is unchanged on failure.
void apply_ops(SceneGraph& g, const std::vector<EditOp>& ops);

class StaleBase : public Error {
 public:
  explicit StaleBase(int latest);
  int latest() const noexcept { return latest_; }

 private:
  int latest_;
};

struct SceneSummary {
  std::string scene_id;
  SceneStatus status = SceneStatus::kPending;
  std::size_t revision_count = 0;
  std::size_t object_count = 0;  // non-root nodes of the latest revision, else object list size
};

nlohmann::ordered_json to_json(const SceneSummary& s);
nlohmann::ordered_json to_json(const SceneRecord& r);

struct StoreOptions {
  /// Timestamp source; UTC ISO-8601 wall clock when empty.
  std::function<std::string()> clock;
};

/// File-backed scene store. Each scene is an append-only JSONL event log
/// under <root>/scenes; image bytes live under <root>/blobs by content hash.
/// Opening a store replays every log.
class SceneStore {
 public:
  explicit SceneStore(std::filesystem::path root, StoreOptions options = {});

  /// Throws kDuplicateImage when a scene with the same image is not yet
  /// approved, kInvalidArgument when neither objects nor proposal are given,
  /// kMalformedGraph for an invalid proposal.
  std::string enqueue(const std::string& image_ref, std::vector<std::string> object_list,
                      const std::optional<SceneGraph>& proposal);
  /// New human revision id. Throws StaleBase, kInvalidEdit, kUnknownScene.
  int apply_correction(const std::string& scene_id, const Correction& c);
  /// Marks the latest revision approved and returns its id. Requires a human
  /// revision or accept_as_is. Throws kInvalidTransition, kUnknownScene.
  int approve(const std::string& scene_id, bool accept_as_is);

  SceneRecord get(const std::string& scene_id) const;
  /// Summaries ordered by scene id; `page` counts from 0.
  std::vector<SceneSummary> queue(std::optional<SceneStatus> status, std::size_t page,
                                  std::size_t page_size = 50) const;
  std::size_t count(std::optional<SceneStatus> status) const;
  /// Graph QA records of every approved scene's approved revision, by scene id.
  std::string export_jsonl() const;

  /// Stores bytes under their content hash and returns the "sha256:" ref.
  std::string put_blob(std::string_view bytes);
  std::optional<std::string> get_blob(const std::string& ref) const;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path log_path(const std::string& scene_id) const;

 private:
  struct Entry {
    mutable std::shared_mutex mutex;
    SceneRecord record;
  };

  Entry* find(const std::string& scene_id) const;
  void replay(const std::filesystem::path& log);
  std::string now() const;

  std::filesystem::path root_;
  StoreOptions options_;
  mutable std::shared_mutex mutex_;  // guards the scene map and id allocation
  std::map<std::string, std::unique_ptr<Entry>> scenes_;
  int next_id_ = 1;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 0;                 // 0 picks a free port
  std::string bearer_token;     // empty disables the check
};

/// HTTP JSON API over a SceneStore.
class ServiceServer {
 public:
  ServiceServer(std::shared_ptr<SceneStore> store, ServiceOptions options = {});
  ~ServiceServer();
  ServiceServer(const ServiceServer&) = delete;
  ServiceServer& operator=(const ServiceServer&) = delete;

  int port() const { return port_; }
  std::string url() const;
  void stop();
  void wait();

 private:
  struct Impl;
  std::shared_ptr<SceneStore> store_;
  std::unique_ptr<Impl> impl_;
  ServiceOptions options_;
  int port_ = 0;
};

/// HTTP status used for an error code in API replies.
int http_status_for(ErrorCode code);

}  // namespace roomgraph
