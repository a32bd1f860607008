#include "roomgraph/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "roomgraph/digest.hpp"
#include "roomgraph/scenevqa.hpp"

namespace roomgraph {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

Relation relation_field(const nlohmann::json& j, const char* key) {
  const auto name = j.at(key).get<std::string>();
  auto r = relation_from_name(name);
  if (!r) throw Error(ErrorCode::kUnknownRelation, name);
  return *r;
}

std::string string_field(const nlohmann::json& j, const char* key) { return j.at(key).get<std::string>(); }

ojson graph_json(const SceneGraph& g) { return ojson::parse(serialize_graph(g)); }

SceneGraph graph_from_json(const nlohmann::json& j) { return parse_graph(j.dump(), {DuplicatePolicy::kReject}); }

void require_valid(const SceneGraph& g, ErrorCode code) {
  const auto report = validate(g);
  if (!report.ok()) throw Error(code, report.errors.front().code + ": " + report.errors.front().message);
}

std::size_t object_count(const SceneGraph& g) {
  const auto labels = labels_preorder(g);
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                [](const std::string& l) { return !is_root_label(l); }));
}

std::string utc_now() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const std::time_t t = system_clock::to_time_t(now);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

void append_durable(const fs::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd, line.data() + done, line.size() - done);
    if (n < 0) {
      ::close(fd);
      throw Error(ErrorCode::kIo, "write failed on " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw Error(ErrorCode::kIo, "fsync failed on " + path.string());
}

bool valid_hex_ref(const std::string& ref, std::string& hex) {
  constexpr std::string_view prefix = "sha256:";
  if (ref.rfind(prefix, 0) != 0) return false;
  hex = ref.substr(prefix.size());
  return hex.size() == 64 && std::all_of(hex.begin(), hex.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

}  // namespace

std::string_view author_name(Author a) { return a == Author::kModel ? "model" : "human"; }

std::string_view scene_status_name(SceneStatus s) {
  switch (s) {
    case SceneStatus::kPending: return "pending";
    case SceneStatus::kInReview: return "in_review";
    case SceneStatus::kApproved: return "approved";
  }
  return "";
}

std::optional<SceneStatus> scene_status_from_name(std::string_view name) {
  for (auto s : {SceneStatus::kPending, SceneStatus::kInReview, SceneStatus::kApproved}) {
    if (scene_status_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string_view edit_kind_name(EditKind k) {
  switch (k) {
    case EditKind::kAddRelation: return "add_relation";
    case EditKind::kRemoveRelation: return "remove_relation";
    case EditKind::kMoveSubtree: return "move_subtree";
    case EditKind::kRename: return "rename";
    case EditKind::kSetRelation: return "set_relation";
  }
  return "";
}

EditOp EditOp::add_relation(std::string parent, Relation r, std::string child) {
  EditOp op;
  op.kind = EditKind::kAddRelation;
  op.parent = std::move(parent);
  op.relation = r;
  op.child = std::move(child);
  return op;
}

EditOp EditOp::remove_relation(std::string parent, std::string child) {
  EditOp op;
  op.kind = EditKind::kRemoveRelation;
  op.parent = std::move(parent);
  op.child = std::move(child);
  return op;
}

EditOp EditOp::move_subtree(std::string child, std::string new_parent, Relation r) {
  EditOp op;
  op.kind = EditKind::kMoveSubtree;
  op.child = std::move(child);
  op.parent = std::move(new_parent);
  op.relation = r;
  return op;
}

EditOp EditOp::rename(std::string from, std::string to) {
  EditOp op;
  op.kind = EditKind::kRename;
  op.from = std::move(from);
  op.to = std::move(to);
  return op;
}

EditOp EditOp::set_relation(std::string parent, std::string child, Relation r) {
  EditOp op;
  op.kind = EditKind::kSetRelation;
  op.parent = std::move(parent);
  op.child = std::move(child);
  op.relation = r;
  return op;
}

ojson to_json(const EditOp& op) {
  ojson j{{"op", edit_kind_name(op.kind)}};
  switch (op.kind) {
    case EditKind::kAddRelation:
    case EditKind::kSetRelation:
      j["parent"] = op.parent;
      j["relation"] = relation_name(op.relation);
      j["child"] = op.child;
      break;
    case EditKind::kRemoveRelation:
      j["parent"] = op.parent;
      j["child"] = op.child;
      break;
    case EditKind::kMoveSubtree:
      j["child"] = op.child;
      j["newParent"] = op.parent;
      j["relation"] = relation_name(op.relation);
      break;
    case EditKind::kRename:
      j["old"] = op.from;
      j["new"] = op.to;
      break;
  }
  return j;
}

EditOp edit_op_from_json(const nlohmann::json& j) {
  try {
    const auto name = string_field(j, "op");
    if (name == "add_relation") {
      return EditOp::add_relation(string_field(j, "parent"), relation_field(j, "relation"), string_field(j, "child"));
    }
    if (name == "remove_relation") return EditOp::remove_relation(string_field(j, "parent"), string_field(j, "child"));
    if (name == "move_subtree") {
      return EditOp::move_subtree(string_field(j, "child"), string_field(j, "newParent"), relation_field(j, "relation"));
    }
    if (name == "rename") return EditOp::rename(string_field(j, "old"), string_field(j, "new"));
    if (name == "set_relation") {
      return EditOp::set_relation(string_field(j, "parent"), string_field(j, "child"), relation_field(j, "relation"));
    }
    throw Error(ErrorCode::kSchemaViolation, "unknown op \"" + name + "\"");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("edit op: ") + e.what());
  }
}

ojson to_json(const Correction& c) {
  ojson ops = ojson::array();
  for (const auto& op : c.ops) ops.push_back(to_json(op));
  return ojson{{"baseRevisionId", c.base_revision ? ojson(*c.base_revision) : ojson()}, {"ops", ops}};
}

Correction correction_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kSchemaViolation, "correction must be an object");
  Correction c;
  const auto base = j.find("baseRevisionId");
  if (base == j.end()) throw Error(ErrorCode::kSchemaViolation, "missing baseRevisionId");
  if (!base->is_null()) {
    if (!base->is_number_integer()) throw Error(ErrorCode::kSchemaViolation, "baseRevisionId must be an integer");
    c.base_revision = base->get<int>();
  }
  const auto ops = j.find("ops");
  if (ops == j.end() || !ops->is_array()) throw Error(ErrorCode::kSchemaViolation, "ops must be an array");
  for (const auto& op : *ops) c.ops.push_back(edit_op_from_json(op));
  return c;
}

void apply_ops(SceneGraph& g, const std::vector<EditOp>& ops) {
  SceneGraph work = g;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    try {
      switch (op.kind) {
        case EditKind::kAddRelation:
          work.add_child(op.parent, op.relation, op.child);
          break;
        case EditKind::kRemoveRelation: {
          const auto link = work.parent_of(op.child);
          if (!link || link->parent != op.parent) {
            throw Error(ErrorCode::kInvalidEdit, "'" + op.child + "' is not a child of '" + op.parent + "'");
          }
          work.detach(op.child);
          break;
        }
        case EditKind::kMoveSubtree: {
          if (!work.contains(op.child)) throw Error(ErrorCode::kInvalidEdit, "unknown node '" + op.child + "'");
          if (op.parent == op.child || work.is_descendant(op.child, op.parent)) {
            throw Error(ErrorCode::kInvalidEdit, "'" + op.parent + "' is inside the subtree of '" + op.child + "'");
          }
          if (!work.contains(op.parent)) throw Error(ErrorCode::kInvalidEdit, "unknown parent '" + op.parent + "'");
          auto subtree = work.detach(op.child);
          work.attach(op.parent, op.relation, std::move(subtree));
          break;
        }
        case EditKind::kRename:
          work.rename(op.from, op.to);
          break;
        case EditKind::kSetRelation:
          work.set_relation(op.parent, op.child, op.relation);
          break;
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidEdit,
                  "op " + std::to_string(i) + " (" + std::string(edit_kind_name(op.kind)) + "): " + e.detail());
    }
  }
  require_valid(work, ErrorCode::kInvalidEdit);
  g = std::move(work);
}

StaleBase::StaleBase(int latest)
    : Error(ErrorCode::kStaleBase, "latest revision is " + std::to_string(latest)), latest_(latest) {}

ojson to_json(const SceneSummary& s) {
  return ojson{{"sceneId", s.scene_id},
               {"status", scene_status_name(s.status)},
               {"revisionCount", s.revision_count},
               {"objectCount", s.object_count}};
}

ojson to_json(const SceneRecord& r) {
  ojson revs = ojson::array();
  for (const auto& rev : r.revisions) {
    revs.push_back({{"revisionId", rev.id},
                    {"author", author_name(rev.author)},
                    {"timestamp", rev.timestamp},
                    {"graph", graph_json(rev.graph)}});
  }
  return ojson{{"sceneId", r.scene_id},
               {"imageRef", r.image_ref},
               {"objectList", r.object_list},
               {"status", scene_status_name(r.status)},
               {"latestRevisionId", r.revisions.empty() ? ojson() : ojson(r.latest_revision())},
               {"approvedRevisionId", r.approved_revision ? ojson(*r.approved_revision) : ojson()},
               {"acceptedAsIs", r.accepted_as_is},
               {"revisions", revs}};
}

// ---------------------------------------------------------------------------

SceneStore::SceneStore(fs::path root, StoreOptions options) : root_(std::move(root)), options_(std::move(options)) {
  std::error_code ec;
  fs::create_directories(root_ / "scenes", ec);
  fs::create_directories(root_ / "blobs", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create store at " + root_.string() + ": " + ec.message());
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(root_ / "scenes")) {
    if (entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) replay(log);
}

std::string SceneStore::now() const { return options_.clock ? options_.clock() : utc_now(); }

fs::path SceneStore::log_path(const std::string& scene_id) const { return root_ / "scenes" / (scene_id + ".jsonl"); }

void SceneStore::replay(const fs::path& log) {
  std::ifstream in(log, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + log.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  // A crash can leave a torn final line; anything before it is intact.
  if (!text.empty() && text.back() != '\n') {
    const auto keep = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
    text.resize(keep);
    fs::resize_file(log, keep);
  }

  auto entry = std::make_unique<Entry>();
  SceneRecord& r = entry->record;
  std::istringstream lines(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(lines, line);) {
    ++line_no;
    const auto where = log.filename().string() + ":" + std::to_string(line_no);
    try {
      const auto ev = nlohmann::json::parse(line);
      const auto type = ev.at("event").get<std::string>();
      if (type == "created") {
        r.scene_id = ev.at("sceneId").get<std::string>();
        r.image_ref = ev.at("imageRef").get<std::string>();
        r.object_list = ev.at("objectList").get<std::vector<std::string>>();
      } else if (type == "revision") {
        Revision rev;
        rev.id = ev.at("revisionId").get<int>();
        rev.author = ev.at("author").get<std::string>() == "human" ? Author::kHuman : Author::kModel;
        rev.timestamp = ev.at("timestamp").get<std::string>();
        rev.graph = graph_from_json(ev.at("graph"));
        if (rev.id != r.latest_revision() + 1) throw Error(ErrorCode::kIo, "revision ids out of sequence");
        r.revisions.push_back(std::move(rev));
      } else if (type == "status") {
        auto s = scene_status_from_name(ev.at("status").get<std::string>());
        if (!s) throw Error(ErrorCode::kIo, "unknown status");
        r.status = *s;
      } else if (type == "approved") {
        r.status = SceneStatus::kApproved;
        r.approved_revision = ev.at("revisionId").get<int>();
        r.accepted_as_is = r.accepted_as_is || ev.at("acceptAsIs").get<bool>();
      } else {
        throw Error(ErrorCode::kIo, "unknown event \"" + type + "\"");
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::kIo, where + ": " + e.detail());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIo, where + ": " + e.what());
    }
  }
  if (r.scene_id.empty()) return;
  if (r.scene_id + ".jsonl" != log.filename().string()) {
    throw Error(ErrorCode::kIo, log.string() + ": scene id does not match file name");
  }
  int number = 0;
  if (std::sscanf(r.scene_id.c_str(), "scene-%d", &number) == 1) next_id_ = std::max(next_id_, number + 1);
  scenes_.emplace(r.scene_id, std::move(entry));
}

SceneStore::Entry* SceneStore::find(const std::string& scene_id) const {
  std::shared_lock lock(mutex_);
  auto it = scenes_.find(scene_id);
  if (it == scenes_.end()) throw Error(ErrorCode::kUnknownScene, scene_id);
  return it->second.get();
}

std::string SceneStore::enqueue(const std::string& image_ref, std::vector<std::string> object_list,
                                const std::optional<SceneGraph>& proposal) {
  if (image_ref.empty()) throw Error(ErrorCode::kInvalidArgument, "imageRef is empty");
  if (proposal) {
    require_valid(*proposal, ErrorCode::kMalformedGraph);
    if (object_list.empty()) {
      for (const auto& l : labels_preorder(*proposal)) {
        if (!is_root_label(l)) object_list.push_back(l);
      }
    }
  }
  if (object_list.empty()) throw Error(ErrorCode::kInvalidArgument, "objectList is empty and no proposal was given");

  std::unique_lock lock(mutex_);
  for (const auto& [id, entry] : scenes_) {
    std::shared_lock scene_lock(entry->mutex);
    if (entry->record.image_ref == image_ref && entry->record.status != SceneStatus::kApproved) {
      throw Error(ErrorCode::kDuplicateImage, image_ref + " is already queued as " + id);
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene-%06d", next_id_);
  const std::string scene_id = buf;

  auto entry = std::make_unique<Entry>();
  SceneRecord& r = entry->record;
  r.scene_id = scene_id;
  r.image_ref = image_ref;
  r.object_list = std::move(object_list);
  std::string lines = ojson{{"event", "created"},
                            {"sceneId", scene_id},
                            {"imageRef", image_ref},
                            {"objectList", r.object_list},
                            {"timestamp", now()}}
                          .dump() +
                      "\n";
  if (proposal) {
    Revision rev{0, *proposal, Author::kModel, now()};
    lines += ojson{{"event", "revision"},
                   {"revisionId", 0},
                   {"author", "model"},
                   {"timestamp", rev.timestamp},
                   {"graph", graph_json(rev.graph)}}
                 .dump() +
             "\n";
    r.revisions.push_back(std::move(rev));
  }
  append_durable(log_path(scene_id), lines);
  ++next_id_;
  scenes_.emplace(scene_id, std::move(entry));
  return scene_id;
}

int SceneStore::apply_correction(const std::string& scene_id, const Correction& c) {
  Entry* entry = find(scene_id);
  std::unique_lock lock(entry->mutex);
  SceneRecord& r = entry->record;
  const int latest = r.latest_revision();
  if (c.base_revision.value_or(-1) != latest) throw StaleBase(latest);

  SceneGraph g = r.revisions.empty() ? SceneGraph{} : r.revisions.back().graph;
  apply_ops(g, c.ops);

  Revision rev{latest + 1, std::move(g), Author::kHuman, now()};
  ojson ops = ojson::array();
  for (const auto& op : c.ops) ops.push_back(to_json(op));
  std::string lines;
  if (r.status == SceneStatus::kPending) {
    lines += ojson{{"event", "status"}, {"status", "in_review"}, {"timestamp", rev.timestamp}}.dump() + "\n";
  }
  lines += ojson{{"event", "revision"},
                 {"revisionId", rev.id},
                 {"author", "human"},
                 {"timestamp", rev.timestamp},
                 {"baseRevisionId", latest < 0 ? ojson() : ojson(latest)},
                 {"ops", ops},
                 {"graph", graph_json(rev.graph)}}
               .dump() +
           "\n";
  append_durable(log_path(scene_id), lines);
  if (r.status == SceneStatus::kPending) r.status = SceneStatus::kInReview;
  r.revisions.push_back(std::move(rev));
  return r.latest_revision();
}

int SceneStore::approve(const std::string& scene_id, bool accept_as_is) {
  Entry* entry = find(scene_id);
  std::unique_lock lock(entry->mutex);
  SceneRecord& r = entry->record;
  if (r.revisions.empty()) throw Error(ErrorCode::kInvalidTransition, scene_id + " has no revision to approve");
  const int latest = r.latest_revision();
  if (r.status == SceneStatus::kApproved && r.approved_revision == latest) return latest;
  const bool reviewed = std::any_of(r.revisions.begin(), r.revisions.end(),
                                    [](const Revision& rev) { return rev.author == Author::kHuman; });
  if (!reviewed && !accept_as_is) {
    throw Error(ErrorCode::kInvalidTransition, scene_id + " has no human revision; approve with acceptAsIs");
  }
  const std::string ts = now();
  std::string lines;
  if (r.status == SceneStatus::kPending) {
    lines += ojson{{"event", "status"}, {"status", "in_review"}, {"timestamp", ts}}.dump() + "\n";
  }
  lines += ojson{{"event", "approved"}, {"revisionId", latest}, {"acceptAsIs", accept_as_is}, {"timestamp", ts}}
               .dump() +
           "\n";
  append_durable(log_path(scene_id), lines);
  r.status = SceneStatus::kApproved;
  r.approved_revision = latest;
  r.accepted_as_is = r.accepted_as_is || accept_as_is;
  return latest;
}

SceneRecord SceneStore::get(const std::string& scene_id) const {
  Entry* entry = find(scene_id);
  std::shared_lock lock(entry->mutex);
  return entry->record;
}

std::vector<SceneSummary> SceneStore::queue(std::optional<SceneStatus> status, std::size_t page,
                                            std::size_t page_size) const {
  if (page_size == 0) throw Error(ErrorCode::kInvalidArgument, "page size must be positive");
  std::vector<SceneSummary> out;
  std::size_t skip = page * page_size;
  std::shared_lock lock(mutex_);
  for (const auto& [id, entry] : scenes_) {
    std::shared_lock scene_lock(entry->mutex);
    const SceneRecord& r = entry->record;
    if (status && r.status != *status) continue;
    if (skip > 0) {
      --skip;
      continue;
    }
    out.push_back({id, r.status, r.revisions.size(),
                   r.revisions.empty() ? r.object_list.size() : object_count(r.revisions.back().graph)});
    if (out.size() == page_size) break;
  }
  return out;
}

std::size_t SceneStore::count(std::optional<SceneStatus> status) const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, entry] : scenes_) {
    std::shared_lock scene_lock(entry->mutex);
    if (!status || entry->record.status == *status) ++n;
  }
  return n;
}

std::string SceneStore::export_jsonl() const {
  std::vector<QARecord> records;
  std::shared_lock lock(mutex_);
  for (const auto& [id, entry] : scenes_) {
    std::shared_lock scene_lock(entry->mutex);
    const SceneRecord& r = entry->record;
    if (r.status != SceneStatus::kApproved || !r.approved_revision) continue;
    auto rec = gen_graph_qa(r.revisions.at(static_cast<std::size_t>(*r.approved_revision)).graph, r.image_ref, id);
    rec.provenance = Provenance::kApproved;
    records.push_back(std::move(rec));
  }
  return to_jsonl(records);
}

std::string SceneStore::put_blob(std::string_view bytes) {
  const std::string ref = content_ref(bytes);
  const fs::path path = root_ / "blobs" / ref.substr(7);
  if (fs::exists(path)) return ref;
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid()) + "-" +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "cannot write blob " + ref);
  }
  fs::rename(tmp, path);
  return ref;
}

std::optional<std::string> SceneStore::get_blob(const std::string& ref) const {
  std::string hex;
  if (!valid_hex_ref(ref, hex)) return std::nullopt;
  std::ifstream in(root_ / "blobs" / hex, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace roomgraph
