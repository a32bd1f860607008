#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace roomgraph {

/// Spatial relation carried by a parent -> child edge. The enumerator order
/// is the canonical serialization order.
enum class Relation { kSupport, kContain, kHang, kAttach };

inline constexpr std::array<Relation, 4> kAllRelations = {
    Relation::kSupport, Relation::kContain, Relation::kHang, Relation::kAttach};

std::string_view relation_name(Relation r);
std::optional<Relation> relation_from_name(std::string_view name);

struct SceneEdge;

struct SceneNode {
  std::string label;
  // Grouped by relation in canonical order; insertion order within a group.
  std::vector<SceneEdge> children;

  bool operator==(const SceneNode&) const;
};

struct SceneEdge {
  Relation relation;
  SceneNode child;

  bool operator==(const SceneEdge&) const = default;
};

struct ParentLink {
  std::string parent;
  Relation relation;
};

/// Hierarchical indoor scene graph: a forest under the three fixed roots
/// "ceiling", "wall" and "floor". Labels are unique across the graph.
class SceneGraph {
 public:
  static constexpr std::array<std::string_view, 3> kRootLabels = {"ceiling", "wall", "floor"};

  SceneGraph();

  const std::array<SceneNode, 3>& roots() const { return roots_; }
  std::size_t node_count() const;
  bool contains(std::string_view label) const;
  const SceneNode* find(std::string_view label) const;
  std::optional<ParentLink> parent_of(std::string_view label) const;
  bool is_descendant(std::string_view ancestor, std::string_view label) const;

  // Structural edits. Each throws Error(kInvalidEdit) when it would break the
  // tree (unknown parent, duplicate label, cycle, moving a root...).
  void add_child(std::string_view parent, Relation relation, std::string child);
  void attach(std::string_view parent, Relation relation, SceneNode subtree);
  SceneNode detach(std::string_view label);
  void rename(std::string_view from, std::string to);
  void set_relation(std::string_view parent, std::string_view child, Relation relation);

  bool operator==(const SceneGraph&) const = default;

 private:
  SceneNode* find_mutable(std::string_view label);

  std::array<SceneNode, 3> roots_;
};

bool is_root_label(std::string_view label);

/// Inserts an edge keeping the canonical relation grouping of `node`.
void insert_edge(SceneNode& node, SceneEdge edge);

struct RelationTriple {
  std::string parent;
  Relation relation;
  std::string child;

  auto operator<=>(const RelationTriple&) const = default;
};

struct ObjectRelationUnit {
  std::string label;
  std::vector<RelationTriple> relations;  // sorted

  auto operator<=>(const ObjectRelationUnit&) const = default;
};

struct LayerUnit {
  int depth = 0;
  std::set<std::string> labels;

  auto operator<=>(const LayerUnit&) const = default;
};

enum class DuplicatePolicy {
  kSuffix,  // rename every member of a duplicate group to label_0, label_1, ...
  kReject,  // strict: Error(kDuplicateLabel)
};

struct ParseOptions {
  DuplicatePolicy duplicates = DuplicatePolicy::kSuffix;
};

SceneGraph parse_graph(std::string_view text, const ParseOptions& options = {});
std::string serialize_graph(const SceneGraph& g);

/// First parseable outermost {...} block of free-form model output, with
/// markdown code fences ignored. Absence is a value, not an error.
std::optional<std::string> extract_json_block(std::string_view model_output);

std::vector<RelationTriple> to_pairwise(const SceneGraph& g);
std::vector<ObjectRelationUnit> to_objectwise(const SceneGraph& g);
std::vector<LayerUnit> layers(const SceneGraph& g);
std::set<std::string> nodes(const SceneGraph& g);
/// Preorder label list (roots first, in canonical order).
std::vector<std::string> labels_preorder(const SceneGraph& g);

struct Finding {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> errors;
  std::vector<Finding> warnings;

  bool ok() const { return errors.empty(); }
};

ValidationReport validate(const SceneGraph& g);
/// Parses (strict duplicates) and validates; parse failures become errors.
ValidationReport validate_document(std::string_view text);

/// Applies the numeric suffix policy to a label sequence: every label that
/// occurs more than once becomes label_k (k counted from 0 in order),
/// skipping suffixes already taken by other labels. A label in `reserved`
/// is always suffixed.
std::vector<std::string> assign_unique_labels(const std::vector<std::string>& labels,
                                              const std::set<std::string>& reserved = {});

std::string trim(std::string_view s);

}  // namespace roomgraph
