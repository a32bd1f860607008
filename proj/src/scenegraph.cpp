#include "roomgraph/scenegraph.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "roomgraph/error.hpp"

namespace roomgraph {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 4> kRelationNames = {"support", "contain", "hang", "attach"};

void for_each_preorder(const SceneNode& node, int depth,
                       const std::function<void(const SceneNode&, int)>& fn) {
  fn(node, depth);
  for (const auto& edge : node.children) for_each_preorder(edge.child, depth + 1, fn);
}

void for_each_preorder_mutable(SceneNode& node, const std::function<void(SceneNode&)>& fn) {
  fn(node);
  for (auto& edge : node.children) for_each_preorder_mutable(edge.child, fn);
}

SceneNode* find_in(SceneNode& node, std::string_view label) {
  if (node.label == label) return &node;
  for (auto& edge : node.children) {
    if (auto* hit = find_in(edge.child, label)) return hit;
  }
  return nullptr;
}

// Returns the node that owns `label` as a direct child.
SceneNode* find_parent_in(SceneNode& node, std::string_view label) {
  for (auto& edge : node.children) {
    if (edge.child.label == label) return &node;
    if (auto* hit = find_parent_in(edge.child, label)) return hit;
  }
  return nullptr;
}

[[noreturn]] void invalid_edit(const std::string& what) { throw Error(ErrorCode::kInvalidEdit, what); }

void parse_body(const ordered_json& body, SceneNode& node) {
  if (body.is_null()) return;
  if (!body.is_object()) {
    throw Error(ErrorCode::kMalformedGraph, "body of '" + node.label + "' is not an object");
  }
  for (const auto& [key, value] : body.items()) {
    auto relation = relation_from_name(trim(key));
    if (!relation) throw Error(ErrorCode::kUnknownRelation, key);
    if (!value.is_array()) {
      throw Error(ErrorCode::kMalformedGraph,
                  "relation '" + key + "' of '" + node.label + "' is not a list");
    }
    for (const auto& entry : value) {
      if (!entry.is_object() || entry.size() != 1) {
        throw Error(ErrorCode::kMalformedGraph,
                    "children of '" + node.label + "' must be single-key objects");
      }
      auto it = entry.begin();
      SceneNode child{trim(it.key()), {}};
      if (child.label.empty()) throw Error(ErrorCode::kMalformedGraph, "empty label");
      parse_body(it.value(), child);
      insert_edge(node, SceneEdge{*relation, std::move(child)});
    }
  }
}

ordered_json node_body(const SceneNode& node) {
  ordered_json body = ordered_json::object();
  for (Relation r : kAllRelations) {
    ordered_json list = ordered_json::array();
    for (const auto& edge : node.children) {
      if (edge.relation != r) continue;
      ordered_json entry = ordered_json::object();
      entry[edge.child.label] = node_body(edge.child);
      list.push_back(std::move(entry));
    }
    if (!list.empty()) body[std::string(relation_name(r))] = std::move(list);
  }
  return body;
}

// Renames non-root duplicates in place; root labels are reserved, so a
// nested "floor" becomes "floor_0".
void resolve_duplicates(std::array<SceneNode, 3>& roots, DuplicatePolicy policy) {
  std::vector<SceneNode*> order;
  for (auto& root : roots) {
    for (auto& edge : root.children) {
      for_each_preorder_mutable(edge.child, [&](SceneNode& n) { order.push_back(&n); });
    }
  }
  std::vector<std::string> labels;
  labels.reserve(order.size());
  for (auto* n : order) labels.push_back(n->label);
  std::set<std::string> reserved;
  for (const auto& root : roots) reserved.insert(root.label);

  auto renamed = assign_unique_labels(labels, reserved);
  if (renamed == labels) return;
  if (policy == DuplicatePolicy::kReject) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (renamed[i] != labels[i]) throw Error(ErrorCode::kDuplicateLabel, labels[i]);
    }
  }
  for (std::size_t i = 0; i < order.size(); ++i) order[i]->label = std::move(renamed[i]);
}

}  // namespace

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string_view relation_name(Relation r) { return kRelationNames[static_cast<std::size_t>(r)]; }

std::optional<Relation> relation_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kRelationNames.size(); ++i) {
    if (kRelationNames[i] == name) return static_cast<Relation>(i);
  }
  return std::nullopt;
}

bool SceneNode::operator==(const SceneNode& other) const {
  return label == other.label && children == other.children;
}

bool is_root_label(std::string_view label) {
  return std::find(SceneGraph::kRootLabels.begin(), SceneGraph::kRootLabels.end(), label) !=
         SceneGraph::kRootLabels.end();
}

void insert_edge(SceneNode& node, SceneEdge edge) {
  auto pos = std::find_if(node.children.begin(), node.children.end(),
                          [&](const SceneEdge& e) { return e.relation > edge.relation; });
  node.children.insert(pos, std::move(edge));
}

SceneGraph::SceneGraph() {
  for (std::size_t i = 0; i < kRootLabels.size(); ++i) roots_[i].label = std::string(kRootLabels[i]);
}

std::size_t SceneGraph::node_count() const {
  std::size_t n = 0;
  for (const auto& root : roots_) for_each_preorder(root, 0, [&](const SceneNode&, int) { ++n; });
  return n;
}

const SceneNode* SceneGraph::find(std::string_view label) const {
  return const_cast<SceneGraph*>(this)->find_mutable(label);
}

SceneNode* SceneGraph::find_mutable(std::string_view label) {
  for (auto& root : roots_) {
    if (auto* hit = find_in(root, label)) return hit;
  }
  return nullptr;
}

bool SceneGraph::contains(std::string_view label) const { return find(label) != nullptr; }

std::optional<ParentLink> SceneGraph::parent_of(std::string_view label) const {
  for (const auto& root : roots_) {
    auto* parent = find_parent_in(const_cast<SceneNode&>(root), label);
    if (!parent) continue;
    for (const auto& edge : parent->children) {
      if (edge.child.label == label) return ParentLink{parent->label, edge.relation};
    }
  }
  return std::nullopt;
}

bool SceneGraph::is_descendant(std::string_view ancestor, std::string_view label) const {
  const SceneNode* a = find(ancestor);
  if (!a) return false;
  bool hit = false;
  for (const auto& edge : a->children) {
    for_each_preorder(edge.child, 0, [&](const SceneNode& n, int) { hit = hit || n.label == label; });
  }
  return hit;
}

void SceneGraph::add_child(std::string_view parent, Relation relation, std::string child) {
  attach(parent, relation, SceneNode{std::move(child), {}});
}

void SceneGraph::attach(std::string_view parent, Relation relation, SceneNode subtree) {
  SceneNode* p = find_mutable(parent);
  if (!p) invalid_edit("unknown parent '" + std::string(parent) + "'");
  std::vector<std::string> incoming;
  for_each_preorder(subtree, 0, [&](const SceneNode& n, int) { incoming.push_back(n.label); });
  std::unordered_set<std::string> unique;
  for (auto& label : incoming) {
    if (trim(label).empty() || trim(label) != label) invalid_edit("invalid label '" + label + "'");
    if (contains(label) || !unique.insert(label).second) {
      invalid_edit("'" + label + "' already has a parent");
    }
  }
  insert_edge(*p, SceneEdge{relation, std::move(subtree)});
}

SceneNode SceneGraph::detach(std::string_view label) {
  if (is_root_label(label)) invalid_edit("root '" + std::string(label) + "' cannot be detached");
  for (auto& root : roots_) {
    SceneNode* parent = find_parent_in(root, label);
    if (!parent) continue;
    auto it = std::find_if(parent->children.begin(), parent->children.end(),
                           [&](const SceneEdge& e) { return e.child.label == label; });
    SceneNode out = std::move(it->child);
    parent->children.erase(it);
    return out;
  }
  invalid_edit("unknown node '" + std::string(label) + "'");
}

void SceneGraph::rename(std::string_view from, std::string to) {
  if (is_root_label(from)) invalid_edit("root '" + std::string(from) + "' cannot be renamed");
  if (trim(to).empty() || trim(to) != to) invalid_edit("invalid label '" + to + "'");
  SceneNode* n = find_mutable(from);
  if (!n) invalid_edit("unknown node '" + std::string(from) + "'");
  if (from == to) return;
  if (contains(to)) invalid_edit("label '" + to + "' already exists");
  n->label = std::move(to);
}

void SceneGraph::set_relation(std::string_view parent, std::string_view child, Relation relation) {
  SceneNode* p = find_mutable(parent);
  if (!p) invalid_edit("unknown parent '" + std::string(parent) + "'");
  auto it = std::find_if(p->children.begin(), p->children.end(),
                         [&](const SceneEdge& e) { return e.child.label == child; });
  if (it == p->children.end()) {
    invalid_edit("'" + std::string(child) + "' is not a child of '" + std::string(parent) + "'");
  }
  if (it->relation == relation) return;
  SceneEdge edge = std::move(*it);
  p->children.erase(it);
  edge.relation = relation;
  insert_edge(*p, std::move(edge));
}

SceneGraph parse_graph(std::string_view text, const ParseOptions& options) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kMalformedJson, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kMalformedJson, "top-level value is not an object");

  SceneGraph g;
  std::array<SceneNode, 3> roots;
  for (std::size_t i = 0; i < 3; ++i) roots[i].label = std::string(SceneGraph::kRootLabels[i]);
  for (const auto& [key, value] : doc.items()) {
    std::string label = trim(key);
    auto it = std::find(SceneGraph::kRootLabels.begin(), SceneGraph::kRootLabels.end(), label);
    if (it == SceneGraph::kRootLabels.end()) throw Error(ErrorCode::kNonRootTopLevelKey, key);
    parse_body(value, roots[static_cast<std::size_t>(it - SceneGraph::kRootLabels.begin())]);
  }
  resolve_duplicates(roots, options.duplicates);
  for (std::size_t i = 0; i < 3; ++i) {
    for (auto& edge : roots[i].children) {
      g.attach(SceneGraph::kRootLabels[i], edge.relation, std::move(edge.child));
    }
  }
  return g;
}

std::string serialize_graph(const SceneGraph& g) {
  ordered_json doc = ordered_json::object();
  for (const auto& root : g.roots()) doc[root.label] = node_body(root);
  return doc.dump(4, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::optional<std::string> extract_json_block(std::string_view model_output) {
  std::string text(model_output);
  // Blank out ``` fences together with an optional language tag.
  for (std::size_t pos = text.find("```"); pos != std::string::npos; pos = text.find("```", pos)) {
    std::size_t end = pos + 3;
    while (end < text.size() && std::isalnum(static_cast<unsigned char>(text[end]))) ++end;
    std::fill(text.begin() + static_cast<std::ptrdiff_t>(pos),
              text.begin() + static_cast<std::ptrdiff_t>(end), ' ');
    pos = end;
  }
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        std::string candidate = text.substr(start, i - start + 1);
        if (nlohmann::json::accept(candidate)) return candidate;
        break;
      }
    }
  }
  return std::nullopt;
}

std::vector<RelationTriple> to_pairwise(const SceneGraph& g) {
  std::vector<RelationTriple> out;
  for (const auto& root : g.roots()) {
    for_each_preorder(root, 0, [&](const SceneNode& n, int) {
      for (const auto& edge : n.children) out.push_back({n.label, edge.relation, edge.child.label});
    });
  }
  return out;
}

std::vector<ObjectRelationUnit> to_objectwise(const SceneGraph& g) {
  std::vector<ObjectRelationUnit> units;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& label : labels_preorder(g)) {
    index.emplace(label, units.size());
    units.push_back({label, {}});
  }
  for (const auto& t : to_pairwise(g)) {
    units[index.at(t.parent)].relations.push_back(t);
    units[index.at(t.child)].relations.push_back(t);
  }
  for (auto& u : units) std::sort(u.relations.begin(), u.relations.end());
  return units;
}

std::vector<LayerUnit> layers(const SceneGraph& g) {
  std::map<int, std::set<std::string>> by_depth;
  for (const auto& root : g.roots()) {
    for_each_preorder(root, 0, [&](const SceneNode& n, int d) { by_depth[d].insert(n.label); });
  }
  std::vector<LayerUnit> out;
  for (auto& [depth, labels] : by_depth) out.push_back({depth, std::move(labels)});
  return out;
}

std::set<std::string> nodes(const SceneGraph& g) {
  auto list = labels_preorder(g);
  return {list.begin(), list.end()};
}

std::vector<std::string> labels_preorder(const SceneGraph& g) {
  std::vector<std::string> out;
  for (const auto& root : g.roots()) {
    for_each_preorder(root, 0, [&](const SceneNode& n, int) { out.push_back(n.label); });
  }
  return out;
}

ValidationReport validate(const SceneGraph& g) {
  ValidationReport report;
  std::unordered_map<std::string, int> counts;
  for (const auto& label : labels_preorder(g)) {
    if (label.empty()) report.errors.push_back({"EmptyLabel", "node with empty label"});
    if (++counts[label] == 2) report.errors.push_back({"DuplicateLabel", label});
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (g.roots()[i].label != SceneGraph::kRootLabels[i]) {
      report.errors.push_back({"MissingRoot", std::string(SceneGraph::kRootLabels[i])});
    }
  }

  // Relations a root is expected to carry; anything else is a soft warning
  // because real scenes routinely break the priors.
  auto expected = [](std::string_view root, Relation r) {
    if (root == "ceiling") return r == Relation::kAttach || r == Relation::kHang;
    if (root == "wall") return r == Relation::kHang;
    return r == Relation::kSupport;
  };
  for (const auto& root : g.roots()) {
    for (const auto& edge : root.children) {
      if (!expected(root.label, edge.relation)) {
        report.warnings.push_back(
            {"PriorViolation", root.label + " " + std::string(relation_name(edge.relation)) + " " +
                                   edge.child.label});
      }
    }
  }
  return report;
}

ValidationReport validate_document(std::string_view text) {
  try {
    return validate(parse_graph(text, {DuplicatePolicy::kReject}));
  } catch (const Error& e) {
    ValidationReport report;
    report.errors.push_back({std::string(error_code_name(e.code())), e.detail()});
    return report;
  }
}

std::vector<std::string> assign_unique_labels(const std::vector<std::string>& labels,
                                              const std::set<std::string>& reserved) {
  std::unordered_map<std::string, int> counts;
  for (const auto& l : labels) counts[l] += reserved.count(l) ? 2 : 1;
  std::unordered_set<std::string> taken(labels.begin(), labels.end());
  taken.insert(reserved.begin(), reserved.end());
  std::unordered_map<std::string, int> next;
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    if (counts[l] == 1) {
      out.push_back(l);
      continue;
    }
    int& k = next[l];
    std::string candidate;
    do {
      candidate = l + "_" + std::to_string(k++);
    } while (taken.count(candidate));
    taken.insert(candidate);
    out.push_back(std::move(candidate));
  }
  return out;
}

}  // namespace roomgraph
