#pragma once

// Test-only reference model of a scene graph: a flat parent array that is
// rendered to JSON text by hand and decomposed by brute force. It shares no
// code with the library's tree walkers.

#include <algorithm>
#include <array>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace oracle {

inline const std::array<std::string, 4> kRelations = {"support", "contain", "hang", "attach"};

struct FlatTree {
  std::vector<std::string> labels;    // 0..2 are ceiling, wall, floor
  std::vector<int> parent;            // -1 for roots
  std::vector<std::string> relation;  // "" for roots
};

using Triple = std::tuple<std::string, std::string, std::string>;

inline FlatTree random_tree(std::mt19937_64& rng, int max_nodes = 12) {
  FlatTree t;
  t.labels = {"ceiling", "wall", "floor"};
  t.parent = {-1, -1, -1};
  t.relation = {"", "", ""};
  const int extra = static_cast<int>(rng() % static_cast<unsigned>(max_nodes - 3 + 1));
  static const std::array<std::string, 6> stems = {"mug", "desk", "table lamp", "book {1}", "shelf \"A\"", "Vase"};
  for (int i = 0; i < extra; ++i) {
    const int parent = static_cast<int>(rng() % t.labels.size());
    t.labels.push_back(stems[rng() % stems.size()] + " " + std::to_string(i));
    t.parent.push_back(parent);
    t.relation.push_back(kRelations[rng() % kRelations.size()]);
  }
  return t;
}

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string render_body(const FlatTree& t, int node) {
  // Relation keys in order of first appearance among the children.
  std::vector<std::string> order;
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    if (t.parent[i] == node && std::find(order.begin(), order.end(), t.relation[i]) == order.end()) {
      order.push_back(t.relation[i]);
    }
  }
  std::string out = "{";
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r) out += ",";
    out += quote(order[r]) + ":[";
    bool first = true;
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
      if (t.parent[i] != node || t.relation[i] != order[r]) continue;
      if (!first) out += ",";
      first = false;
      out += "{" + quote(t.labels[i]) + ":" + render_body(t, static_cast<int>(i)) + "}";
    }
    out += "]";
  }
  return out + "}";
}

inline std::string render_json(const FlatTree& t) {
  // floor first, then ceiling, then wall: a non-canonical root order.
  return "{\"floor\":" + render_body(t, 2) + ",\"ceiling\":" + render_body(t, 0) +
         ",\"wall\":" + render_body(t, 1) + "}";
}

inline std::vector<Triple> pairwise(const FlatTree& t) {
  std::vector<Triple> out;
  for (std::size_t i = 3; i < t.labels.size(); ++i) {
    out.emplace_back(t.labels[static_cast<std::size_t>(t.parent[i])], t.relation[i], t.labels[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::map<std::string, std::vector<Triple>> objectwise(const FlatTree& t) {
  std::map<std::string, std::vector<Triple>> out;
  for (const auto& label : t.labels) out[label];
  for (const auto& tr : pairwise(t)) {
    out[std::get<0>(tr)].push_back(tr);
    out[std::get<2>(tr)].push_back(tr);
  }
  for (auto& [label, list] : out) std::sort(list.begin(), list.end());
  return out;
}

inline std::map<int, std::set<std::string>> layers(const FlatTree& t) {
  std::map<int, std::set<std::string>> out;
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    int depth = 0;
    for (int p = t.parent[i]; p >= 0; p = t.parent[static_cast<std::size_t>(p)]) ++depth;
    out[depth].insert(t.labels[i]);
  }
  return out;
}

}  // namespace oracle
