#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "roomgraph/geometry.hpp"
#include "roomgraph/scenegraph.hpp"

namespace roomgraph {

struct TemplateBank {
  std::vector<std::string> single;  // [A] [B]
  std::vector<std::string> dual;    // [A]..[D]
  std::vector<std::string> triple;  // [A]..[F]

  static TemplateBank defaults();
  /// TOML with arrays `single`, `dual`, `triple`.
  static TemplateBank from_toml(std::string_view text);
  static TemplateBank load(const std::filesystem::path& path);
  std::string to_toml() const;

  /// 15 templates per kind, each placeholder of its kind exactly once and
  /// no foreign placeholders. Throws Error(kConfig).
  void validate() const;
  std::size_t size() const { return single.size() + dual.size() + triple.size(); }
};

enum class QaTask { kGraph, kDistance };
enum class Provenance { kGenerated, kCorrected, kApproved };

std::string_view qa_task_name(QaTask t);
std::string_view provenance_name(Provenance p);

struct DistanceItem {
  std::string a;
  std::string b;
  double meters = 0.0;
};

struct QARecord {
  std::string id;
  std::string image;
  QaTask task = QaTask::kGraph;
  std::string question;
  std::string answer;
  std::optional<SceneGraph> graph;       // graph task payload
  std::vector<DistanceItem> distances;   // distance task payload
  Provenance provenance = Provenance::kGenerated;
  std::string source;                    // optional dataset tag
  std::string split;                     // optional, e.g. "test"
};

nlohmann::ordered_json to_json(const QARecord& r);
QARecord qa_record_from_json(const nlohmann::json& j);
std::string to_jsonl(const std::vector<QARecord>& records);
std::vector<QARecord> read_jsonl(std::string_view text);

/// One decimal, half-up on the exact value, "m" suffix: 2.1 -> "2.1m".
std::string format_meters(double meters);

struct DistanceQaOptions {
  std::size_t single = 1;
  std::size_t dual = 0;
  std::size_t triple = 0;
  std::string image;
  std::string id_prefix = "dist";
};

/// Record k draws from its own generator seeded from (seed, k), so any
/// partition of the index range yields the same records.
std::vector<QARecord> gen_distance_qa(const DistanceMatrix& d, const TemplateBank& bank, std::uint64_t seed,
                                      const DistanceQaOptions& options = {});
/// Record at global index k with `pairs` distances (1..3).
QARecord gen_distance_record(const DistanceMatrix& d, const TemplateBank& bank, std::uint64_t seed, int pairs,
                             std::size_t k, const DistanceQaOptions& options = {});

/// One sentence per (parent, relation) group, parents in preorder.
std::vector<std::string> gen_graph_cot_sentences(const SceneGraph& g);
std::string gen_graph_cot(const SceneGraph& g);

QARecord gen_graph_qa(const SceneGraph& g, const std::string& image, const std::string& id = "");

/// JSON block of a generated graph answer (text after the final blank line),
/// falling back to extract_json_block for free-form text.
std::optional<std::string> graph_answer_json(std::string_view answer);

struct SceneFilterDecision {
  bool keep = false;
  std::string reason;  // winning negative prompt when dropped
};

/// Positive and negative prompt texts in backend request order.
std::vector<std::string> scene_filter_prompts();
/// Scores keyed by prompt text. Keep iff the positive prompt strictly beats
/// every negative. Throws Error(kMissingPromptScore).
SceneFilterDecision filter_scene_image(const std::map<std::string, double>& scores);

struct FilterRuleSet {
  std::vector<std::string> structure_terms;
  std::vector<std::string> human_terms;
  std::vector<std::string> outdoor_terms;
  std::vector<std::string> non_entity_terms;
  bool english_only = true;
  bool garbled_heuristic = true;
  double garbled_threshold = 0.3;

  static FilterRuleSet defaults();
  static FilterRuleSet from_toml(std::string_view text);
  static FilterRuleSet load(const std::filesystem::path& path);
  std::string to_toml() const;
  /// Lowercases, trims and deduplicates the term lists.
  void normalize();
};

struct DroppedLabel {
  std::string label;
  std::string reason;  // "garbled", "non_english", "structure:<term>", ...
};

struct VocabularyFilterResult {
  std::vector<std::string> kept;
  std::vector<DroppedLabel> dropped;
};

VocabularyFilterResult filter_vocabulary(const std::vector<std::string>& labels, const FilterRuleSet& rules);

struct SourceCounts {
  std::size_t graph = 0;
  std::size_t distance = 0;
  std::size_t test = 0;
};

struct DatasetStats {
  std::size_t records = 0;
  SourceCounts total;
  std::map<std::string, SourceCounts> by_source;  // "" for untagged records
  std::map<std::string, std::size_t> by_provenance;
  std::size_t distinct_labels = 0;
  double mean_objects_per_graph = 0.0;
};

DatasetStats dataset_stats(const std::vector<QARecord>& records);
nlohmann::ordered_json to_json(const DatasetStats& s);

}  // namespace roomgraph
