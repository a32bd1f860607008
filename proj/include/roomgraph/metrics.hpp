#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "roomgraph/scenegraph.hpp"

namespace roomgraph {

struct MetricCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  MetricCounts& operator+=(const MetricCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const MetricCounts&) const = default;
};

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
};

/// Set-level confusion counts. Inputs are treated as sets: repeated
/// elements count once, and input order is irrelevant.
template <typename T>
MetricCounts set_counts(const std::vector<T>& gt, const std::vector<T>& pred) {
  std::set<T> g(gt.begin(), gt.end());
  std::set<T> p(pred.begin(), pred.end());
  MetricCounts c;
  for (const auto& x : p) (g.count(x) ? c.tp : c.fp) += 1;
  c.fn = g.size() - c.tp;
  return c;
}

/// Precision, recall, F1 and IoU. A 0/0 ratio is 1.0 for the perfect empty
/// match (all counts zero) and 0.0 otherwise.
Scores scores_from_counts(const MetricCounts& c);

enum class Perspective { kPairwise, kObjectwise, kLayerwise, kNode };
inline constexpr Perspective kAllPerspectives[] = {Perspective::kPairwise, Perspective::kObjectwise,
                                                   Perspective::kLayerwise, Perspective::kNode};
std::string_view perspective_name(Perspective p);  // "pra", "owa", "lwa", "nda"

struct PerspectiveResult {
  MetricCounts counts;
  Scores scores;
};

struct GraphEvalReport {
  bool json_parsed = false;
  // JSON loaded but did not form a valid scene graph (unknown relation,
  // non-root top-level key...). Scored like an unparsed prediction.
  bool graph_valid = false;
  std::string parse_error;
  PerspectiveResult pra, owa, lwa, nda;

  PerspectiveResult& at(Perspective p);
  const PerspectiveResult& at(Perspective p) const;
};

/// Per-perspective counts of a prediction graph against ground truth.
MetricCounts perspective_counts(const SceneGraph& gt, const SceneGraph& pred, Perspective p);
/// Number of ground-truth units under a perspective (what an empty
/// prediction misses).
std::size_t perspective_size(const SceneGraph& gt, Perspective p);

GraphEvalReport eval_graph(const SceneGraph& gt, std::string_view pred_text);

struct BatchPerspective {
  MetricCounts pooled;
  Scores micro;
  Scores macro;
};

struct GraphBatchReport {
  std::size_t samples = 0;
  std::size_t parsed = 0;
  double json_percent = 0.0;
  BatchPerspective pra, owa, lwa, nda;
  std::vector<GraphEvalReport> per_sample;

  BatchPerspective& at(Perspective p);
  const BatchPerspective& at(Perspective p) const;
};

struct GraphSample {
  SceneGraph gt;
  std::string prediction;
};

GraphBatchReport eval_graph_batch(const std::vector<GraphSample>& samples);

// ---------------------------------------------------------------------------
// Distance answers

/// First numeric token of a free-text answer, converted to meters.
/// Recognised units: m/meter(s)/metre(s) (or none), cm, mm, ft/feet/foot.
std::optional<double> parse_distance_answer(std::string_view text);
/// All numeric tokens in order, each converted to meters.
std::vector<double> parse_distance_answers(std::string_view text);

struct DistanceBand {
  double low = 0.0;   // percent of ground truth, inclusive
  double high = 0.0;  // percent of ground truth, inclusive

  DistanceBand(double low_pct, double high_pct);
  bool contains(double gt_meters, double pred_meters) const;
  std::string name() const;  // "[80,120]"
};

std::vector<DistanceBand> default_bands();  // [80,120] and [50,200]

struct DistancePair {
  double gt_meters = 0.0;
  std::optional<double> pred_meters;
};

struct BandResult {
  DistanceBand band;
  std::size_t hits = 0;
  double accuracy = 0.0;
};

struct DistanceReport {
  std::size_t count = 0;
  std::size_t parsed = 0;
  double number_rate = 0.0;
  std::vector<BandResult> bands;
  std::vector<double> abs_errors;  // meters, parsed pairs only
  std::vector<double> rel_errors;  // |pred - gt| / gt, parsed pairs only
};

DistanceReport eval_distance_pairs(const std::vector<DistancePair>& pairs,
                                   const std::vector<DistanceBand>& bands = default_bands());

/// (gt meters, raw answer text) pairs.
DistanceReport eval_distance_batch(const std::vector<std::pair<double, std::string>>& answers,
                                   const std::vector<DistanceBand>& bands = default_bands());

/// Expands a multi-distance answer against its per-pair ground truth in
/// question order; a missing k-th number leaves pair k unparsed.
std::vector<DistancePair> expand_multi_distance(const std::vector<double>& gt_meters,
                                                std::string_view answer);

struct ThresholdFraction {
  double threshold = 0.0;
  double fraction = 0.0;
};

struct ErrorStats {
  std::size_t count = 0;
  std::vector<ThresholdFraction> abs_under;  // 0.5, 1, 2, 5 m
  std::vector<ThresholdFraction> rel_under;  // 0.1, 0.2, 0.3
  double mean_abs = 0.0;
  double median_abs = 0.0;
  double mean_rel = 0.0;
  double median_rel = 0.0;
};

/// (gt meters, predicted meters) pairs; "under" is strict.
ErrorStats error_stats(const std::vector<std::pair<double, double>>& pairs);

}  // namespace roomgraph
