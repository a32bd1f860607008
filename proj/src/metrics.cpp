#include "roomgraph/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <regex>
#include <sstream>

#include "roomgraph/error.hpp"

namespace roomgraph {

namespace {

double ratio(std::size_t num, std::size_t den, bool all_zero) {
  if (den == 0) return all_zero ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

Scores zero_scores() { return Scores{}; }

Scores mean_scores(const std::vector<Scores>& all) {
  Scores m;
  if (all.empty()) return m;
  for (const auto& s : all) {
    m.precision += s.precision;
    m.recall += s.recall;
    m.f1 += s.f1;
    m.iou += s.iou;
  }
  const double n = static_cast<double>(all.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  m.iou /= n;
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double unit_factor(std::string unit) {
  std::transform(unit.begin(), unit.end(), unit.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (unit.empty() || unit[0] == 'm') {
    if (unit.rfind("mm", 0) == 0 || unit.rfind("milli", 0) == 0) return 0.001;
    return 1.0;
  }
  if (unit[0] == 'c') return 0.01;
  return 0.3048;  // ft / feet / foot
}

const std::regex& number_regex() {
  static const std::regex re(
      R"((\d+(?:\.\d+)?|\.\d+)\s*(centimeters?|centimetres?|cm|millimeters?|millimetres?|mm|meters?|metres?|m|feet|foot|ft)?(?![A-Za-z]))",
      std::regex::ECMAScript | std::regex::icase);
  return re;
}

}  // namespace

Scores scores_from_counts(const MetricCounts& c) {
  const bool all_zero = c.tp == 0 && c.fp == 0 && c.fn == 0;
  Scores s;
  s.precision = ratio(c.tp, c.tp + c.fp, all_zero);
  s.recall = ratio(c.tp, c.tp + c.fn, all_zero);
  s.iou = ratio(c.tp, c.tp + c.fp + c.fn, all_zero);
  const double pr = s.precision + s.recall;
  s.f1 = pr > 0.0 ? 2.0 * s.precision * s.recall / pr : 0.0;
  return s;
}

std::string_view perspective_name(Perspective p) {
  switch (p) {
    case Perspective::kPairwise: return "pra";
    case Perspective::kObjectwise: return "owa";
    case Perspective::kLayerwise: return "lwa";
    case Perspective::kNode: return "nda";
  }
  return "";
}

const PerspectiveResult& GraphEvalReport::at(Perspective p) const {
  return const_cast<GraphEvalReport*>(this)->at(p);
}

PerspectiveResult& GraphEvalReport::at(Perspective p) {
  switch (p) {
    case Perspective::kPairwise: return pra;
    case Perspective::kObjectwise: return owa;
    case Perspective::kLayerwise: return lwa;
    case Perspective::kNode: return nda;
  }
  return pra;
}

const BatchPerspective& GraphBatchReport::at(Perspective p) const {
  return const_cast<GraphBatchReport*>(this)->at(p);
}

BatchPerspective& GraphBatchReport::at(Perspective p) {
  switch (p) {
    case Perspective::kPairwise: return pra;
    case Perspective::kObjectwise: return owa;
    case Perspective::kLayerwise: return lwa;
    case Perspective::kNode: return nda;
  }
  return pra;
}

MetricCounts perspective_counts(const SceneGraph& gt, const SceneGraph& pred, Perspective p) {
  switch (p) {
    case Perspective::kPairwise: return set_counts(to_pairwise(gt), to_pairwise(pred));
    case Perspective::kObjectwise: return set_counts(to_objectwise(gt), to_objectwise(pred));
    case Perspective::kLayerwise: return set_counts(layers(gt), layers(pred));
    case Perspective::kNode: return set_counts(labels_preorder(gt), labels_preorder(pred));
  }
  return {};
}

std::size_t perspective_size(const SceneGraph& gt, Perspective p) {
  switch (p) {
    case Perspective::kPairwise: return to_pairwise(gt).size();
    case Perspective::kObjectwise: return to_objectwise(gt).size();
    case Perspective::kLayerwise: return layers(gt).size();
    case Perspective::kNode: return gt.node_count();
  }
  return 0;
}

GraphEvalReport eval_graph(const SceneGraph& gt, std::string_view pred_text) {
  GraphEvalReport report;
  std::optional<SceneGraph> pred;
  if (auto block = extract_json_block(pred_text)) {
    report.json_parsed = true;
    try {
      pred = parse_graph(*block);
      report.graph_valid = true;
    } catch (const Error& e) {
      report.parse_error = e.what();
    }
  } else {
    report.parse_error = "no JSON block";
  }

  for (Perspective p : kAllPerspectives) {
    auto& r = report.at(p);
    if (pred) {
      r.counts = perspective_counts(gt, *pred, p);
      r.scores = scores_from_counts(r.counts);
    } else {
      // Everything in the ground truth is missed; scores are forced to zero
      // even for an empty ground truth.
      r.counts = MetricCounts{0, 0, perspective_size(gt, p)};
      r.scores = zero_scores();
    }
  }
  return report;
}

GraphBatchReport eval_graph_batch(const std::vector<GraphSample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyBatch, "graph evaluation batch is empty");
  GraphBatchReport batch;
  batch.samples = samples.size();
  batch.per_sample.reserve(samples.size());
  for (const auto& s : samples) {
    batch.per_sample.push_back(eval_graph(s.gt, s.prediction));
    if (batch.per_sample.back().json_parsed) ++batch.parsed;
  }
  batch.json_percent = 100.0 * static_cast<double>(batch.parsed) / static_cast<double>(batch.samples);

  for (Perspective p : kAllPerspectives) {
    auto& out = batch.at(p);
    std::vector<Scores> per;
    per.reserve(samples.size());
    for (const auto& r : batch.per_sample) {
      out.pooled += r.at(p).counts;
      per.push_back(r.at(p).scores);
    }
    out.micro = scores_from_counts(out.pooled);
    out.macro = mean_scores(per);
  }
  return batch;
}

// ---------------------------------------------------------------------------

std::vector<double> parse_distance_answers(std::string_view text) {
  std::vector<double> out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number_regex()); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    const auto pos = static_cast<std::size_t>(m.position(0));
    if (pos > 0) {
      const unsigned char prev = static_cast<unsigned char>(s[pos - 1]);
      // Part of an identifier ("object2") or a longer number ("1.2.3").
      if (std::isalnum(prev) || prev == '_' || prev == '.') continue;
    }
    out.push_back(std::stod(m[1].str()) * unit_factor(m[2].str()));
  }
  return out;
}

std::optional<double> parse_distance_answer(std::string_view text) {
  auto all = parse_distance_answers(text);
  if (all.empty()) return std::nullopt;
  return all.front();
}

DistanceBand::DistanceBand(double low_pct, double high_pct) : low(low_pct), high(high_pct) {
  if (!(low > 0.0 && low <= 100.0 && high >= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "distance band must satisfy 0 < low <= 100 <= high");
  }
}

bool DistanceBand::contains(double gt, double pred) const {
  // Inclusive bounds with a relative slack of a few ulps so that printed
  // boundary values ("1.6m" for 80 % of 2.0 m) are not lost to rounding.
  constexpr double kSlack = 1e-12;
  const double lo = low * gt / 100.0;
  const double hi = high * gt / 100.0;
  return pred >= lo * (1.0 - kSlack) && pred <= hi * (1.0 + kSlack);
}

std::string DistanceBand::name() const {
  std::ostringstream os;
  os << '[' << low << ',' << high << ']';
  return os.str();
}

std::vector<DistanceBand> default_bands() { return {DistanceBand(80, 120), DistanceBand(50, 200)}; }

DistanceReport eval_distance_pairs(const std::vector<DistancePair>& pairs,
                                   const std::vector<DistanceBand>& bands) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyBatch, "distance evaluation batch is empty");
  DistanceReport report;
  report.count = pairs.size();
  for (const auto& band : bands) report.bands.push_back({band, 0, 0.0});
  for (const auto& p : pairs) {
    if (!(p.gt_meters > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ground-truth distance must be > 0");
    if (!p.pred_meters) continue;
    ++report.parsed;
    const double err = std::abs(*p.pred_meters - p.gt_meters);
    report.abs_errors.push_back(err);
    report.rel_errors.push_back(err / p.gt_meters);
    for (auto& b : report.bands) {
      if (b.band.contains(p.gt_meters, *p.pred_meters)) ++b.hits;
    }
  }
  const double n = static_cast<double>(report.count);
  report.number_rate = static_cast<double>(report.parsed) / n;
  for (auto& b : report.bands) b.accuracy = static_cast<double>(b.hits) / n;
  return report;
}

DistanceReport eval_distance_batch(const std::vector<std::pair<double, std::string>>& answers,
                                   const std::vector<DistanceBand>& bands) {
  std::vector<DistancePair> pairs;
  pairs.reserve(answers.size());
  for (const auto& [gt, text] : answers) pairs.push_back({gt, parse_distance_answer(text)});
  return eval_distance_pairs(pairs, bands);
}

std::vector<DistancePair> expand_multi_distance(const std::vector<double>& gt_meters,
                                                std::string_view answer) {
  auto numbers = parse_distance_answers(answer);
  std::vector<DistancePair> out;
  for (std::size_t k = 0; k < gt_meters.size(); ++k) {
    DistancePair p{gt_meters[k], std::nullopt};
    if (k < numbers.size()) p.pred_meters = numbers[k];
    out.push_back(p);
  }
  return out;
}

ErrorStats error_stats(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyBatch, "error statistics need at least one pair");
  std::vector<double> abs_err, rel_err;
  for (const auto& [gt, pred] : pairs) {
    if (!(gt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "ground-truth distance must be > 0");
    abs_err.push_back(std::abs(pred - gt));
    rel_err.push_back(std::abs(pred - gt) / gt);
  }
  auto under = [](const std::vector<double>& v, double t) {
    auto hits = std::count_if(v.begin(), v.end(), [t](double e) { return e < t; });
    return static_cast<double>(hits) / static_cast<double>(v.size());
  };
  ErrorStats s;
  s.count = pairs.size();
  for (double t : {0.5, 1.0, 2.0, 5.0}) s.abs_under.push_back({t, under(abs_err, t)});
  for (double t : {0.1, 0.2, 0.3}) s.rel_under.push_back({t, under(rel_err, t)});
  s.mean_abs = mean(abs_err);
  s.median_abs = median(abs_err);
  s.mean_rel = mean(rel_err);
  s.median_rel = median(rel_err);
  return s;
}

}  // namespace roomgraph
