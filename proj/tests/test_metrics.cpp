#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "roomgraph/error.hpp"
#include "roomgraph/metrics.hpp"
#include "support/fixtures.hpp"
#include "support/graph_oracle.hpp"

using namespace roomgraph;

TEST_CASE("set_counts on the worked example") {
  const std::vector<std::string> gt = {"a", "b", "c", "d"};
  const std::vector<std::string> pred = {"b", "c", "d", "e", "f"};
  CHECK(set_counts(gt, pred) == MetricCounts{3, 2, 1});
  CHECK(set_counts<std::string>({"x"}, {"x"}) == MetricCounts{1, 0, 0});
  CHECK(set_counts<std::string>({"a", "b"}, {"c", "d", "e"}) == MetricCounts{0, 3, 2});
}

TEST_CASE("scores_from_counts") {
  const auto s = scores_from_counts({3, 2, 1});
  CHECK(s.precision == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(s.recall == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.iou == doctest::Approx(0.5).epsilon(1e-15));

  const auto empty = scores_from_counts({0, 0, 0});
  CHECK(empty.precision == 1.0);
  CHECK(empty.recall == 1.0);
  CHECK(empty.f1 == 1.0);
  CHECK(empty.iou == 1.0);

  const auto fp_only = scores_from_counts({0, 5, 0});
  CHECK(fp_only.precision == 0.0);
  CHECK(fp_only.recall == 0.0);
  CHECK(fp_only.f1 == 0.0);
  CHECK(fp_only.iou == 0.0);
}

TEST_CASE("property: F1/IoU identity and IoU bound over random counts") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 10000; ++i) {
    const MetricCounts c{rng() % 50, rng() % 50, rng() % 50};
    const auto s = scores_from_counts(c);
    CHECK(std::abs(s.f1 - 2.0 * s.iou / (1.0 + s.iou)) <= 1e-12);
    if (c.tp + c.fp + c.fn > 0) CHECK(s.iou <= std::min(s.precision, s.recall) + 1e-15);
  }
}

TEST_CASE("property: counts are permutation invariant") {
  std::mt19937_64 rng(3);
  std::vector<int> gt(20), pred(25);
  for (auto& x : gt) x = static_cast<int>(rng() % 30);
  for (auto& x : pred) x = static_cast<int>(rng() % 30);
  const auto base = set_counts(gt, pred);
  for (int i = 0; i < 50; ++i) {
    std::shuffle(gt.begin(), gt.end(), rng);
    std::shuffle(pred.begin(), pred.end(), rng);
    CHECK(set_counts(gt, pred) == base);
  }
}

TEST_CASE("eval_graph identity and unparsed prediction") {
  const auto gt = parse_graph(read_fixture("toy_graph.json"));
  const auto same = eval_graph(gt, serialize_graph(gt));
  CHECK(same.json_parsed);
  for (auto p : kAllPerspectives) {
    CHECK(same.at(p).scores.precision == 1.0);
    CHECK(same.at(p).scores.recall == 1.0);
    CHECK(same.at(p).scores.f1 == 1.0);
    CHECK(same.at(p).scores.iou == 1.0);
  }

  const auto none = eval_graph(gt, "no json here");
  CHECK_FALSE(none.json_parsed);
  for (auto p : kAllPerspectives) {
    CHECK(none.at(p).scores.f1 == 0.0);
    CHECK(none.at(p).scores.iou == 0.0);
  }
  CHECK(none.pra.counts == MetricCounts{0, 0, 7});

  const auto invalid = eval_graph(gt, R"({"floor":{"on":[{"x":{}}]}})");
  CHECK(invalid.json_parsed);
  CHECK_FALSE(invalid.graph_valid);
  CHECK(invalid.nda.scores.f1 == 0.0);
}

TEST_CASE("eval_graph against a one-edge mutant of the 17-node fixture") {
  const std::string text = read_fixture("layered_17.json");
  const auto gt = parse_graph(text);
  auto mutant = gt;
  mutant.set_relation("jewelry box", "necklace", Relation::kSupport);

  // Brute-force recount over the two triple lists.
  const auto a = to_pairwise(gt), b = to_pairwise(mutant);
  std::size_t common = 0;
  for (const auto& t : a) common += std::count(b.begin(), b.end(), t);
  REQUIRE(common == 13);

  const auto r = eval_graph(gt, serialize_graph(mutant));
  CHECK(r.pra.counts == MetricCounts{13, 1, 1});
  // Two object units (jewelry box, necklace) change; layers and nodes do not.
  CHECK(r.owa.counts == MetricCounts{15, 2, 2});
  CHECK(r.lwa.counts == MetricCounts{4, 0, 0});
  CHECK(r.nda.counts == MetricCounts{17, 0, 0});
}

TEST_CASE("eval_graph_batch pooling and JSON %") {
  const auto toy = parse_graph(read_fixture("toy_graph.json"));
  const auto big = parse_graph(read_fixture("layered_17.json"));
  CHECK_THROWS_AS(eval_graph_batch({}), Error);

  const auto half = eval_graph_batch({{toy, serialize_graph(toy)}, {toy, "sorry"}});
  CHECK(half.json_percent == doctest::Approx(50.0));

  const auto ident = eval_graph_batch({{toy, serialize_graph(toy)}, {big, serialize_graph(big)}});
  for (auto p : kAllPerspectives) {
    CHECK(ident.at(p).micro.f1 == 1.0);
    CHECK(ident.at(p).macro.iou == 1.0);
  }

  auto partial = toy;
  partial.detach("notebook");
  std::vector<GraphSample> samples = {
      {toy, serialize_graph(partial)}, {big, "```json\n" + serialize_graph(big) + "\n```"}, {toy, "-"}};
  const auto batch = eval_graph_batch(samples);
  for (auto p : kAllPerspectives) {
    MetricCounts sum;
    for (const auto& s : samples) sum += eval_graph(s.gt, s.prediction).at(p).counts;
    CHECK(batch.at(p).pooled == sum);
  }
  CHECK(batch.pra.pooled == MetricCounts{6 + 14, 0, 1 + 7});
}

TEST_CASE("parse_distance_answer") {
  CHECK(parse_distance_answer("2.1m") == doctest::Approx(2.1));
  CHECK(parse_distance_answer("about 150 cm apart") == doctest::Approx(1.5));
  CHECK_FALSE(parse_distance_answer("I cannot determine distances.").has_value());
  CHECK(parse_distance_answer("roughly 10 feet") == doctest::Approx(3.048));
  CHECK(parse_distance_answer("3 meters") == doctest::Approx(3.0));
  CHECK(parse_distance_answer("It is 2 metres away") == doctest::Approx(2.0));
  CHECK(parse_distance_answer("object2 is 4m away") == doctest::Approx(4.0));
  CHECK(parse_distance_answer("2 mugs") == doctest::Approx(2.0));
  CHECK(parse_distance_answers("1.2m, 0.8m and 3m") == std::vector<double>{1.2, 0.8, 3.0});
}

TEST_CASE("eval_distance_batch band semantics") {
  const auto r = eval_distance_batch({{2.0, "2.0m"}, {2.0, "1.0m"}, {2.0, "4.5m"}});
  REQUIRE(r.bands.size() == 2);
  CHECK(r.bands[0].band.name() == "[80,120]");
  CHECK(r.bands[0].accuracy == doctest::Approx(1.0 / 3.0));
  CHECK(r.bands[1].accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(r.number_rate == 1.0);

  const auto edge = eval_distance_batch({{2.0, "1.0m"}});
  CHECK(edge.bands[0].hits == 0);
  CHECK(edge.bands[1].hits == 1);
  const auto upper = eval_distance_batch({{2.1, "2.52m"}, {2.0, "4m"}});
  CHECK(upper.bands[0].hits == 1);
  CHECK(upper.bands[1].hits == 2);

  const auto unparsed = eval_distance_batch({{2.0, "no idea"}, {2.0, "2m"}});
  CHECK(unparsed.number_rate == 0.5);
  CHECK(unparsed.bands[1].accuracy == 0.5);

  CHECK_THROWS_AS(eval_distance_batch({}), Error);
  CHECK_THROWS_AS(DistanceBand(120, 80), Error);
}

TEST_CASE("property: widening a band never removes a pair") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> gt_dist(0.2, 8.0), factor(0.1, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const double gt = gt_dist(rng), pred = gt * factor(rng);
    if (DistanceBand(80, 120).contains(gt, pred)) {
      CHECK(DistanceBand(50, 200).contains(gt, pred));
      CHECK(DistanceBand(70, 150).contains(gt, pred));
    }
  }
}

TEST_CASE("multi-distance answers are split in question order") {
  const auto pairs = expand_multi_distance({1.0, 2.0, 3.0}, "1.0m and 2.1m");
  REQUIRE(pairs.size() == 3);
  CHECK(*pairs[1].pred_meters == doctest::Approx(2.1));
  CHECK_FALSE(pairs[2].pred_meters.has_value());
  const auto r = eval_distance_pairs(pairs);
  CHECK(r.number_rate == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("error_stats") {
  const auto exact = error_stats({{2.0, 2.0}});
  for (const auto& t : exact.abs_under) CHECK(t.fraction == 1.0);
  for (const auto& t : exact.rel_under) CHECK(t.fraction == 1.0);

  const auto off = error_stats({{2.0, 3.9}});
  CHECK(off.abs_under[2].threshold == 2.0);
  CHECK(off.abs_under[2].fraction == 1.0);
  CHECK(off.abs_under[1].fraction == 0.0);
  CHECK(off.mean_abs == doctest::Approx(1.9));

  std::vector<std::pair<double, double>> scaled;
  for (int i = 1; i <= 100; ++i) scaled.emplace_back(0.1 * i, 0.1 * i * 1.15);
  const auto s = error_stats(scaled);
  CHECK(s.rel_under[1].fraction == 1.0);
  CHECK(s.rel_under[0].fraction == 0.0);
  CHECK(s.median_rel == doctest::Approx(0.15));
  CHECK_THROWS_AS(error_stats({}), Error);
}
