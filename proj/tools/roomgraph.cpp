#include <signal.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <toml.hpp>

#include "roomgraph/backends.hpp"
#include "roomgraph/digest.hpp"
#include "roomgraph/error.hpp"
#include "roomgraph/geometry.hpp"
#include "roomgraph/metrics.hpp"
#include "roomgraph/perception.hpp"
#include "roomgraph/scenegraph.hpp"
#include "roomgraph/scenevqa.hpp"
#include "roomgraph/service.hpp"

using namespace roomgraph;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kValidationFailure = 2;

// Raised for bad input documents; maps to exit code 2.
struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  if (path == "-") {
    std::ostringstream os;
    os << std::cin.rdbuf();
    return os.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationFailure(what + ": " + e.what());
  }
}

std::vector<json> read_json_lines(const std::string& path) {
  std::vector<json> out;
  std::istringstream in(read_text(path));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (trim(line).empty()) continue;
    out.push_back(parse_json_text(line, path + ":" + std::to_string(n)));
  }
  return out;
}

/// Graph given inline as an object or as JSON text.
std::string graph_text(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

// ---- config ---------------------------------------------------------------

class Config {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    try {
      table_ = toml::parse_file(path);
    } catch (const toml::parse_error& e) {
      std::ostringstream os;
      os << path << ": " << e.description() << " at line " << e.source().begin.line;
      throw Error(ErrorCode::kConfig, os.str());
    }
  }

  /// Fills `value` from "section.key" unless the flag was given.
  template <typename T>
  void merge(const CLI::Option* flag, T& value, std::string_view key) const {
    if (flag && flag->count() > 0) return;
    auto node = table_.at_path(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node.value<std::string>()) {
        value = *v;
        return;
      }
    } else if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node.value<bool>()) {
        value = *v;
        return;
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = node.value<double>()) {
        value = static_cast<T>(*v);
        return;
      }
    } else {
      if (auto v = node.value<std::int64_t>()) {
        value = static_cast<T>(*v);
        return;
      }
    }
    throw Error(ErrorCode::kConfig, "config key " + std::string(key) + " has the wrong type");
  }

 private:
  toml::table table_;
};

// ---- report JSON ----------------------------------------------------------

ojson scores_json(const Scores& s) {
  return ojson{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"iou", s.iou}};
}

ojson counts_json(const MetricCounts& c) { return ojson{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; }

ojson graph_report_json(const GraphEvalReport& r) {
  ojson j{{"json_parsed", r.json_parsed}, {"graph_valid", r.graph_valid}};
  if (!r.parse_error.empty()) j["parse_error"] = r.parse_error;
  for (auto p : kAllPerspectives) {
    const auto& pr = r.at(p);
    j[std::string(perspective_name(p))] = ojson{{"counts", counts_json(pr.counts)}, {"scores", scores_json(pr.scores)}};
  }
  return j;
}

ojson batch_report_json(const GraphBatchReport& r, bool per_sample) {
  ojson j{{"samples", r.samples}, {"parsed", r.parsed}, {"json_percent", r.json_percent}};
  for (auto p : kAllPerspectives) {
    const auto& b = r.at(p);
    j[std::string(perspective_name(p))] =
        ojson{{"pooled", counts_json(b.pooled)}, {"micro", scores_json(b.micro)}, {"macro", scores_json(b.macro)}};
  }
  if (per_sample) {
    ojson items = ojson::array();
    for (const auto& s : r.per_sample) items.push_back(graph_report_json(s));
    j["per_sample"] = items;
  }
  return j;
}

ojson distance_report_json(const DistanceReport& r, const ErrorStats& e) {
  ojson bands = ojson::object();
  for (const auto& b : r.bands) bands[b.band.name()] = ojson{{"hits", b.hits}, {"accuracy", b.accuracy}};
  auto fractions = [](const std::vector<ThresholdFraction>& v) {
    ojson out = ojson::object();
    for (const auto& t : v) {
      std::ostringstream key;
      key << t.threshold;
      out[key.str()] = t.fraction;
    }
    return out;
  };
  return ojson{{"count", r.count},
               {"parsed", r.parsed},
               {"number_rate", r.number_rate},
               {"bands", bands},
               {"errors",
                {{"count", e.count},
                 {"mean_abs", e.mean_abs},
                 {"median_abs", e.median_abs},
                 {"mean_rel", e.mean_rel},
                 {"median_rel", e.median_rel},
                 {"abs_under", fractions(e.abs_under)},
                 {"rel_under", fractions(e.rel_under)}}}};
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

void wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
}

void block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical indoor scene graph toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "TOML config file; flags override its values")->check(CLI::ExistingFile);
  Config cfg;
  std::string out_path;

  // parse-validate
  auto* pv = app.add_subcommand("parse-validate", "Parse a scene graph and report validation findings");
  std::string pv_input;
  bool pv_strict = false, pv_canonical = false;
  pv->add_option("input", pv_input, "Graph JSON file or model output ('-' for stdin)")->required();
  pv->add_flag("--strict", pv_strict, "Reject duplicate labels instead of suffixing them");
  pv->add_flag("--canonical", pv_canonical, "Print the canonical serialization instead of the report");

  // eval-graph
  auto* eg = app.add_subcommand("eval-graph", "Score predicted graphs against ground truth");
  std::string eg_gt, eg_pred, eg_batch;
  bool eg_per_sample = false;
  eg->add_option("--gt", eg_gt, "Ground-truth graph JSON");
  eg->add_option("--pred", eg_pred, "Model output text");
  eg->add_option("--batch", eg_batch, "JSONL of {gt, prediction}");
  eg->add_flag("--per-sample", eg_per_sample, "Include per-sample reports in batch mode");
  eg->add_option("-o,--out", out_path, "Output file (default stdout)");

  // eval-distance
  auto* ed = app.add_subcommand("eval-distance", "Score distance answers against ground truth");
  std::string ed_input;
  ed->add_option("input", ed_input, "JSONL of {gt: meters | [meters], answer: text}")->required();
  ed->add_option("-o,--out", out_path, "Output file (default stdout)");

  // perceive
  auto* pc = app.add_subcommand("perceive", "Run iterative object perception against backends");
  std::string pc_image, pc_backends, pc_mock, pc_token, pc_transcript;
  PerceptionConfig pcfg;
  RetryPolicy retry;
  int pc_backoff_ms = static_cast<int>(retry.backoff.count());
  int pc_deadline_ms = static_cast<int>(retry.deadline.count());
  int pc_in_flight = 4;
  pc->add_option("--image", pc_image, "Image file (PNG, JPEG or PNM)")->required()->check(CLI::ExistingFile);
  auto* f_backends = pc->add_option("--backends", pc_backends, "Backend base URL");
  pc->add_option("--mock", pc_mock, "Scripted mock backend JSON; replaces --backends")->check(CLI::ExistingFile);
  pc->add_option("--transcript", pc_transcript, "Write the mock request transcript (JSONL)");
  auto* f_token = pc->add_option("--token", pc_token, "Bearer token for the backends");
  auto* f_pm = pc->add_option("--p-m", pcfg.p_m, "Minimum candidate score");
  auto* f_pn = pc->add_option("--p-n", pcfg.p_n, "Top-two score gap for an automatic pick");
  auto* f_scale = pc->add_option("--scale", pcfg.scale, "Container crop scale");
  auto* f_depth = pc->add_option("--max-depth", pcfg.max_depth, "Container passes");
  auto* f_dedup = pc->add_option("--dedup-iou", pcfg.dedup_iou, "Same-description merge IoU");
  auto* f_attempts = pc->add_option("--attempts", retry.attempts, "Attempts per backend call");
  auto* f_backoff = pc->add_option("--backoff-ms", pc_backoff_ms, "Base retry backoff");
  auto* f_deadline = pc->add_option("--deadline-ms", pc_deadline_ms, "Per-call deadline");
  auto* f_inflight = pc->add_option("--max-in-flight", pc_in_flight, "Concurrent backend requests");
  pc->add_option("-o,--out", out_path, "Output file (default stdout)");

  // distances
  auto* ds = app.add_subcommand("distances", "Pairwise object distances from depth and masks");
  std::string ds_depth, ds_masks;
  double ds_scale = 1.0, ds_hfov = 60.0;
  std::optional<double> ds_fx, ds_fy, ds_cx, ds_cy;
  int ds_erosion = 1;
  std::size_t ds_min_points = 10;
  ds->add_option("--depth", ds_depth, "Depth map (.pgm, or raw float32 with <path>.json)")->required();
  ds->add_option("--masks", ds_masks, "Segment response JSON {masks: [{label, rle}]}")->required();
  auto* f_dscale = ds->add_option("--depth-scale", ds_scale, "Meters per stored depth unit");
  auto* f_hfov = ds->add_option("--hfov", ds_hfov, "Horizontal field of view in degrees");
  ds->add_option("--fx", ds_fx);
  ds->add_option("--fy", ds_fy);
  ds->add_option("--cx", ds_cx);
  ds->add_option("--cy", ds_cy);
  auto* f_erosion = ds->add_option("--erosion", ds_erosion, "Mask erosion iterations");
  auto* f_minpts = ds->add_option("--min-points", ds_min_points, "Minimum valid points per object");
  ds->add_option("-o,--out", out_path, "Output file (default stdout)");

  // gen-distvqa
  auto* gd = app.add_subcommand("gen-distvqa", "Generate distance QA records");
  std::string gd_input, gd_templates, gd_image, gd_prefix = "dist";
  std::uint64_t gd_seed = 0;
  std::size_t gd_single = 1, gd_dual = 0, gd_triple = 0;
  gd->add_option("input", gd_input, "Distance matrix JSON {labels, meters}")->required();
  auto* f_templates = gd->add_option("--templates", gd_templates, "Template bank TOML");
  auto* f_seed = gd->add_option("--seed", gd_seed);
  auto* f_single = gd->add_option("--single", gd_single, "Single-distance records");
  auto* f_dual = gd->add_option("--dual", gd_dual, "Two-distance records");
  auto* f_triple = gd->add_option("--triple", gd_triple, "Three-distance records");
  gd->add_option("--image", gd_image, "Image reference stored in each record");
  gd->add_option("--id-prefix", gd_prefix);
  gd->add_option("-o,--out", out_path, "Output file (default stdout)");

  // gen-graphvqa
  auto* gg = app.add_subcommand("gen-graphvqa", "Generate graph QA records");
  std::string gg_graph, gg_input, gg_image, gg_id;
  gg->add_option("--graph", gg_graph, "Single graph JSON");
  gg->add_option("--image", gg_image, "Image reference for --graph");
  gg->add_option("--id", gg_id, "Record id for --graph");
  gg->add_option("--input", gg_input, "JSONL of {image, graph, id?}");
  gg->add_option("-o,--out", out_path, "Output file (default stdout)");

  // filter-vocab
  auto* fv = app.add_subcommand("filter-vocab", "Drop non-object labels from a vocabulary");
  std::string fv_input, fv_rules;
  fv->add_option("input", fv_input, "Label file, one per line")->required();
  auto* f_rules = fv->add_option("--rules", fv_rules, "Filter rules TOML");
  fv->add_option("-o,--out", out_path, "Output file (default stdout)");

  // stats
  auto* st = app.add_subcommand("stats", "Dataset or perception statistics");
  std::vector<std::string> st_qa, st_perception;
  st->add_option("--qa", st_qa, "QA record JSONL files");
  st->add_option("--perception", st_perception, "Perception result JSON files");
  st->add_option("-o,--out", out_path, "Output file (default stdout)");

  // serve
  auto* sv = app.add_subcommand("serve", "Run the annotation service");
  std::string sv_store = "store", sv_host = "127.0.0.1", sv_token;
  int sv_port = 8080;
  auto* f_store = sv->add_option("--store", sv_store, "Store directory");
  auto* f_host = sv->add_option("--host", sv_host);
  auto* f_port = sv->add_option("--port", sv_port);
  auto* f_svtoken = sv->add_option("--token", sv_token, "Required bearer token");

  // serve-mock
  auto* sm = app.add_subcommand("serve-mock", "Serve a scripted mock backend over HTTP");
  std::string sm_script, sm_host = "127.0.0.1";
  int sm_port = 8090;
  sm->add_option("script", sm_script, "Mock script JSON")->required()->check(CLI::ExistingFile);
  sm->add_option("--host", sm_host);
  sm->add_option("--port", sm_port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationFailure;
  }

  try {
    cfg.load(config_path);

    if (*pv) {
      const std::string text = read_text(pv_input);
      const auto block = extract_json_block(text);
      if (!block) {
        std::cout << dump(ojson{{"ok", false}, {"errors", {{{"code", "MalformedJson"}, {"message", "no JSON object found"}}}}});
        return kValidationFailure;
      }
      ValidationReport report;
      std::optional<SceneGraph> g;
      try {
        g = parse_graph(*block, {pv_strict ? DuplicatePolicy::kReject : DuplicatePolicy::kSuffix});
        report = validate(*g);
      } catch (const Error& e) {
        report.errors.push_back({std::string(error_code_name(e.code())), e.detail()});
      }
      if (pv_canonical && report.ok()) {
        std::cout << serialize_graph(*g) << "\n";
        return kOk;
      }
      auto findings = [](const std::vector<Finding>& v) {
        ojson out = ojson::array();
        for (const auto& f : v) out.push_back({{"code", f.code}, {"message", f.message}});
        return out;
      };
      ojson j{{"ok", report.ok()}, {"errors", findings(report.errors)}, {"warnings", findings(report.warnings)}};
      if (g && report.ok()) j["triples"] = to_pairwise(*g).size();
      std::cout << dump(j);
      return report.ok() ? kOk : kValidationFailure;
    }

    if (*eg) {
      if (!eg_batch.empty()) {
        std::vector<GraphSample> samples;
        for (const auto& row : read_json_lines(eg_batch)) {
          try {
            samples.push_back({parse_graph(graph_text(row.at("gt")), {DuplicatePolicy::kReject}),
                               row.at("prediction").get<std::string>()});
          } catch (const json::exception& e) {
            throw ValidationFailure(std::string("batch row: ") + e.what());
          }
        }
        write_text(out_path, dump(batch_report_json(eval_graph_batch(samples), eg_per_sample)));
        return kOk;
      }
      if (eg_gt.empty() || eg_pred.empty()) throw ValidationFailure("eval-graph needs --gt and --pred, or --batch");
      const auto gt = parse_graph(read_text(eg_gt), {DuplicatePolicy::kReject});
      write_text(out_path, dump(graph_report_json(eval_graph(gt, read_text(eg_pred)))));
      return kOk;
    }

    if (*ed) {
      std::vector<DistancePair> pairs;
      for (const auto& row : read_json_lines(ed_input)) {
        try {
          const auto answer = row.at("answer").get<std::string>();
          const auto& gt = row.at("gt");
          if (gt.is_array()) {
            auto expanded = expand_multi_distance(gt.get<std::vector<double>>(), answer);
            pairs.insert(pairs.end(), expanded.begin(), expanded.end());
          } else {
            pairs.push_back({gt.get<double>(), parse_distance_answer(answer)});
          }
        } catch (const json::exception& e) {
          throw ValidationFailure(std::string("distance row: ") + e.what());
        }
      }
      const auto report = eval_distance_pairs(pairs);
      std::vector<std::pair<double, double>> parsed;
      for (const auto& p : pairs) {
        if (p.pred_meters) parsed.emplace_back(p.gt_meters, *p.pred_meters);
      }
      write_text(out_path, dump(distance_report_json(report, error_stats(parsed))));
      return kOk;
    }

    if (*pc) {
      cfg.merge(f_pm, pcfg.p_m, "perception.p_m");
      cfg.merge(f_pn, pcfg.p_n, "perception.p_n");
      cfg.merge(f_scale, pcfg.scale, "perception.scale");
      cfg.merge(f_depth, pcfg.max_depth, "perception.max_depth");
      cfg.merge(f_dedup, pcfg.dedup_iou, "perception.dedup_iou");
      cfg.merge(f_backends, pc_backends, "backends.url");
      cfg.merge(f_token, pc_token, "backends.token");
      cfg.merge(f_attempts, retry.attempts, "backends.attempts");
      cfg.merge(f_backoff, pc_backoff_ms, "backends.backoff_ms");
      cfg.merge(f_deadline, pc_deadline_ms, "backends.deadline_ms");
      cfg.merge(f_inflight, pc_in_flight, "backends.max_in_flight");
      pcfg.validate();

      std::shared_ptr<MockBackend> mock;
      std::shared_ptr<Transport> transport;
      if (!pc_mock.empty()) {
        mock = std::make_shared<MockBackend>(MockScript::load(pc_mock));
        transport = make_mock_transport(mock);
      } else if (!pc_backends.empty()) {
        transport = make_http_transport(pc_backends);
      } else {
        throw ValidationFailure("perceive needs --backends or --mock");
      }
      ClientOptions opts;
      opts.retry = retry;
      opts.retry.backoff = std::chrono::milliseconds(pc_backoff_ms);
      opts.retry.deadline = std::chrono::milliseconds(pc_deadline_ms);
      opts.max_in_flight = pc_in_flight;
      opts.bearer_token = pc_token;
      BackendClient client(transport, opts);

      const std::string bytes = read_text(pc_image);
      const auto [w, h] = image_dimensions(bytes);
      const std::string ref = client.upload_blob(bytes);
      int code = kOk;
      PerceptionResult result;
      try {
        result = perceive(ref, w, h, pcfg, PerceptionClients::single(client));
      } catch (const PerceptionAborted& e) {
        std::cerr << "roomgraph: perception aborted: " << e.what() << "\n";
        result = e.partial();
        code = kRuntimeError;
      }
      write_text(out_path, to_json(result).dump(2) + "\n");
      if (mock && !pc_transcript.empty()) write_text(pc_transcript, mock->transcript_jsonl());
      return code;
    }

    if (*ds) {
      cfg.merge(f_dscale, ds_scale, "geometry.depth_scale");
      cfg.merge(f_hfov, ds_hfov, "geometry.hfov_deg");
      cfg.merge(f_erosion, ds_erosion, "geometry.erosion");
      cfg.merge(f_minpts, ds_min_points, "geometry.min_points");
      const DepthMap depth = read_depth(ds_depth, ds_scale);
      const auto masks = decode_masks(parse_json_text(read_text(ds_masks), ds_masks));
      Intrinsics k = Intrinsics::from_fov(depth.width, depth.height, ds_hfov);
      if (ds_fx) k.fx = *ds_fx;
      if (ds_fy) k.fy = *ds_fy;
      if (ds_cx) k.cx = *ds_cx;
      if (ds_cy) k.cy = *ds_cy;
      k.validate();
      const auto cloud = backproject(depth, k);
      std::vector<LabeledCentroid> objects;
      ojson skipped = ojson::array();
      ojson centroids = ojson::object();
      for (const auto& [label, mask] : masks) {
        try {
          const auto c = object_centroid(cloud, mask, {ds_min_points, ds_erosion});
          objects.push_back({label, c});
          centroids[label] = {c.x(), c.y(), c.z()};
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kTooFewPoints) throw;
          skipped.push_back({{"label", label}, {"reason", e.detail()}});
        }
      }
      const auto d = distance_matrix(objects);
      ojson rows = ojson::array();
      for (Eigen::Index i = 0; i < d.meters.rows(); ++i) {
        ojson row = ojson::array();
        for (Eigen::Index j = 0; j < d.meters.cols(); ++j) row.push_back(d.meters(i, j));
        rows.push_back(row);
      }
      write_text(out_path,
                 dump(ojson{{"labels", d.labels}, {"meters", rows}, {"centroids", centroids}, {"skipped", skipped}}));
      return kOk;
    }

    if (*gd) {
      cfg.merge(f_templates, gd_templates, "distvqa.templates");
      cfg.merge(f_seed, gd_seed, "distvqa.seed");
      cfg.merge(f_single, gd_single, "distvqa.single");
      cfg.merge(f_dual, gd_dual, "distvqa.dual");
      cfg.merge(f_triple, gd_triple, "distvqa.triple");
      const auto bank = gd_templates.empty() ? TemplateBank::defaults() : TemplateBank::load(gd_templates);
      const auto doc = parse_json_text(read_text(gd_input), gd_input);
      DistanceMatrix d;
      try {
        d.labels = doc.at("labels").get<std::vector<std::string>>();
        const auto rows = doc.at("meters").get<std::vector<std::vector<double>>>();
        const auto n = static_cast<Eigen::Index>(d.labels.size());
        if (static_cast<Eigen::Index>(rows.size()) != n) throw ValidationFailure("meters does not match labels");
        d.meters.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (static_cast<Eigen::Index>(rows[i].size()) != n) throw ValidationFailure("meters is not square");
          for (Eigen::Index j = 0; j < n; ++j) d.meters(i, j) = rows[i][j];
        }
      } catch (const json::exception& e) {
        throw ValidationFailure(std::string("distance matrix: ") + e.what());
      }
      DistanceQaOptions opt;
      opt.single = gd_single;
      opt.dual = gd_dual;
      opt.triple = gd_triple;
      opt.image = gd_image;
      opt.id_prefix = gd_prefix;
      write_text(out_path, to_jsonl(gen_distance_qa(d, bank, gd_seed, opt)));
      return kOk;
    }

    if (*gg) {
      std::vector<QARecord> records;
      if (!gg_graph.empty()) {
        records.push_back(gen_graph_qa(parse_graph(read_text(gg_graph), {DuplicatePolicy::kReject}), gg_image, gg_id));
      }
      if (!gg_input.empty()) {
        for (const auto& row : read_json_lines(gg_input)) {
          try {
            records.push_back(gen_graph_qa(parse_graph(graph_text(row.at("graph")), {DuplicatePolicy::kReject}),
                                           row.at("image").get<std::string>(), row.value("id", "")));
          } catch (const json::exception& e) {
            throw ValidationFailure(std::string("graph row: ") + e.what());
          }
        }
      }
      if (gg_graph.empty() && gg_input.empty()) throw ValidationFailure("gen-graphvqa needs --graph or --input");
      write_text(out_path, to_jsonl(records));
      return kOk;
    }

    if (*fv) {
      cfg.merge(f_rules, fv_rules, "vocabulary.rules");
      const auto rules = fv_rules.empty() ? FilterRuleSet::defaults() : FilterRuleSet::load(fv_rules);
      std::vector<std::string> labels;
      std::istringstream in(read_text(fv_input));
      for (std::string line; std::getline(in, line);) {
        if (!trim(line).empty()) labels.push_back(trim(line));
      }
      const auto r = filter_vocabulary(labels, rules);
      ojson dropped = ojson::array();
      for (const auto& d : r.dropped) dropped.push_back({{"label", d.label}, {"reason", d.reason}});
      write_text(out_path, dump(ojson{{"kept", r.kept}, {"dropped", dropped}}));
      return kOk;
    }

    if (*st) {
      if (st_qa.empty() && st_perception.empty()) throw ValidationFailure("stats needs --qa or --perception");
      ojson out = ojson::object();
      if (!st_qa.empty()) {
        std::vector<QARecord> records;
        for (const auto& path : st_qa) {
          auto part = read_jsonl(read_text(path));
          records.insert(records.end(), part.begin(), part.end());
        }
        out["dataset"] = to_json(dataset_stats(records));
      }
      if (!st_perception.empty()) {
        std::vector<PerceptionResult> results;
        for (const auto& path : st_perception) {
          const auto doc = parse_json_text(read_text(path), path);
          try {
            PerceptionResult r;
            r.width = doc.at("width").get<int>();
            r.height = doc.at("height").get<int>();
            for (const auto& o : doc.at("objects")) {
              DetectedObject obj;
              obj.label = o.at("label").get<std::string>();
              obj.bbox = bbox_from_json(o.at("bbox"));
              obj.score = o.at("score").get<double>();
              obj.depth_level = o.at("depth_level").get<int>();
              r.objects.push_back(std::move(obj));
            }
            results.push_back(std::move(r));
          } catch (const json::exception& e) {
            throw ValidationFailure(path + ": " + e.what());
          }
        }
        out["perception"] = ojson::parse(to_json(perception_stats(results)).dump());
      }
      write_text(out_path, dump(out));
      return kOk;
    }

    if (*sv) {
      cfg.merge(f_store, sv_store, "service.store");
      cfg.merge(f_host, sv_host, "service.host");
      cfg.merge(f_port, sv_port, "service.port");
      cfg.merge(f_svtoken, sv_token, "service.token");
      block_signals();
      auto store = std::make_shared<SceneStore>(sv_store);
      ServiceServer server(store, {sv_host, sv_port, sv_token});
      std::cerr << "roomgraph: serving " << sv_store << " on " << server.url() << "\n";
      wait_for_signal();
      server.stop();
      return kOk;
    }

    if (*sm) {
      block_signals();
      auto server = serve_mock(MockScript::load(sm_script), sm_host, sm_port);
      std::cerr << "roomgraph: mock backend on " << server->url() << "\n";
      wait_for_signal();
      server->stop();
      return kOk;
    }
  } catch (const ValidationFailure& e) {
    std::cerr << "roomgraph: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const Error& e) {
    std::cerr << "roomgraph: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::kMalformedJson:
      case ErrorCode::kUnknownRelation:
      case ErrorCode::kNonRootTopLevelKey:
      case ErrorCode::kDuplicateLabel:
      case ErrorCode::kMalformedGraph:
      case ErrorCode::kSchemaViolation:
      case ErrorCode::kConfig:
      case ErrorCode::kInvalidArgument:
        return kValidationFailure;
      default:
        return kRuntimeError;
    }
  } catch (const std::exception& e) {
    std::cerr << "roomgraph: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
