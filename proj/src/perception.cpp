#include "roomgraph/perception.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <set>

#include "roomgraph/prompts.hpp"
#include "roomgraph/scenegraph.hpp"

namespace roomgraph {

namespace {

// Scores come from JSON decimals; a printed gap equal to p_n ("0.65" vs
// "0.50") must count as a tie.
constexpr double kGapTolerance = 1e-9;

struct WorkingObject {
  std::string description;
  bool container = false;
  BBox bbox;
  double score = 0.0;
  int level = 1;
  std::optional<std::size_t> parent;
};

std::set<std::string> root_set() {
  std::set<std::string> out;
  for (auto r : SceneGraph::kRootLabels) out.emplace(r);
  return out;
}

class Run {
 public:
  Run(const std::string& image, int width, int height, const PerceptionConfig& cfg, const PerceptionClients& clients)
      : cfg_(cfg), clients_(clients) {
    result_.image = image;
    result_.width = width;
    result_.height = height;
  }

  PerceptionResult execute() {
    try {
      first_pass();
      result_.counts_per_iteration.push_back(objects_.size());
      for (int pass = 1; pass <= cfg_.max_depth; ++pass) {
        container_pass(pass);
        result_.counts_per_iteration.push_back(objects_.size());
      }
    } catch (const Error& e) {
      result_.trace.push_back({{"event", "abort"}, {"code", error_code_name(e.code())}, {"detail", e.detail()}});
      finalize();
      throw PerceptionAborted(e, std::move(result_));
    }
    finalize();
    return std::move(result_);
  }

 private:
  json call(const BackendClient& client, Endpoint e, const json& payload) {
    result_.trace.push_back(
        {{"event", "call"}, {"endpoint", endpoint_name(e)}, {"fingerprint", request_fingerprint(e, payload)}});
    return client.call(e, payload);
  }

  std::vector<DescribedObject> unique_descriptions(std::vector<DescribedObject> in) {
    std::vector<DescribedObject> out;
    std::set<std::string> seen;
    for (auto& o : in) {
      if (!seen.insert(o.description).second) {
        result_.trace.push_back({{"event", "duplicate_description"}, {"object", o.description}});
        continue;
      }
      out.push_back(std::move(o));
    }
    return out;
  }

  SelectFn select_fn() { return make_select_fn(*clients_.select, result_.image); }

  SelectFn traced_select() {
    auto inner = select_fn();
    return [this, inner](const std::vector<std::pair<std::string, BBox>>& colored, std::string_view description) {
      json cands = json::array();
      for (const auto& [color, box] : colored) cands.push_back({{"color", color}, {"bbox", bbox_to_json(box)}});
      json payload{{"image", result_.image},
                   {"description", description},
                   {"candidates", cands},
                   {"prompt", prompts::select_prompt(colors_of(colored), description)}};
      result_.trace.push_back({{"event", "call"},
                               {"endpoint", "select"},
                               {"fingerprint", request_fingerprint(Endpoint::kSelect, payload)}});
      return inner(colored, description);
    };
  }

  static std::vector<std::string> colors_of(const std::vector<std::pair<std::string, BBox>>& colored) {
    std::vector<std::string> out;
    for (const auto& c : colored) out.push_back(c.first);
    return out;
  }

  // Records the filter decision; returns true when the object survives.
  bool record(const std::string& description, const FilterOutcome& f) {
    json ev{{"event", filter_decision_name(f.decision)}, {"object", description}, {"max_score", f.max_score}};
    if (f.decision == FilterDecision::kAuto || f.decision == FilterDecision::kSelect ||
        f.decision == FilterDecision::kSelectFallback) {
      ev["gap"] = f.gap;
    }
    if (!f.colors.empty()) ev["colors"] = f.colors;
    if (f.bbox) {
      ev["bbox"] = bbox_to_json(*f.bbox);
      ev["score"] = f.score;
    }
    result_.trace.push_back(std::move(ev));
    if (f.warning) result_.trace.push_back({{"event", "warning"}, {"object", description}, {"detail", *f.warning}});
    return f.bbox.has_value();
  }

  void first_pass() {
    const json described =
        call(*clients_.describe, Endpoint::kDescribe, {{"image", result_.image}, {"prompt", prompts::object_prompt()}});
    auto listed = unique_descriptions(parse_model_object_json(response_text(described)));
    if (listed.empty()) {
      result_.trace.push_back({{"event", "no_objects"}});
      return;
    }
    json labels = json::array();
    for (const auto& o : listed) labels.push_back(o.description);
    const Detections dets =
        parse_detections(call(*clients_.detect, Endpoint::kDetect, {{"image", result_.image}, {"labels", labels}}));

    const auto select = traced_select();
    for (const auto& o : listed) {
      std::vector<Candidate> cands;
      if (auto it = dets.find(o.description); it != dets.end()) {
        for (auto c : it->second) {
          c.bbox = clamp_bbox(c.bbox, result_.width, result_.height);
          cands.push_back(c);
        }
      }
      const FilterOutcome f = filter_and_update(cands, o.description, cfg_, select);
      if (!record(o.description, f)) continue;
      objects_.push_back({o.description, o.container, *f.bbox, f.score, 1, std::nullopt});
    }
  }

  void container_pass(int pass) {
    std::vector<std::size_t> frontier;
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (objects_[i].container && objects_[i].level == pass) frontier.push_back(i);
    }
    const auto select = traced_select();
    for (std::size_t ci : frontier) {
      const WorkingObject container = objects_[ci];
      const BBox crop = scale_bbox(container.bbox, cfg_.scale, result_.width, result_.height);
      result_.trace.push_back({{"event", "crop"},
                               {"pass", pass},
                               {"container", container.description},
                               {"bbox", bbox_to_json(container.bbox)},
                               {"crop", bbox_to_json(crop)}});

      const json sub = call(*clients_.describe, Endpoint::kSubobjects,
                            {{"image", result_.image},
                             {"region", bbox_to_json(crop)},
                             {"container", container.description},
                             {"prompt", prompts::subobject_prompt(container.description)}});
      auto listed = unique_descriptions(parse_model_object_json(response_text(sub)));
      if (listed.empty()) {
        result_.trace.push_back({{"event", "no_subobjects"}, {"container", container.description}});
        continue;
      }
      json labels = json::array();
      for (const auto& o : listed) labels.push_back(o.description);
      const Detections dets = parse_detections(call(
          *clients_.detect, Endpoint::kDetect,
          {{"image", result_.image}, {"labels", labels}, {"region", bbox_to_json(crop)}}));

      for (const auto& o : listed) {
        std::vector<Candidate> cands;
        if (auto it = dets.find(o.description); it != dets.end()) {
          for (auto c : it->second) {
            // Crop-local -> image coordinates, kept inside the crop.
            c.bbox = to_global(clamp_bbox(c.bbox, crop.width(), crop.height()), crop.x0, crop.y0);
            cands.push_back(c);
          }
        }
        const FilterOutcome f = filter_and_update(cands, o.description, cfg_, select);
        if (!record(o.description, f)) continue;
        if (auto dup = find_duplicate(o.description, *f.bbox)) {
          result_.trace.push_back({{"event", "dedup"},
                                   {"object", o.description},
                                   {"existing_level", objects_[dup->first].level},
                                   {"iou", dup->second}});
          continue;
        }
        objects_.push_back({o.description, o.container, *f.bbox, f.score, pass + 1, ci});
      }
    }
  }

  std::optional<std::pair<std::size_t, double>> find_duplicate(const std::string& description, const BBox& box) const {
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (objects_[i].description != description) continue;
      const double iou = bbox_iou(objects_[i].bbox, box);
      if (iou > cfg_.dedup_iou) return std::make_pair(i, iou);
    }
    return std::nullopt;
  }

  void finalize() {
    std::vector<std::string> descriptions;
    for (const auto& o : objects_) descriptions.push_back(o.description);
    const auto labels = assign_unique_labels(descriptions, root_set());
    result_.objects.clear();
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      const auto& o = objects_[i];
      DetectedObject d;
      d.label = labels[i];
      d.description = o.description;
      d.container = o.container;
      d.bbox = o.bbox;
      d.score = o.score;
      d.depth_level = o.level;
      if (o.parent) d.parent_container = labels[*o.parent];
      result_.objects.push_back(std::move(d));
    }
  }

  PerceptionConfig cfg_;
  PerceptionClients clients_;
  PerceptionResult result_;
  std::vector<WorkingObject> objects_;
};

}  // namespace

void PerceptionConfig::validate() const {
  if (!(p_m > 0.0 && p_m < 1.0)) throw Error(ErrorCode::kConfig, "pM must be in (0, 1)");
  if (!(p_n >= 0.0 && p_n < 1.0)) throw Error(ErrorCode::kConfig, "pN must be in [0, 1)");
  if (!(scale >= 1.0)) throw Error(ErrorCode::kConfig, "S must be >= 1");
  if (max_depth < 1) throw Error(ErrorCode::kConfig, "maxDepth must be >= 1");
  if (!(dedup_iou >= 0.0 && dedup_iou <= 1.0)) throw Error(ErrorCode::kConfig, "dedupIoU must be in [0, 1]");
}

std::string_view filter_decision_name(FilterDecision d) {
  switch (d) {
    case FilterDecision::kNone: return "discard";
    case FilterDecision::kSingle: return "single";
    case FilterDecision::kAuto: return "auto_pick";
    case FilterDecision::kSelect: return "select";
    case FilterDecision::kSelectFallback: return "select_fallback";
  }
  return "";
}

SelectFn make_select_fn(const BackendClient& client, std::string image_ref) {
  return [&client, image = std::move(image_ref)](const std::vector<std::pair<std::string, BBox>>& colored,
                                                 std::string_view description) {
    json cands = json::array();
    std::vector<std::string> colors;
    for (const auto& [color, box] : colored) {
      cands.push_back({{"color", color}, {"bbox", bbox_to_json(box)}});
      colors.push_back(color);
    }
    const json reply = client.call(Endpoint::kSelect, {{"image", image},
                                                       {"description", description},
                                                       {"candidates", cands},
                                                       {"prompt", prompts::select_prompt(colors, description)}});
    return response_text(reply);
  };
}

FilterOutcome filter_and_update(const std::vector<Candidate>& candidates, std::string_view description,
                                const PerceptionConfig& config, const SelectFn& select) {
  FilterOutcome out;
  for (const auto& c : candidates) out.max_score = std::max(out.max_score, c.score);
  if (candidates.empty() || out.max_score < config.p_m) return out;

  std::vector<Candidate> kept;
  for (const auto& c : candidates) {
    if (c.score >= config.p_m) kept.push_back(c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  const auto take = [&out](const Candidate& c, FilterDecision d) {
    out.decision = d;
    out.bbox = c.bbox;
    out.score = c.score;
  };
  if (kept.size() == 1) {
    take(kept[0], FilterDecision::kSingle);
    return out;
  }
  out.gap = kept[0].score - kept[1].score;
  if (out.gap > config.p_n + kGapTolerance) {
    take(kept[0], FilterDecision::kAuto);
    return out;
  }

  const std::size_t offered = std::min(kept.size(), std::size(kPalette));
  std::vector<std::pair<std::string, BBox>> colored;
  for (std::size_t i = 0; i < offered; ++i) {
    colored.emplace_back(std::string(kPalette[i]), kept[i].bbox);
    out.colors.emplace_back(kPalette[i]);
  }
  out.select_answer = select(colored, description);
  const auto color = parse_select_color(out.select_answer);
  if (color) {
    for (std::size_t i = 0; i < offered; ++i) {
      if (*color == kPalette[i]) {
        take(kept[i], FilterDecision::kSelect);
        return out;
      }
    }
  }
  take(kept[0], FilterDecision::kSelectFallback);
  out.warning = color ? "SelectFailed: color \"" + *color + "\" not among candidates"
                      : std::string("SelectFailed: unreadable select answer");
  return out;
}

PerceptionAborted::PerceptionAborted(const Error& cause, PerceptionResult partial)
    : Error(cause.code(), cause.detail()), partial_(std::move(partial)) {}

PerceptionResult perceive(const std::string& image_ref, int width, int height, const PerceptionConfig& config,
                          const PerceptionClients& clients) {
  config.validate();
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  if (!clients.describe || !clients.detect || !clients.select) {
    throw Error(ErrorCode::kInvalidArgument, "perceive needs describe, detect and select clients");
  }
  return Run(image_ref, width, height, config, clients).execute();
}

json to_json(const PerceptionResult& r) {
  json objects = json::array();
  for (const auto& o : r.objects) {
    json j{{"label", o.label},
           {"description", o.description},
           {"container", o.container},
           {"bbox", bbox_to_json(o.bbox)},
           {"score", o.score},
           {"depth_level", o.depth_level}};
    if (o.parent_container) j["parent_container"] = *o.parent_container;
    objects.push_back(std::move(j));
  }
  return json{{"image", r.image},
              {"width", r.width},
              {"height", r.height},
              {"objects", objects},
              {"counts_per_iteration", r.counts_per_iteration},
              {"trace", r.trace}};
}

PerceptionStats perception_stats(const std::vector<PerceptionResult>& results) {
  if (results.empty()) throw Error(ErrorCode::kEmptyBatch, "perception statistics need at least one result");
  PerceptionStats s;
  s.images = results.size();
  double before = 0, after = 0;
  double sum_before = 0, sum_after = 0, sum_later = 0;
  double frac_before = 0, frac_after = 0, frac_later = 0;
  std::size_t n_before = 0, n_later = 0;
  for (const auto& r : results) {
    const double image_area = static_cast<double>(r.width) * static_cast<double>(r.height);
    for (const auto& o : r.objects) {
      const double a = bbox_area(o.bbox);
      const double f = image_area > 0 ? a / image_area : 0.0;
      after += 1;
      sum_after += a;
      frac_after += f;
      if (o.depth_level == 1) {
        ++n_before;
        sum_before += a;
        frac_before += f;
      } else {
        ++n_later;
        sum_later += a;
        frac_later += f;
      }
    }
    before += static_cast<double>(std::count_if(r.objects.begin(), r.objects.end(),
                                                [](const DetectedObject& o) { return o.depth_level == 1; }));
  }
  const double n = static_cast<double>(results.size());
  s.objects_before = before / n;
  s.objects_after = after / n;
  s.objects_added = s.objects_after - s.objects_before;
  if (n_before) {
    s.area_before = sum_before / static_cast<double>(n_before);
    s.area_fraction_before = frac_before / static_cast<double>(n_before);
  }
  if (after > 0) {
    s.area_after = sum_after / after;
    s.area_fraction_after = frac_after / after;
  }
  if (n_later) {
    s.area_later = sum_later / static_cast<double>(n_later);
    s.area_fraction_later = frac_later / static_cast<double>(n_later);
  }
  return s;
}

json to_json(const PerceptionStats& s) {
  return json{{"images", s.images},
              {"objects", {{"before", s.objects_before}, {"after", s.objects_after}, {"added", s.objects_added}}},
              {"bbox_area",
               {{"before", s.area_before}, {"after", s.area_after}, {"later_iterations", s.area_later}}},
              {"bbox_area_fraction",
               {{"before", s.area_fraction_before},
                {"after", s.area_fraction_after},
                {"later_iterations", s.area_fraction_later}}}};
}

std::pair<int, int> image_dimensions(std::string_view b) {
  auto u8 = [&b](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])); };
  if (b.size() >= 24 && b.substr(0, 8) == std::string_view("\x89PNG\r\n\x1a\n", 8) && b.substr(12, 4) == "IHDR") {
    const auto w = (u8(16) << 24) | (u8(17) << 16) | (u8(18) << 8) | u8(19);
    const auto h = (u8(20) << 24) | (u8(21) << 16) | (u8(22) << 8) | u8(23);
    return {static_cast<int>(w), static_cast<int>(h)};
  }
  if (b.size() >= 4 && u8(0) == 0xFF && u8(1) == 0xD8) {
    std::size_t i = 2;
    while (i + 9 < b.size()) {
      if (u8(i) != 0xFF) {
        ++i;
        continue;
      }
      const auto marker = u8(i + 1);
      if (marker == 0xD8 || marker == 0x01 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0xFF) {
        ++i;
        continue;
      }
      const auto len = (u8(i + 2) << 8) | u8(i + 3);
      const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC;
      if (sof) {
        const auto h = (u8(i + 5) << 8) | u8(i + 6);
        const auto w = (u8(i + 7) << 8) | u8(i + 8);
        return {static_cast<int>(w), static_cast<int>(h)};
      }
      i += 2 + len;
    }
  }
  if (b.size() >= 2 && b[0] == 'P' && b[1] >= '1' && b[1] <= '6') {
    std::size_t i = 2;
    int vals[2] = {0, 0};
    for (int k = 0; k < 2; ++k) {
      while (i < b.size()) {
        if (b[i] == '#') {
          while (i < b.size() && b[i] != '\n') ++i;
        } else if (std::isspace(static_cast<unsigned char>(b[i]))) {
          ++i;
        } else {
          break;
        }
      }
      std::size_t start = i;
      while (i < b.size() && std::isdigit(static_cast<unsigned char>(b[i]))) ++i;
      if (start == i) break;
      vals[k] = std::stoi(std::string(b.substr(start, i - start)));
    }
    if (vals[0] > 0 && vals[1] > 0) return {vals[0], vals[1]};
  }
  throw Error(ErrorCode::kUnparseable, "unrecognised image header (PNG, JPEG or PNM expected)");
}

}  // namespace roomgraph
