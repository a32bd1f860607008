#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "roomgraph/backends.hpp"
#include "roomgraph/error.hpp"
#include "roomgraph/geometry.hpp"

namespace roomgraph {

struct PerceptionConfig {
  double p_m = 0.3;        // minimum candidate score
  double p_n = 0.15;       // top-two gap for an automatic pick
  double scale = 1.5;      // container crop scale
  int max_depth = 2;       // container passes
  double dedup_iou = 0.5;  // same-description merge threshold

  void validate() const;
};

enum class FilterDecision {
  kNone,            // nothing reached p_m
  kSingle,          // one survivor
  kAuto,            // top1 - top2 > p_n
  kSelect,          // select backend chose
  kSelectFallback,  // select answer unusable; top1 kept
};

std::string_view filter_decision_name(FilterDecision d);

struct FilterOutcome {
  FilterDecision decision = FilterDecision::kNone;
  std::optional<BBox> bbox;
  double score = 0.0;
  double max_score = 0.0;
  double gap = 0.0;                   // top1 - top2 over survivors (0 if < 2)
  std::vector<std::string> colors;    // palette offered to select
  std::string select_answer;          // raw select text
  std::optional<std::string> warning;
};

/// Colored candidates and the object description in, raw model answer out.
using SelectFn =
    std::function<std::string(const std::vector<std::pair<std::string, BBox>>& colored, std::string_view description)>;

/// Select through a backend client for one image.
SelectFn make_select_fn(const BackendClient& client, std::string image_ref);

FilterOutcome filter_and_update(const std::vector<Candidate>& candidates, std::string_view description,
                                const PerceptionConfig& config, const SelectFn& select);

struct DetectedObject {
  std::string label;
  std::string description;
  bool container = false;
  BBox bbox;
  double score = 0.0;
  int depth_level = 1;  // 1 = first pass; k = found in container pass k-1
  std::optional<std::string> parent_container;
};

struct PerceptionResult {
  std::string image;
  int width = 0;
  int height = 0;
  std::vector<DetectedObject> objects;
  std::vector<json> trace;
  std::vector<std::size_t> counts_per_iteration;  // after pass 1, 2, ...
};

json to_json(const PerceptionResult& r);

/// Any backend or protocol failure during perceive; carries the partial run.
class PerceptionAborted : public Error {
 public:
  PerceptionAborted(const Error& cause, PerceptionResult partial);
  const PerceptionResult& partial() const { return partial_; }

 private:
  PerceptionResult partial_;
};

struct PerceptionClients {
  const BackendClient* describe = nullptr;
  const BackendClient* detect = nullptr;
  const BackendClient* select = nullptr;

  static PerceptionClients single(const BackendClient& c) { return {&c, &c, &c}; }
};

PerceptionResult perceive(const std::string& image_ref, int width, int height, const PerceptionConfig& config,
                          const PerceptionClients& clients);

struct PerceptionStats {
  std::size_t images = 0;
  double objects_before = 0.0;  // mean per image, first pass
  double objects_after = 0.0;   // mean per image, all passes
  double objects_added = 0.0;
  double area_before = 0.0;     // mean bbox area (px^2), first-pass objects
  double area_after = 0.0;      // mean bbox area, all objects
  double area_later = 0.0;      // mean bbox area, objects with depth_level >= 2
  double area_fraction_before = 0.0;  // same, relative to image area
  double area_fraction_after = 0.0;
  double area_fraction_later = 0.0;
};

PerceptionStats perception_stats(const std::vector<PerceptionResult>& results);
json to_json(const PerceptionStats& s);

/// Pixel size from a PNG, JPEG or PNM header.
std::pair<int, int> image_dimensions(std::string_view bytes);

}  // namespace roomgraph
