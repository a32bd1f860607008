#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace roomgraph::prompts {

extern const std::string_view kSystem;
extern const std::string_view kObject;
extern const std::string_view kSubObject;    // {container}
extern const std::string_view kSelect;       // {count}, {colors}, {description}
extern const std::string_view kGraphVqa;     // {object list}

extern const std::array<std::string_view, 15> kSingleDistance;  // [A] [B]
extern const std::array<std::string_view, 15> kDualDistance;    // [A]..[D]
extern const std::array<std::string_view, 15> kTripleDistance;  // [A]..[F]

extern const std::string_view kScenePositive;
extern const std::array<std::string_view, 8> kSceneNegatives;

/// Replaces every "{name}" occurrence for each (name, value) pair.
std::string render(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

std::string object_prompt();
std::string subobject_prompt(std::string_view container);
std::string select_prompt(const std::vector<std::string>& colors, std::string_view description);
std::string graph_vqa_prompt(const std::vector<std::string>& object_labels);

}  // namespace roomgraph::prompts
