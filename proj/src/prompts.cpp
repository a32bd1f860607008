#include "roomgraph/prompts.hpp"

namespace roomgraph::prompts {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

const std::string_view kSystem = "You are an assistant who perfectly describes images.";

const std::string_view kObject =
    R"(Given an image, please create a JSON representation where each entry consists of a key "object"  with a numerical suffix starting from 1. The value of each "object" key contains a "description" key and a "container" key, in which the value of the "description" key is a concise, up to eight-word sentence describing each main, clear, distinct object in the image while the "container" key's value should be either "True" or "False", indicating whether the targeted object has other sub-objects on or inside it.

Please note the following requirements:

1. Each entry should uniquely describe one element without repeating values.

2. For the "container" key, its value should be "True" if the object is containing or supporting other objects, and "False" otherwise.

3. The possible container that could only be a desk, shelf, bed or other similar items. Please consider a desk and its tablecloth as one object.

4. Do not miss any suitable object.

5. Ensure that your output can be parsed by python's  json.loads() directly.

Following is an example: {"object1": {"description": "trash bin with liner", "container": "False"}, "object2": {"description": "retangular dinner table with tablecloths", "container": "True"}, "object3": {"description": "wooden shelf with electronic devices", "container": "True" }})";

const std::string_view kSubObject =
    R"(Given an image of a "{container}", please create a JSON representation where each entry consists of a key "object" with a numerical suffix starting from 1. The value of each "object" key contains a "description" key alue of the "description" key is a concise, up to eight-word sentence describing each main, clear, distinct object on or inside the "{container}".
Please note the following requirements:

1. Each entry should uniquely describe one element without repeating values.

2. Only describe the objects that is on or inside the "{container}". Please ignore other parts of the image.

3. Do not miss any small object that is on or inside the "{container}".

4. Do not include the objects that are near, under or behind the "{container}". If there is no suitable object, please return -1.

5. Do not include the "{container}" in your output.

6. Ensure that the described objects are suitable for measuring distances between them and exclude elements like walls or floors.

7. Make sure that your output can be parsed by python's  json.loads() directly.

Following is an example: {"object1": {"description": "rectangular silver tray"}, "object2": { "description": "bottle of wine on table"}, "object3": {"description": "round decorative doily"}})";

const std::string_view kSelect =
    R"(Please analyze an image that contains {count} bounding boxes.
Each bounding box corresponds to one color.
Your task is to identify the bounding box that best corresponds to the provided description of an object within the image and return the color of your selected bounding box.

In the image, there are {count} bounding boxes.
The colors of these boxes include: {colors}.

Following is the requirement:

1. You must select the most appropriate bounding box and object based on orientation words within the description, such as "left", "center/middle" or "right".
For instance, if an image contains three side-by-side computers, and the description states "center computer", you should output the color corresponding to the computer in the center.

2. It is possible that there are three similar objects (left, center and right respectively) in the image while only two of thems are enclosed by bounding boxes.
In this situation, you still need to select the the suitable bounding box based on the relative position of these three objects.

3. Please provide an output in JSON format with the keys "reason" and "color".
In the "reason" value, explain the rationale behind your selection, and in the "color" value, return the color of your chosen bounding box.

4. If there is no orientation word, you should select the bounding box that best corresponds to the given description. If none of the bounding box meets the description, you should select one randomly.

5. You can only select one box and the "color" value can only be one of the element from this color list: {colors}

6. The order of the color list is meaningless.
You should select the bounding box and its corresponding color according to the description.

7. Make sure that your output can be parsed by python's json.loads() directly.

Following is the provided description: "{description}")";

const std::string_view kGraphVqa =
    R"(Please determine the hierarchical relationships between the objects ({object list}) marked as point in the image. Use only these four hierarchical relationships: support, contain, attach, and hang.

For example, use "support" for objects on a table or chair, "contain" for objects inside a bookshelf or bottle, and "hang" for objects on the wall like doors, curtains, or paintings. Objects on the ceiling, such as lights, should use "attach". If there's a drawer in a table or objects inside the drawer, the relationship should be "contain". For objects on the floor, like tables on a carpet, the relationship is "floor supports rug supports table".

Present the relationships in a JSON tree format, with the ceiling, wall, floor as the root nodes. Here's an example JSON structure:
{
    "ceiling": {
        "attach": [
            {
                "object": {}
            }
        ]
    }, 
    "wall": {}, 
    "floor": {
        "support": [
            {
                "object": {
                    "support": [
                        {
                            "object": {
                                "support": [
                                    {
                                        "object": {}
                                    }
                                ]
                            }
                        }, 
                        {
                            "object": {}
                        }
                    ]
                }
            },
            {
                "object": {}
            }
        ]
    }
})";

const std::array<std::string_view, 15> kSingleDistance = {
    "What's the distance from [A] to [B]?",
    "Can you calculate the length between [A] and [B]?",
    "Could you find out how far [A] is from [B]?",
    "Tell me how much space is between [A] and [B].",
    "Can you estimate the distance from [A] to [B]?",
    "What's the measurement of the distance between [A] and [B]?",
    "Do you know how many meters are between [A] and [B]?",
    "Can you tell the distance between [A] and [B]?",
    "How many steps would it take to get from [A] to [B]?",
    "Please measure the space between [A] and [B].",
    "How far would I need to walk to get from [A] to [B]?",
    "Please calculate the distance of [A] from [B].",
    "How many feet are between [A] and [B]?",
    "Could you provide an estimate of the distance from [A] to [B]?",
    "Can you measure how far [A] is from [B]?",
};

const std::array<std::string_view, 15> kDualDistance = {
    "Can you determine the distance from [A] to [B] and also from [C] to [D]?",
    "What is the measurement of the space separating [A] and [B], and also [C] and [D]?",
    "Could you calculate the lengths between [A] and [B], and between [C] and [D]?",
    "Please provide the distances from [A] to [B] and from [C] to [D].",
    "How far apart are [A] and [B], and what about the distance between [C] and [D]?",
    "Can you estimate how many meters separate [A] from [B] and [C] from [D]?",
    "Tell me the distance between [A] and [B], and also calculate it for [C] and [D].",
    "Could you measure the space from [A] to [B] and compare it with the distance from [C] to [D]?",
    "What's the length from [A] to [B] and from [C] to [D]?",
    "How many steps would it take to walk from [A] to [B] and from [C] to [D]?",
    "Please estimate the distance between [A] and [B], and also between [C] and [D].",
    "Can you tell me how much space separates [A] from [B], and the same for [C] and [D]?",
    "How many feet are there between [A] and [B], and also between [C] and [D]?",
    "Could you inform me about the distances from [A] to [B] and from [C] to [D]?",
    "What are the measurements of the distances between [A] and [B], and [C] and [D]?",
};

const std::array<std::string_view, 15> kTripleDistance = {
    "Can you determine the distance from [A] to [B], and also from [C] to [D], and from [E] to [F]?",
    "Please calculate the lengths between [A] and [B], [C] and [D], and [E] and [F].",
    "How far is it from [A] to [B], and could you also tell me the distance between [C] and [D], and [E] and [F]?",
    "Could you measure the spaces between [A] and [B], [C] and [D], and [E] and [F]?",
    "What are the distances from [A] to [B], from [C] to [D], and from [E] to [F]?",
    "I need to know how many meters separate [A] and [B], [C] and [D], and [E] and [F]. Can you help?",
    "Can you provide the measurements of the distances between [A] and [B], [C] and [D], and [E] and [F]?",
    "How many steps would it take to walk from [A] to [B], from [C] to [D], and from [E] to [F]?",
    "Please inform me about the distance from [A] to [B], the distance from [C] to [D], and the distance from [E] to [F].",
    "Can you estimate how far [A] is from [B], how far [C] is from [D], and how far [E] is from [F]?",
    "What is the length from [A] to [B], from [C] to [D], and from [E] to [F]?",
    "Could you tell me how much space separates [A] and [B], [C] and [D], and [E] and [F]?",
    "How many feet are there between [A] and [B], between [C] and [D], and between [E] and [F]?",
    "Could you provide an estimate of the distances from [A] to [B], from [C] to [D], and from [E] to [F]?",
    "Please measure how far [A] is from [B], how far [C] is from [D], and how far [E] is from [F].",
};

const std::string_view kScenePositive = "An iphone photo of an indoor scene.";

const std::array<std::string_view, 8> kSceneNegatives = {
    "A close up shot of a single object.",
    "A product displayed in front of a white background.",
    "An artwork.",
    "A painting.",
    "A screenshot of graphics user interface.",
    "A piece of text.",
    "A sketch.",
    "A cartoon.",
};

std::string render(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out(tmpl);
  for (const auto& [name, value] : values) {
    const std::string key = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = out.find(key, pos)) != std::string::npos) {
      out.replace(pos, key.size(), value);
      pos += value.size();
    }
  }
  return out;
}

std::string object_prompt() { return std::string(kObject); }

std::string subobject_prompt(std::string_view container) {
  return render(kSubObject, {{"container", std::string(container)}});
}

std::string select_prompt(const std::vector<std::string>& colors, std::string_view description) {
  return render(kSelect, {{"count", std::to_string(colors.size())},
                          {"colors", join(colors)},
                          {"description", std::string(description)}});
}

std::string graph_vqa_prompt(const std::vector<std::string>& object_labels) {
  return render(kGraphVqa, {{"object list", join(object_labels)}});
}

}  // namespace roomgraph::prompts
