#include "roomgraph/scenevqa.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "roomgraph/error.hpp"
#include "roomgraph/prompts.hpp"

namespace roomgraph {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kPlaceholders[] = {"[A]", "[B]", "[C]", "[D]", "[E]", "[F]"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// std::uniform_int_distribution is implementation-defined; this is not.
std::size_t uniform_below(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % bound + 1) % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return static_cast<std::size_t>(x % bound);
}

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

toml::table parse_toml(std::string_view text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " at line " << e.source().begin.line;
    throw Error(ErrorCode::kConfig, os.str());
  }
}

std::vector<std::string> string_array(const toml::table& t, std::string_view key, bool required) {
  std::vector<std::string> out;
  const auto* node = t.get(key);
  if (!node) {
    if (required) throw Error(ErrorCode::kConfig, "missing array \"" + std::string(key) + "\"");
    return out;
  }
  const auto* arr = node->as_array();
  if (!arr) throw Error(ErrorCode::kConfig, "\"" + std::string(key) + "\" must be an array");
  for (const auto& el : *arr) {
    auto v = el.value<std::string>();
    if (!v) throw Error(ErrorCode::kConfig, "\"" + std::string(key) + "\" must hold strings");
    out.push_back(*v);
  }
  return out;
}

toml::array to_toml_array(const std::vector<std::string>& v) {
  toml::array arr;
  for (const auto& s : v) arr.push_back(s);
  return arr;
}

std::string toml_text(const toml::table& t) {
  std::ostringstream os;
  os << t << '\n';
  return os.str();
}

// ---- CoT phrasing ---------------------------------------------------------

std::string article(std::string_view label) {
  const char c = label.empty() ? 'x' : static_cast<char>(std::tolower(static_cast<unsigned char>(label[0])));
  return std::string(std::string_view("aeiou").find(c) != std::string_view::npos ? "an " : "a ") + std::string(label);
}

std::string join_list(const std::vector<std::string>& items) {
  if (items.size() == 1) return items[0];
  if (items.size() == 2) return items[0] + " and " + items[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) out += items[i] + ", ";
  return out + "and " + items.back();
}

std::string group_sentence(const std::string& parent, bool parent_is_root, Relation rel,
                           const std::vector<std::string>& children) {
  const bool many = children.size() > 1;
  const std::string subject = "The " + join_list(children);
  std::vector<std::string> with_articles;
  for (const auto& c : children) with_articles.push_back(article(c));
  const std::string listed = join_list(with_articles);
  switch (rel) {
    case Relation::kSupport:
      if (parent_is_root) return subject + (many ? " are" : " is") + " supported by the " + parent + ".";
      return "On top of the " + parent + ", there " + (many ? "are " : "is ") + listed + ".";
    case Relation::kContain:
      return "Inside the " + parent + ", there " + (many ? "are " : "is ") + listed + ".";
    case Relation::kHang:
      return subject + (many ? " are" : " is") + " hanging on the " + parent + ".";
    case Relation::kAttach:
      return subject + (many ? " are" : " is") + " attached to the " + parent + ".";
  }
  return "";
}

void cot_visit(const SceneNode& node, bool is_root, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < node.children.size()) {
    const Relation rel = node.children[i].relation;
    std::vector<std::string> group;
    while (i < node.children.size() && node.children[i].relation == rel) group.push_back(node.children[i++].child.label);
    out.push_back(group_sentence(node.label, is_root, rel, group));
  }
  for (const auto& e : node.children) cot_visit(e.child, false, out);
}

// ---- vocabulary rules -----------------------------------------------------

// UTF-8 code points; nullopt on malformed input.
std::optional<std::vector<char32_t>> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) return std::nullopt;
    char32_t cp = len == 1 ? c : c & (0x7F >> len);
    for (int k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) return std::nullopt;
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

bool is_garbled(std::string_view label, double threshold) {
  auto cps = decode_utf8(label);
  if (!cps) return true;
  std::size_t counted = 0, non_alpha = 0;
  for (char32_t cp : *cps) {
    if (cp < 0x20 || cp == 0x7F || (cp >= 0x80 && cp < 0xA0)) return true;
    if (cp == U' ') continue;
    ++counted;
    // Non-ASCII code points are judged by the language rule, not here.
    const bool alpha = cp >= 0x80 || (cp < 0x80 && std::isalpha(static_cast<int>(cp)));
    if (!alpha) ++non_alpha;
  }
  if (counted == 0) return true;
  return static_cast<double>(non_alpha) / static_cast<double>(counted) > threshold;
}

bool is_non_english(std::string_view label) {
  return std::any_of(label.begin(), label.end(), [](char c) { return static_cast<unsigned char>(c) >= 0x80; });
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool contains_term(const std::string& label, const std::string& term) {
  if (term.empty()) return false;
  for (auto pos = label.find(term); pos != std::string::npos; pos = label.find(term, pos + 1)) {
    const bool left = pos == 0 || !word_char(label[pos - 1]);
    const std::size_t end = pos + term.size();
    const bool right = end == label.size() || !word_char(label[end]);
    if (left && right) return true;
  }
  return false;
}

std::optional<std::string> match_terms(const std::string& label, const std::vector<std::string>& terms) {
  for (const auto& t : terms) {
    if (contains_term(label, t)) return t;
  }
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------

TemplateBank TemplateBank::defaults() {
  TemplateBank b;
  for (auto t : prompts::kSingleDistance) b.single.emplace_back(t);
  for (auto t : prompts::kDualDistance) b.dual.emplace_back(t);
  for (auto t : prompts::kTripleDistance) b.triple.emplace_back(t);
  return b;
}

TemplateBank TemplateBank::from_toml(std::string_view text) {
  const auto t = parse_toml(text);
  TemplateBank b;
  b.single = string_array(t, "single", true);
  b.dual = string_array(t, "dual", true);
  b.triple = string_array(t, "triple", true);
  b.validate();
  return b;
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) { return from_toml(read_file(path)); }

std::string TemplateBank::to_toml() const {
  toml::table t;
  t.insert("single", to_toml_array(single));
  t.insert("dual", to_toml_array(dual));
  t.insert("triple", to_toml_array(triple));
  return toml_text(t);
}

void TemplateBank::validate() const {
  const std::pair<const std::vector<std::string>*, std::size_t> kinds[] = {{&single, 2}, {&dual, 4}, {&triple, 6}};
  const char* names[] = {"single", "dual", "triple"};
  for (int k = 0; k < 3; ++k) {
    const auto& [list, used] = kinds[k];
    if (list->size() != 15) {
      throw Error(ErrorCode::kConfig, std::string(names[k]) + " templates: expected 15, got " +
                                          std::to_string(list->size()));
    }
    for (const auto& tmpl : *list) {
      for (std::size_t p = 0; p < std::size(kPlaceholders); ++p) {
        const std::size_t want = p < used ? 1 : 0;
        if (count_of(tmpl, kPlaceholders[p]) != want) {
          throw Error(ErrorCode::kConfig, std::string(names[k]) + " template has unbalanced placeholder " +
                                              std::string(kPlaceholders[p]) + ": " + tmpl);
        }
      }
    }
  }
}

std::string_view qa_task_name(QaTask t) { return t == QaTask::kGraph ? "graph" : "distance"; }

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kGenerated: return "generated";
    case Provenance::kCorrected: return "corrected";
    case Provenance::kApproved: return "approved";
  }
  return "";
}

ojson to_json(const QARecord& r) {
  ojson j;
  j["id"] = r.id;
  j["image"] = r.image;
  j["task"] = qa_task_name(r.task);
  j["question"] = r.question;
  j["answer"] = r.answer;
  if (r.task == QaTask::kGraph) {
    j["payload"] = r.graph ? ojson::parse(serialize_graph(*r.graph)) : ojson();
  } else {
    ojson items = ojson::array();
    for (const auto& d : r.distances) items.push_back({{"pair", {d.a, d.b}}, {"meters", d.meters}});
    j["payload"] = items;
  }
  j["provenance"] = provenance_name(r.provenance);
  if (!r.source.empty()) j["source"] = r.source;
  if (!r.split.empty()) j["split"] = r.split;
  return j;
}

QARecord qa_record_from_json(const nlohmann::json& j) {
  try {
    QARecord r;
    r.id = j.at("id").get<std::string>();
    r.image = j.at("image").get<std::string>();
    const auto task = j.at("task").get<std::string>();
    if (task == "graph") {
      r.task = QaTask::kGraph;
    } else if (task == "distance") {
      r.task = QaTask::kDistance;
    } else {
      throw Error(ErrorCode::kSchemaViolation, "unknown task \"" + task + "\"");
    }
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    const auto& payload = j.at("payload");
    if (r.task == QaTask::kGraph) {
      if (!payload.is_null()) r.graph = parse_graph(payload.dump(), {DuplicatePolicy::kReject});
    } else {
      for (const auto& item : payload) {
        r.distances.push_back({item.at("pair").at(0).get<std::string>(), item.at("pair").at(1).get<std::string>(),
                               item.at("meters").get<double>()});
      }
    }
    const auto prov = j.at("provenance").get<std::string>();
    bool known = false;
    for (auto p : {Provenance::kGenerated, Provenance::kCorrected, Provenance::kApproved}) {
      if (provenance_name(p) == prov) {
        r.provenance = p;
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::kSchemaViolation, "unknown provenance \"" + prov + "\"");
    r.source = j.value("source", "");
    r.split = j.value("split", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("QA record: ") + e.what());
  }
}

std::string to_jsonl(const std::vector<QARecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

std::vector<QARecord> read_jsonl(std::string_view text) {
  std::vector<QARecord> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kMalformedJson, "line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(qa_record_from_json(j));
  }
  return out;
}

std::string format_meters(double meters) {
  if (!std::isfinite(meters) || meters < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "distance must be a finite non-negative number");
  }
  // printf rounds exact binary ties (odd multiples of 0.25) to even; those
  // are the only exact .x5 values and are rounded up here instead.
  const double q = meters * 4.0;
  if (q == std::floor(q) && std::fmod(q, 2.0) != 0.0) meters = (std::floor(meters * 10.0) + 1.0) / 10.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", meters);
  return std::string(buf) + "m";
}

QARecord gen_distance_record(const DistanceMatrix& d, const TemplateBank& bank, std::uint64_t seed, int pairs,
                             std::size_t k, const DistanceQaOptions& options) {
  if (pairs < 1 || pairs > 3) throw Error(ErrorCode::kInvalidArgument, "pairs must be 1, 2 or 3");
  const std::size_t n = d.labels.size();
  const std::size_t need = static_cast<std::size_t>(2 * pairs);
  if (n < need) {
    throw Error(ErrorCode::kTooFewObjects, std::to_string(pairs) + "-distance questions need " +
                                               std::to_string(need) + " objects, got " + std::to_string(n));
  }
  const auto& list = pairs == 1 ? bank.single : pairs == 2 ? bank.dual : bank.triple;
  if (list.empty()) throw Error(ErrorCode::kConfig, "template bank has no templates for this kind");

  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k))));
  std::string question = list[uniform_below(rng, list.size())];
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < need; ++i) std::swap(idx[i], idx[i + uniform_below(rng, n - i)]);

  QARecord r;
  r.task = QaTask::kDistance;
  r.image = options.image;
  char id[32];
  std::snprintf(id, sizeof id, "-%06zu", k);
  r.id = options.id_prefix + id;
  for (std::size_t i = 0; i < need; ++i) question = replace_all(question, kPlaceholders[i], d.labels[idx[i]]);
  std::string answer;
  for (int p = 0; p < pairs; ++p) {
    const std::size_t a = idx[2 * p], b = idx[2 * p + 1];
    const double m = d.meters(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    r.distances.push_back({d.labels[a], d.labels[b], m});
    if (p) answer += ", ";
    answer += format_meters(m);
  }
  r.question = std::move(question);
  r.answer = std::move(answer);
  return r;
}

std::vector<QARecord> gen_distance_qa(const DistanceMatrix& d, const TemplateBank& bank, std::uint64_t seed,
                                      const DistanceQaOptions& options) {
  const auto n = static_cast<Eigen::Index>(d.labels.size());
  if (n < 2) throw Error(ErrorCode::kTooFewObjects, "distance questions need at least 2 objects");
  if (d.meters.rows() != n || d.meters.cols() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "distance matrix does not match its labels");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (d.meters(i, j) != d.meters(j, i)) throw Error(ErrorCode::kInvalidArgument, "distance matrix is not symmetric");
    }
  }
  if (options.dual && n < 4) throw Error(ErrorCode::kTooFewObjects, "dual questions need 4 objects");
  if (options.triple && n < 6) throw Error(ErrorCode::kTooFewObjects, "triple questions need 6 objects");

  std::vector<QARecord> out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < options.single; ++i) out.push_back(gen_distance_record(d, bank, seed, 1, k++, options));
  for (std::size_t i = 0; i < options.dual; ++i) out.push_back(gen_distance_record(d, bank, seed, 2, k++, options));
  for (std::size_t i = 0; i < options.triple; ++i) out.push_back(gen_distance_record(d, bank, seed, 3, k++, options));
  return out;
}

std::vector<std::string> gen_graph_cot_sentences(const SceneGraph& g) {
  std::vector<std::string> out;
  for (const auto& root : g.roots()) cot_visit(root, true, out);
  return out;
}

std::string gen_graph_cot(const SceneGraph& g) {
  const auto sentences = gen_graph_cot_sentences(g);
  if (sentences.empty()) return "The room contains no annotated objects.";
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += ' ';
    out += sentences[i];
  }
  return out;
}

QARecord gen_graph_qa(const SceneGraph& g, const std::string& image, const std::string& id) {
  std::vector<std::string> objects;
  for (const auto& label : labels_preorder(g)) {
    if (!is_root_label(label)) objects.push_back(label);
  }
  QARecord r;
  r.id = id.empty() ? "graph-" + image : id;
  r.image = image;
  r.task = QaTask::kGraph;
  r.question = prompts::graph_vqa_prompt(objects);
  r.answer = gen_graph_cot(g) + "\n\n" + serialize_graph(g);
  r.graph = g;
  return r;
}

std::optional<std::string> graph_answer_json(std::string_view answer) {
  // Serialized graphs escape newlines, so the last blank line separates the
  // paragraph from the JSON even when labels contain braces.
  const auto sep = answer.rfind("\n\n");
  if (sep != std::string_view::npos) {
    const std::string tail = trim(answer.substr(sep + 2));
    if (!tail.empty() && tail.front() == '{' && nlohmann::json::accept(tail)) return tail;
  }
  return extract_json_block(answer);
}

std::vector<std::string> scene_filter_prompts() {
  std::vector<std::string> out{std::string(prompts::kScenePositive)};
  for (auto n : prompts::kSceneNegatives) out.emplace_back(n);
  return out;
}

SceneFilterDecision filter_scene_image(const std::map<std::string, double>& scores) {
  auto get = [&scores](std::string_view prompt) {
    auto it = scores.find(std::string(prompt));
    if (it == scores.end()) throw Error(ErrorCode::kMissingPromptScore, std::string(prompt));
    return it->second;
  };
  const double positive = get(prompts::kScenePositive);
  SceneFilterDecision d;
  d.keep = true;
  double worst = 0.0;
  for (auto neg : prompts::kSceneNegatives) {
    const double s = get(neg);
    if (s >= positive && (d.keep || s > worst)) {
      d.keep = false;
      d.reason = std::string(neg);
      worst = s;
    }
  }
  return d;
}

FilterRuleSet FilterRuleSet::defaults() {
  FilterRuleSet r;
  r.structure_terms = {"paneling", "panelling", "wainscoting", "wallpaper", "wall paint", "baseboard",
                       "skirting board", "molding", "moulding", "crown molding", "ceiling tile", "floorboard",
                       "flooring", "floor tile", "drywall", "plaster"};
  r.human_terms = {"adult", "person", "people", "man", "men", "woman", "women", "child", "children",
                   "kid", "kids", "boy", "girl", "baby", "human", "toddler", "teenager"};
  r.outdoor_terms = {"mountain", "mountains", "sky", "cloud", "clouds", "ocean", "sea", "beach",
                     "river", "lake", "forest", "hill", "hills", "street", "road", "sidewalk"};
  r.non_entity_terms = {"window view", "view", "reflection", "shadow", "sunlight", "glare", "darkness",
                        "background", "scenery"};
  return r;
}

FilterRuleSet FilterRuleSet::from_toml(std::string_view text) {
  const auto t = parse_toml(text);
  FilterRuleSet r;
  r.structure_terms = string_array(t, "structure_terms", false);
  r.human_terms = string_array(t, "human_terms", false);
  r.outdoor_terms = string_array(t, "outdoor_terms", false);
  r.non_entity_terms = string_array(t, "non_entity_terms", false);
  r.english_only = t["english_only"].value_or(true);
  r.garbled_heuristic = t["garbled_heuristic"].value_or(true);
  r.garbled_threshold = t["garbled_threshold"].value_or(0.3);
  if (!(r.garbled_threshold >= 0.0 && r.garbled_threshold <= 1.0)) {
    throw Error(ErrorCode::kConfig, "garbled_threshold must be in [0, 1]");
  }
  r.normalize();
  return r;
}

FilterRuleSet FilterRuleSet::load(const std::filesystem::path& path) { return from_toml(read_file(path)); }

std::string FilterRuleSet::to_toml() const {
  toml::table t;
  t.insert("english_only", english_only);
  t.insert("garbled_heuristic", garbled_heuristic);
  t.insert("garbled_threshold", garbled_threshold);
  t.insert("structure_terms", to_toml_array(structure_terms));
  t.insert("outdoor_terms", to_toml_array(outdoor_terms));
  t.insert("human_terms", to_toml_array(human_terms));
  t.insert("non_entity_terms", to_toml_array(non_entity_terms));
  return toml_text(t);
}

void FilterRuleSet::normalize() {
  for (auto* list : {&structure_terms, &human_terms, &outdoor_terms, &non_entity_terms}) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& t : *list) {
      std::string v = lower(trim(t));
      if (!v.empty() && seen.insert(v).second) out.push_back(std::move(v));
    }
    *list = std::move(out);
  }
}

VocabularyFilterResult filter_vocabulary(const std::vector<std::string>& labels, const FilterRuleSet& rules) {
  FilterRuleSet r = rules;
  r.normalize();
  VocabularyFilterResult out;
  for (const auto& label : labels) {
    const std::string norm = lower(trim(label));
    std::optional<std::string> reason;
    if (r.garbled_heuristic && is_garbled(label, r.garbled_threshold)) {
      reason = "garbled";
    } else if (r.english_only && is_non_english(label)) {
      reason = "non_english";
    } else if (is_root_label(norm)) {
      reason = "structure:" + norm;
    } else if (auto t = match_terms(norm, r.structure_terms)) {
      reason = "structure:" + *t;
    } else if (auto t2 = match_terms(norm, r.outdoor_terms)) {
      reason = "outdoor:" + *t2;
    } else if (auto t3 = match_terms(norm, r.human_terms)) {
      reason = "human:" + *t3;
    } else if (auto t4 = match_terms(norm, r.non_entity_terms)) {
      reason = "non_entity:" + *t4;
    }
    if (reason) {
      out.dropped.push_back({label, *reason});
    } else {
      out.kept.push_back(label);
    }
  }
  return out;
}

DatasetStats dataset_stats(const std::vector<QARecord>& records) {
  DatasetStats s;
  s.records = records.size();
  std::set<std::string> labels;
  std::size_t graph_objects = 0;
  for (const auto& r : records) {
    SourceCounts& src = s.by_source[r.source];
    const bool test = r.split == "test";
    if (test) {
      ++s.total.test;
      ++src.test;
    } else if (r.task == QaTask::kGraph) {
      ++s.total.graph;
      ++src.graph;
    } else {
      ++s.total.distance;
      ++src.distance;
    }
    ++s.by_provenance[std::string(provenance_name(r.provenance))];
    if (r.task == QaTask::kGraph && r.graph) {
      for (const auto& l : labels_preorder(*r.graph)) {
        if (is_root_label(l)) continue;
        labels.insert(l);
        ++graph_objects;
      }
    }
    for (const auto& d : r.distances) {
      labels.insert(d.a);
      labels.insert(d.b);
    }
  }
  const std::size_t graphs = std::count_if(records.begin(), records.end(), [](const QARecord& r) {
    return r.task == QaTask::kGraph && r.graph;
  });
  s.distinct_labels = labels.size();
  s.mean_objects_per_graph = graphs ? static_cast<double>(graph_objects) / static_cast<double>(graphs) : 0.0;
  return s;
}

ojson to_json(const DatasetStats& s) {
  auto counts = [](const SourceCounts& c) {
    return ojson{{"graph", c.graph}, {"distance", c.distance}, {"test", c.test}};
  };
  ojson sources = ojson::object();
  for (const auto& [name, c] : s.by_source) sources[name.empty() ? "untagged" : name] = counts(c);
  ojson prov = ojson::object();
  for (const auto& [name, n] : s.by_provenance) prov[name] = n;
  return ojson{{"records", s.records},
               {"total", counts(s.total)},
               {"sources", sources},
               {"provenance", prov},
               {"distinct_labels", s.distinct_labels},
               {"mean_objects_per_graph", s.mean_objects_per_graph}};
}

}  // namespace roomgraph
