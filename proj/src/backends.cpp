#include "roomgraph/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "roomgraph/digest.hpp"
#include "roomgraph/error.hpp"
#include "roomgraph/scenegraph.hpp"

namespace roomgraph {

namespace {

[[noreturn]] void schema_error(std::string_view where, std::string_view what) {
  throw Error(ErrorCode::kSchemaViolation, std::string(where) + ": " + std::string(what));
}

void require_string(const json& j, const char* key, std::string_view where, bool non_empty = true) {
  if (!j.contains(key) || !j[key].is_string()) schema_error(where, std::string("missing string \"") + key + "\"");
  if (non_empty && j[key].get_ref<const std::string&>().empty()) {
    schema_error(where, std::string("empty \"") + key + "\"");
  }
}

void require_bbox(const json& j, std::string_view where) {
  if (!j.is_array() || j.size() != 4) schema_error(where, "bbox must be [x0, y0, x1, y1]");
  for (const auto& v : j) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) schema_error(where, "bbox entries must be numbers");
  }
  if (!(j[0].get<double>() <= j[2].get<double>() && j[1].get<double>() <= j[3].get<double>())) {
    schema_error(where, "bbox corners out of order");
  }
}

void require_string_array(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key) || !j[key].is_array() || j[key].empty()) {
    schema_error(where, std::string("\"") + key + "\" must be a non-empty array");
  }
  for (const auto& v : j[key]) {
    if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
      schema_error(where, std::string("\"") + key + "\" entries must be non-empty strings");
    }
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

json error_body(std::string_view kind, const std::string& detail) {
  return json{{"error", {{"kind", kind}, {"detail", detail}}}};
}

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string base_url) : base_url_(std::move(base_url)) {}

  HttpReply post(const HttpRequest& req) override {
    httplib::Client cli(base_url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers{{"X-Request-Id", req.request_id}};
    if (!req.bearer_token.empty()) headers.emplace("Authorization", "Bearer " + req.bearer_token);

    HttpReply reply;
    auto res = cli.Post(req.path, headers, req.body, req.content_type);
    if (!res) {
      reply.transport_error = httplib::to_string(res.error());
      return reply;
    }
    reply.status = res->status;
    reply.body = res->body;
    reply.request_id = res->get_header_value("X-Request-Id");
    return reply;
  }

 private:
  std::string base_url_;
};

class MockTransport : public Transport {
 public:
  explicit MockTransport(std::shared_ptr<MockBackend> backend) : backend_(std::move(backend)) {}

  HttpReply post(const HttpRequest& req) override {
    HttpReply reply = backend_->handle(req.path, req.body);
    reply.request_id = req.request_id;
    return reply;
  }

 private:
  std::shared_ptr<MockBackend> backend_;
};

}  // namespace

std::string_view endpoint_name(Endpoint e) {
  switch (e) {
    case Endpoint::kDescribe: return "describe";
    case Endpoint::kSubobjects: return "subobjects";
    case Endpoint::kSelect: return "select";
    case Endpoint::kDetect: return "detect";
    case Endpoint::kSegment: return "segment";
    case Endpoint::kDepth: return "depth";
    case Endpoint::kClipscore: return "clipscore";
    case Endpoint::kCot: return "cot";
  }
  return "";
}

std::optional<Endpoint> endpoint_from_name(std::string_view name) {
  for (Endpoint e : kAllEndpoints) {
    if (endpoint_name(e) == name) return e;
  }
  return std::nullopt;
}

std::string endpoint_path(Endpoint e) { return "/v1/" + std::string(endpoint_name(e)); }

void validate_request(Endpoint e, const json& r) {
  const std::string where = std::string(endpoint_name(e)) + " request";
  if (!r.is_object()) schema_error(where, "not an object");
  if (e != Endpoint::kCot) require_string(r, "image", where);
  switch (e) {
    case Endpoint::kDescribe:
      require_string(r, "prompt", where);
      break;
    case Endpoint::kSubobjects:
      require_string(r, "prompt", where);
      require_string(r, "container", where);
      if (!r.contains("region")) schema_error(where, "missing \"region\"");
      require_bbox(r["region"], where);
      break;
    case Endpoint::kSelect:
      require_string(r, "prompt", where);
      require_string(r, "description", where);
      if (!r.contains("candidates") || !r["candidates"].is_array() || r["candidates"].size() < 2) {
        schema_error(where, "\"candidates\" needs at least two entries");
      }
      for (const auto& c : r["candidates"]) {
        if (!c.is_object()) schema_error(where, "candidate must be an object");
        require_string(c, "color", where);
        if (!c.contains("bbox")) schema_error(where, "candidate without bbox");
        require_bbox(c["bbox"], where);
      }
      break;
    case Endpoint::kDetect:
      require_string_array(r, "labels", where);
      if (r.contains("region")) require_bbox(r["region"], where);
      break;
    case Endpoint::kSegment:
      if (!r.contains("boxes") || !r["boxes"].is_array() || r["boxes"].empty()) {
        schema_error(where, "\"boxes\" must be a non-empty array");
      }
      for (const auto& b : r["boxes"]) {
        if (!b.is_object()) schema_error(where, "box must be an object");
        require_string(b, "label", where);
        if (!b.contains("bbox")) schema_error(where, "box without bbox");
        require_bbox(b["bbox"], where);
      }
      break;
    case Endpoint::kDepth:
      break;
    case Endpoint::kClipscore:
      require_string_array(r, "prompts", where);
      break;
    case Endpoint::kCot:
      require_string(r, "prompt", where);
      if (!r.contains("graph") || !r["graph"].is_object()) schema_error(where, "\"graph\" must be an object");
      break;
  }
}

void validate_response(Endpoint e, const json& r, const json* request) {
  const std::string where = std::string(endpoint_name(e)) + " response";
  if (!r.is_object()) schema_error(where, "not an object");
  switch (e) {
    case Endpoint::kDescribe:
    case Endpoint::kSubobjects:
    case Endpoint::kSelect:
    case Endpoint::kCot:
      require_string(r, "text", where, false);
      break;
    case Endpoint::kDetect: {
      if (!r.contains("detections") || !r["detections"].is_object()) {
        schema_error(where, "\"detections\" must be an object");
      }
      for (const auto& [label, list] : r["detections"].items()) {
        if (!list.is_array()) schema_error(where, "candidates for \"" + label + "\" must be an array");
        for (const auto& c : list) {
          if (!c.is_object() || !c.contains("bbox")) schema_error(where, "candidate without bbox");
          require_bbox(c["bbox"], where);
          if (!c.contains("score") || !c["score"].is_number()) schema_error(where, "candidate without score");
          const double s = c["score"].get<double>();
          if (!(s >= 0.0 && s <= 1.0)) schema_error(where, "score outside [0,1]");
        }
      }
      if (request) {
        for (const auto& label : (*request)["labels"]) {
          if (!r["detections"].contains(label.get<std::string>())) {
            schema_error(where, "no candidate list for \"" + label.get<std::string>() + "\"");
          }
        }
      }
      break;
    }
    case Endpoint::kSegment:
      if (!r.contains("masks") || !r["masks"].is_array()) schema_error(where, "\"masks\" must be an array");
      for (const auto& m : r["masks"]) {
        if (!m.is_object()) schema_error(where, "mask must be an object");
        require_string(m, "label", where);
        if (!m.contains("rle") || !m["rle"].is_object()) schema_error(where, "mask without rle");
        const auto& rle = m["rle"];
        if (!rle.contains("size") || !rle["size"].is_array() || rle["size"].size() != 2 ||
            !rle["size"][0].is_number_integer() || !rle["size"][1].is_number_integer() ||
            rle["size"][0].get<std::int64_t>() < 0 || rle["size"][1].get<std::int64_t>() < 0) {
          schema_error(where, "rle.size must be [height, width]");
        }
        if (!rle.contains("counts") || !(rle["counts"].is_string() || rle["counts"].is_array())) {
          schema_error(where, "rle.counts must be a string or array");
        }
      }
      break;
    case Endpoint::kDepth: {
      for (const char* k : {"width", "height"}) {
        if (!r.contains(k) || !r[k].is_number_integer() || r[k].get<std::int64_t>() <= 0) {
          schema_error(where, std::string("\"") + k + "\" must be a positive integer");
        }
      }
      if (!r.contains("scale") || !r["scale"].is_number() || !(r["scale"].get<double>() > 0.0)) {
        schema_error(where, "\"scale\" must be positive");
      }
      require_string(r, "data", where);
      std::string raw;
      try {
        raw = base64_decode(r["data"].get<std::string>());
      } catch (const Error&) {
        schema_error(where, "\"data\" is not base64");
      }
      const auto n = r["width"].get<std::uint64_t>() * r["height"].get<std::uint64_t>();
      if (raw.size() != n * sizeof(float)) schema_error(where, "\"data\" size does not match width*height");
      break;
    }
    case Endpoint::kClipscore:
      if (!r.contains("scores") || !r["scores"].is_array()) schema_error(where, "\"scores\" must be an array");
      for (const auto& s : r["scores"]) {
        if (!s.is_number()) schema_error(where, "scores must be numbers");
      }
      if (request && r["scores"].size() != (*request)["prompts"].size()) {
        schema_error(where, "one score per prompt expected");
      }
      break;
  }
}

json bbox_to_json(const BBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

BBox bbox_from_json(const json& j) {
  require_bbox(j, "bbox");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::string response_text(const json& response) {
  validate_response(Endpoint::kDescribe, response);
  return response["text"].get<std::string>();
}

Detections parse_detections(const json& response) {
  validate_response(Endpoint::kDetect, response);
  Detections out;
  for (const auto& [label, list] : response["detections"].items()) {
    auto& dst = out[label];
    for (const auto& c : list) dst.push_back({bbox_from_json(c["bbox"]), c["score"].get<double>()});
  }
  return out;
}

std::vector<std::pair<std::string, Mask>> decode_masks(const json& response) {
  validate_response(Endpoint::kSegment, response);
  std::vector<std::pair<std::string, Mask>> out;
  for (const auto& m : response["masks"]) {
    const auto& rle = m["rle"];
    const int h = rle["size"][0].get<int>();
    const int w = rle["size"][1].get<int>();
    Mask mask = rle["counts"].is_string()
                    ? Mask::from_rle(rle["counts"].get<std::string>(), w, h)
                    : Mask::from_counts(rle["counts"].get<std::vector<std::uint32_t>>(), w, h);
    out.emplace_back(m["label"].get<std::string>(), std::move(mask));
  }
  return out;
}

DepthMap decode_depth(const json& response) {
  validate_response(Endpoint::kDepth, response);
  DepthMap d;
  d.width = response["width"].get<int>();
  d.height = response["height"].get<int>();
  const double scale = response["scale"].get<double>();
  const std::string raw = base64_decode(response["data"].get<std::string>());
  d.values.resize(raw.size() / sizeof(float));
  std::memcpy(d.values.data(), raw.data(), raw.size());
  if (scale != 1.0) {
    for (auto& v : d.values) v = static_cast<float>(v * scale);
  }
  return d;
}

json encode_depth(const DepthMap& depth, double scale) {
  depth.validate();
  if (!(scale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "depth scale must be positive");
  std::vector<float> stored(depth.values.size());
  for (std::size_t i = 0; i < stored.size(); ++i) stored[i] = static_cast<float>(depth.values[i] / scale);
  const std::string_view bytes(reinterpret_cast<const char*>(stored.data()), stored.size() * sizeof(float));
  return json{{"width", depth.width}, {"height", depth.height}, {"scale", scale}, {"data", base64_encode(bytes)}};
}

std::vector<DescribedObject> parse_model_object_json(std::string_view text) {
  std::string stripped = trim(text);
  if (stripped.rfind("```", 0) == 0) {
    // A fenced bare sentinel: ```\n-1\n```
    const auto nl = stripped.find('\n');
    const auto close = stripped.rfind("```");
    if (nl != std::string::npos && close > nl) stripped = trim(std::string_view(stripped).substr(nl, close - nl));
  }
  if (stripped == "-1" || stripped == "\"-1\"") return {};

  auto block = extract_json_block(text);
  if (!block) throw Error(ErrorCode::kUnparseable, "no JSON object in model output");
  const json doc = json::parse(*block);

  static const std::regex key_re(R"(object(\d+))");
  std::vector<std::pair<long long, DescribedObject>> keyed;
  for (const auto& [key, value] : doc.items()) {
    std::smatch m;
    if (!std::regex_match(key, m, key_re)) throw Error(ErrorCode::kSchemaViolation, "unexpected key \"" + key + "\"");
    if (!value.is_object()) throw Error(ErrorCode::kSchemaViolation, "\"" + key + "\" must be an object");
    if (!value.contains("description") || !value["description"].is_string()) {
      throw Error(ErrorCode::kSchemaViolation, "\"" + key + "\" has no description");
    }
    DescribedObject obj;
    obj.description = trim(value["description"].get<std::string>());
    if (obj.description.empty()) throw Error(ErrorCode::kSchemaViolation, "\"" + key + "\" has an empty description");
    if (value.contains("container")) {
      const auto& c = value["container"];
      if (c.is_boolean()) {
        obj.container = c.get<bool>();
      } else if (c.is_string() && (lower(trim(c.get<std::string>())) == "true" ||
                                   lower(trim(c.get<std::string>())) == "false")) {
        obj.container = lower(trim(c.get<std::string>())) == "true";
      } else {
        throw Error(ErrorCode::kSchemaViolation, "\"" + key + "\" has an invalid container flag");
      }
    }
    keyed.emplace_back(std::stoll(m[1].str()), std::move(obj));
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<DescribedObject> out;
  out.reserve(keyed.size());
  for (auto& [k, obj] : keyed) out.push_back(std::move(obj));
  return out;
}

std::optional<std::string> parse_select_color(std::string_view text) {
  auto block = extract_json_block(text);
  if (!block) return std::nullopt;
  const json doc = json::parse(*block);
  if (!doc.contains("color") || !doc["color"].is_string()) return std::nullopt;
  return lower(trim(doc["color"].get<std::string>()));
}

// ---------------------------------------------------------------------------

std::shared_ptr<Transport> make_http_transport(std::string base_url) {
  return std::make_shared<HttpTransport>(std::move(base_url));
}

std::shared_ptr<Transport> make_mock_transport(std::shared_ptr<MockBackend> backend) {
  return std::make_shared<MockTransport>(std::move(backend));
}

BackendClient::BackendClient(std::shared_ptr<Transport> transport, ClientOptions options)
    : transport_(std::move(transport)), options_(std::move(options)) {
  if (!transport_) throw Error(ErrorCode::kInvalidArgument, "backend client needs a transport");
  if (options_.max_in_flight < 1) throw Error(ErrorCode::kConfig, "max_in_flight must be >= 1");
  if (options_.retry.attempts < 1) throw Error(ErrorCode::kConfig, "retry attempts must be >= 1");
  in_flight_ = std::make_unique<std::counting_semaphore<>>(options_.max_in_flight);
}

HttpReply BackendClient::send(const std::string& path, const std::string& body,
                              const std::string& content_type) const {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto deadline = start + options_.retry.deadline;

  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<>* s;
    ~Release() { s->release(); }
  } release{in_flight_.get()};

  std::string last_error = "deadline exhausted before first attempt";
  for (int attempt = 0; attempt < options_.retry.attempts; ++attempt) {
    const auto now = Clock::now();
    if (now >= deadline) break;
    HttpRequest req;
    req.path = path;
    req.body = body;
    req.content_type = content_type;
    req.request_id = std::to_string(next_id_.fetch_add(1));
    req.bearer_token = options_.bearer_token;
    req.timeout = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
    HttpReply reply = transport_->post(req);

    if (reply.status != 0 && reply.status < 500) {
      if (!reply.request_id.empty() && reply.request_id != req.request_id) {
        throw Error(ErrorCode::kTransport, "response correlates to request " + reply.request_id + ", expected " +
                                               req.request_id);
      }
      return reply;
    }
    last_error = reply.status == 0 ? reply.transport_error : "HTTP " + std::to_string(reply.status);
    if (attempt + 1 < options_.retry.attempts) {
      auto wait = options_.retry.backoff * (1 << attempt);
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (wait >= left) break;
      std::this_thread::sleep_for(wait);
    }
  }
  throw Error(ErrorCode::kTransport, path + ": " + last_error + " (after " +
                                         std::to_string(options_.retry.attempts) + " attempts)");
}

json BackendClient::call(Endpoint e, const json& payload) const {
  validate_request(e, payload);
  const HttpReply reply = send(endpoint_path(e), payload.dump(), "application/json");

  json body;
  try {
    body = json::parse(reply.body);
  } catch (const json::exception&) {
    if (reply.status / 100 == 2) throw Error(ErrorCode::kSchemaViolation, "response body is not JSON");
    throw Error(ErrorCode::kBackendFailure, "HTTP " + std::to_string(reply.status) + ": " + reply.body);
  }
  if (reply.status / 100 != 2) {
    std::string kind, detail = reply.body;
    if (body.is_object() && body.contains("error") && body["error"].is_object()) {
      kind = body["error"].value("kind", "");
      detail = body["error"].value("detail", reply.body);
    }
    if (kind == "UnmatchedRequest") throw Error(ErrorCode::kUnmatchedRequest, detail);
    if (kind == "SchemaViolation") throw Error(ErrorCode::kSchemaViolation, detail);
    throw Error(ErrorCode::kBackendFailure, "HTTP " + std::to_string(reply.status) + ": " + detail);
  }
  if (body.is_object() && body.contains("refusal")) {
    throw Error(ErrorCode::kBackendRefusal, body["refusal"].is_string() ? body["refusal"].get<std::string>()
                                                                         : body["refusal"].dump());
  }
  validate_response(e, body, &payload);
  return body;
}

std::string BackendClient::upload_blob(std::string_view bytes) const {
  const HttpReply reply = send(std::string(kBlobPath), std::string(bytes), "application/octet-stream");
  if (reply.status / 100 != 2) {
    throw Error(ErrorCode::kBackendFailure, "blob upload failed: HTTP " + std::to_string(reply.status));
  }
  json body;
  try {
    body = json::parse(reply.body);
  } catch (const json::exception&) {
    throw Error(ErrorCode::kSchemaViolation, "blob response is not JSON");
  }
  if (!body.is_object() || !body.contains("ref") || !body["ref"].is_string()) {
    throw Error(ErrorCode::kSchemaViolation, "blob response without \"ref\"");
  }
  const std::string ref = body["ref"].get<std::string>();
  if (ref != content_ref(bytes)) throw Error(ErrorCode::kSchemaViolation, "blob reference does not match content");
  return ref;
}

// ---------------------------------------------------------------------------

std::string request_fingerprint(Endpoint e, const json& request) {
  // nlohmann::json keeps object keys sorted, so dump() is canonical.
  return sha256_hex(std::string(endpoint_name(e)) + "\n" + json(request).dump());
}

bool json_subset_match(const json& pattern, const json& value) {
  if (pattern.is_null()) return true;
  if (pattern.is_object()) {
    if (!value.is_object()) return false;
    for (const auto& [k, v] : pattern.items()) {
      if (!value.contains(k) || !json_subset_match(v, value[k])) return false;
    }
    return true;
  }
  if (pattern.is_array()) {
    if (!value.is_array() || value.size() != pattern.size()) return false;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (!json_subset_match(pattern[i], value[i])) return false;
    }
    return true;
  }
  return pattern == value;
}

MockScript MockScript::from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array()) {
    throw Error(ErrorCode::kConfig, "mock script needs a \"rules\" array");
  }
  MockScript script;
  std::size_t index = 0;
  for (const auto& r : doc["rules"]) {
    const std::string where = "mock rule " + std::to_string(index++);
    if (!r.is_object() || !r.contains("endpoint") || !r["endpoint"].is_string()) {
      throw Error(ErrorCode::kConfig, where + ": missing endpoint");
    }
    auto e = endpoint_from_name(r["endpoint"].get<std::string>());
    if (!e) throw Error(ErrorCode::kConfig, where + ": unknown endpoint " + r["endpoint"].dump());
    MockRule rule;
    rule.endpoint = *e;
    rule.match = r.value("match", json());
    if (r.contains("fingerprint")) rule.fingerprint = r["fingerprint"].get<std::string>();
    if (!r.contains("response")) throw Error(ErrorCode::kConfig, where + ": missing response");
    rule.response = r["response"];
    rule.status = r.value("status", 200);
    rule.repeat = r.value("repeat", false);
    rule.fail_times = r.value("fail_times", 0);
    rule.unchecked = r.value("unchecked", false);
    if (rule.fail_times < 0) throw Error(ErrorCode::kConfig, where + ": negative fail_times");
    if (rule.status == 200 && !rule.unchecked && !rule.response.contains("refusal")) {
      try {
        validate_response(rule.endpoint, rule.response);
      } catch (const Error& err) {
        throw Error(ErrorCode::kConfig, where + ": " + err.detail());
      }
    }
    script.rules.push_back(std::move(rule));
  }
  return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open mock script " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

MockBackend::MockBackend(MockScript script)
    : script_(std::move(script)),
      consumed_(script_.rules.size(), false),
      failures_served_(script_.rules.size(), 0) {}

HttpReply MockBackend::handle(const std::string& path, const std::string& body) {
  std::lock_guard lock(mu_);
  HttpReply reply;
  if (path == kBlobPath) {
    const std::string ref = content_ref(body);
    blobs_.emplace(ref, body);
    reply.status = 200;
    reply.body = json{{"ref", ref}}.dump();
    return reply;
  }

  const std::string prefix = "/v1/";
  std::optional<Endpoint> e;
  if (path.rfind(prefix, 0) == 0) e = endpoint_from_name(std::string_view(path).substr(prefix.size()));
  if (!e) {
    reply.status = 404;
    reply.body = error_body("UnknownEndpoint", path).dump();
    return reply;
  }

  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception&) {
    reply.status = 400;
    reply.body = error_body("SchemaViolation", "request body is not JSON").dump();
    return reply;
  }

  TranscriptEntry entry;
  entry.seq = transcript_.size();
  entry.endpoint = std::string(endpoint_name(*e));
  entry.fingerprint = request_fingerprint(*e, request);
  entry.request = request;

  std::optional<std::size_t> hit;
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    const auto& rule = script_.rules[i];
    if (consumed_[i] || rule.endpoint != *e) continue;
    if (rule.fingerprint && *rule.fingerprint != entry.fingerprint) continue;
    if (!json_subset_match(rule.match, request)) continue;
    hit = i;
    break;
  }

  if (!hit) {
    entry.status = 404;
    entry.response = error_body("UnmatchedRequest", entry.fingerprint);
  } else if (failures_served_[*hit] < script_.rules[*hit].fail_times) {
    ++failures_served_[*hit];
    entry.status = 503;
    entry.response = error_body("Unavailable", "scripted failure");
  } else {
    const auto& rule = script_.rules[*hit];
    if (!rule.repeat) consumed_[*hit] = true;
    entry.status = rule.status;
    entry.response = rule.response;
  }
  reply.status = entry.status;
  reply.body = entry.response.dump();
  transcript_.push_back(std::move(entry));
  return reply;
}

std::vector<TranscriptEntry> MockBackend::transcript() const {
  std::lock_guard lock(mu_);
  return transcript_;
}

std::string MockBackend::transcript_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& t : transcript_) {
    json line{{"seq", t.seq},         {"endpoint", t.endpoint}, {"fingerprint", t.fingerprint},
              {"request", t.request}, {"status", t.status},     {"response", t.response}};
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::size_t MockBackend::pending_rules() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    if (!consumed_[i] && !script_.rules[i].repeat) ++n;
  }
  return n;
}

// ---------------------------------------------------------------------------

struct MockServer::Impl {
  httplib::Server server;
  std::thread thread;
};

MockServer::MockServer(std::shared_ptr<MockBackend> backend, const std::string& host, int port)
    : backend_(std::move(backend)), impl_(std::make_unique<Impl>()), host_(host) {
  auto handler = [b = backend_](const httplib::Request& req, httplib::Response& res) {
    HttpReply reply = b->handle(req.path, req.body);
    res.status = reply.status;
    res.set_header("X-Request-Id", req.get_header_value("X-Request-Id"));
    res.set_content(reply.body, "application/json");
  };
  impl_->server.Post(R"(/v1/[a-z]+)", handler);

  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
  } else {
    port_ = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw Error(ErrorCode::kIo, "cannot bind mock server to " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockServer::~MockServer() { stop(); }

std::string MockServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

void MockServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::unique_ptr<MockServer> serve_mock(MockScript script, const std::string& host, int port) {
  return std::make_unique<MockServer>(std::make_shared<MockBackend>(std::move(script)), host, port);
}

}  // namespace roomgraph
