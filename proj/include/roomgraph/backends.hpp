#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "roomgraph/geometry.hpp"

namespace roomgraph {

using json = nlohmann::json;

enum class Endpoint { kDescribe, kSubobjects, kSelect, kDetect, kSegment, kDepth, kClipscore, kCot };

inline constexpr Endpoint kAllEndpoints[] = {Endpoint::kDescribe, Endpoint::kSubobjects, Endpoint::kSelect,
                                             Endpoint::kDetect,   Endpoint::kSegment,    Endpoint::kDepth,
                                             Endpoint::kClipscore, Endpoint::kCot};

std::string_view endpoint_name(Endpoint e);
std::optional<Endpoint> endpoint_from_name(std::string_view name);
std::string endpoint_path(Endpoint e);  // "/v1/describe"
inline constexpr std::string_view kBlobPath = "/v1/blobs";

/// Fixed select palette, in assignment order.
inline constexpr std::string_view kPalette[] = {"red", "green", "blue", "yellow",
                                                "purple", "cyan", "orange", "magenta"};

// Schema checks; both throw Error(kSchemaViolation).
void validate_request(Endpoint e, const json& request);
/// `request`, when given, enables cross-checks (queried labels, prompt count).
void validate_response(Endpoint e, const json& response, const json* request = nullptr);

json bbox_to_json(const BBox& b);
BBox bbox_from_json(const json& j);

struct Candidate {
  BBox bbox;
  double score = 0.0;
};

using Detections = std::map<std::string, std::vector<Candidate>>;

std::string response_text(const json& response);
Detections parse_detections(const json& response);
std::vector<std::pair<std::string, Mask>> decode_masks(const json& response);
DepthMap decode_depth(const json& response);
/// Inverse of decode_depth: values are stored as float32(value / scale).
json encode_depth(const DepthMap& depth, double scale = 1.0);

struct DescribedObject {
  std::string description;
  bool container = false;

  bool operator==(const DescribedObject&) const = default;
};

/// Model output of the object / sub-object prompts: {"object1": {...}, ...}
/// ordered by numeric suffix. The sentinel "-1" is an empty list.
std::vector<DescribedObject> parse_model_object_json(std::string_view text);

/// "color" of a select answer, lowercased; nullopt when unreadable.
std::optional<std::string> parse_select_color(std::string_view text);

// ---------------------------------------------------------------------------
// Transport

struct HttpRequest {
  std::string path;
  std::string body;
  std::string content_type = "application/json";
  std::string request_id;
  std::string bearer_token;
  std::chrono::milliseconds timeout{30000};
};

struct HttpReply {
  int status = 0;  // 0: no HTTP response (connection refused, timeout...)
  std::string body;
  std::string request_id;
  std::string transport_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const HttpRequest& request) = 0;
};

/// HTTP/1.1 transport to "http://host:port".
std::shared_ptr<Transport> make_http_transport(std::string base_url);

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{250};
  std::chrono::milliseconds deadline{30000};
};

struct ClientOptions {
  RetryPolicy retry;
  int max_in_flight = 4;
  std::string bearer_token;
};

/// Shareable, thread-safe protocol client.
class BackendClient {
 public:
  explicit BackendClient(std::shared_ptr<Transport> transport, ClientOptions options = {});

  /// Validated request in, validated response out. Throws Transport,
  /// SchemaViolation, BackendRefusal, UnmatchedRequest or BackendFailure.
  json call(Endpoint e, const json& payload) const;
  /// Uploads image bytes and returns their content reference.
  std::string upload_blob(std::string_view bytes) const;

  const ClientOptions& options() const { return options_; }

 private:
  HttpReply send(const std::string& path, const std::string& body, const std::string& content_type) const;

  std::shared_ptr<Transport> transport_;
  ClientOptions options_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  mutable std::atomic<std::uint64_t> next_id_{1};
};

// ---------------------------------------------------------------------------
// Scripted mock backend

struct MockRule {
  Endpoint endpoint = Endpoint::kDescribe;
  json match;                       // subset pattern; null matches anything
  std::optional<std::string> fingerprint;
  json response;
  int status = 200;
  bool repeat = false;
  int fail_times = 0;               // 503 replies served before the response
  bool unchecked = false;           // skip response schema validation
};

struct MockScript {
  std::vector<MockRule> rules;

  /// {"rules": [{endpoint, match?, fingerprint?, response, status?, repeat?,
  ///             fail_times?, unchecked?}]}
  static MockScript from_json(const json& doc);
  static MockScript load(const std::filesystem::path& path);
};

/// Fingerprint of a request document: SHA-256 over endpoint name and the
/// key-sorted compact dump.
std::string request_fingerprint(Endpoint e, const json& request);

/// True when every member of `pattern` appears in `value` with a matching
/// value (objects recursively, arrays element-wise).
bool json_subset_match(const json& pattern, const json& value);

struct TranscriptEntry {
  std::size_t seq = 0;
  std::string endpoint;
  std::string fingerprint;
  json request;
  int status = 0;
  json response;
};

class MockBackend {
 public:
  explicit MockBackend(MockScript script);

  HttpReply handle(const std::string& path, const std::string& body);

  std::vector<TranscriptEntry> transcript() const;
  /// One compact JSON object per line.
  std::string transcript_jsonl() const;
  /// Non-repeating rules not yet consumed.
  std::size_t pending_rules() const;

 private:
  mutable std::mutex mu_;
  MockScript script_;
  std::vector<bool> consumed_;
  std::vector<int> failures_served_;
  std::vector<TranscriptEntry> transcript_;
  std::map<std::string, std::string> blobs_;
};

/// In-process transport over a MockBackend (no sockets).
std::shared_ptr<Transport> make_mock_transport(std::shared_ptr<MockBackend> backend);

/// HTTP server for a MockBackend; stops on destruction.
class MockServer {
 public:
  MockServer(std::shared_ptr<MockBackend> backend, const std::string& host = "127.0.0.1", int port = 0);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const { return port_; }
  std::string url() const;
  MockBackend& backend() { return *backend_; }
  void stop();
  /// Blocks until stop() is called from another thread or signal handler.
  void wait();

 private:
  struct Impl;
  std::shared_ptr<MockBackend> backend_;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_ = 0;
};

std::unique_ptr<MockServer> serve_mock(MockScript script, const std::string& host = "127.0.0.1", int port = 0);

}  // namespace roomgraph
