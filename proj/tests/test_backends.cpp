#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "roomgraph/backends.hpp"
#include "roomgraph/digest.hpp"
#include "roomgraph/error.hpp"
#include "roomgraph/prompts.hpp"
#include "support/fixtures.hpp"

using namespace roomgraph;
using namespace std::chrono_literals;

namespace {

ClientOptions fast_options() {
  ClientOptions o;
  o.retry.backoff = 1ms;
  o.retry.deadline = 5000ms;
  return o;
}

BackendClient mock_client(const std::shared_ptr<MockBackend>& backend) {
  return BackendClient(make_mock_transport(backend), fast_options());
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kIo;
}

json detect_rule() {
  return json::parse(R"({"rules": [
    {"endpoint": "detect", "match": {"labels": ["desk"]},
     "response": {"detections": {"desk": [{"bbox": [40, 300, 340, 460], "score": 0.9},
                                          {"bbox": [400, 300, 600, 460], "score": 0.6}]}}}
  ]})");
}

class CountingTransport : public Transport {
 public:
  explicit CountingTransport(HttpReply reply) : reply_(std::move(reply)) {}
  HttpReply post(const HttpRequest& req) override {
    ++calls;
    HttpReply r = reply_;
    if (echo) r.request_id = req.request_id;
    return r;
  }
  std::atomic<int> calls{0};
  bool echo = true;

 private:
  HttpReply reply_;
};

class SlowTransport : public Transport {
 public:
  HttpReply post(const HttpRequest& req) override {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(5ms);
    --active;
    return HttpReply{200, R"({"text": "ok"})", req.request_id, ""};
  }
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
};

}  // namespace

TEST_CASE("digest primitives") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(content_ref("") == "sha256:e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(base64_encode("Man") == "TWFu");
  CHECK(base64_encode("Ma") == "TWE=");
  CHECK(base64_decode("TWE=") == "Ma");
  CHECK(base64_decode("TQ==") == "M");
  const std::string bin("\x00\xff\x10\x80\x7f", 5);
  CHECK(base64_decode(base64_encode(bin)) == bin);
  CHECK_THROWS_AS(base64_decode("abc"), Error);
}

TEST_CASE("endpoint names and paths") {
  for (Endpoint e : kAllEndpoints) {
    CHECK(endpoint_from_name(endpoint_name(e)) == e);
    CHECK(endpoint_path(e) == "/v1/" + std::string(endpoint_name(e)));
  }
  CHECK_FALSE(endpoint_from_name("caption"));
}

TEST_CASE("prompt templates") {
  CHECK(prompts::kSystem == "You are an assistant who perfectly describes images.");
  const auto sub = prompts::subobject_prompt("desk");
  CHECK(sub.find("{container}") == std::string::npos);
  CHECK(sub.find("Given an image of a \"desk\"") == 0);
  CHECK(sub.find("If there is no suitable object, please return -1.") != std::string::npos);
  const auto sel = prompts::select_prompt({"red", "green"}, "left chair");
  CHECK(sel.find("contains 2 bounding boxes") != std::string::npos);
  CHECK(sel.find("The colors of these boxes include: red, green.") != std::string::npos);
  CHECK(sel.find("Following is the provided description: \"left chair\"") != std::string::npos);
  const auto gq = prompts::graph_vqa_prompt({"desk", "mug"});
  CHECK(gq.find("between the objects (desk, mug) marked as point") != std::string::npos);
  CHECK(gq.find("support, contain, attach, and hang") != std::string::npos);
  CHECK(prompts::render("{a}{a}{b}", {{"a", "x"}, {"b", "{a}"}}) == "xx{a}");
}

TEST_CASE("request schema validation") {
  CHECK_NOTHROW(validate_request(Endpoint::kDetect, {{"image", "sha256:aa"}, {"labels", {"desk"}}}));
  CHECK(code_of([] { validate_request(Endpoint::kDetect, {{"image", "sha256:aa"}, {"labels", json::array()}}); }) ==
        ErrorCode::kSchemaViolation);
  CHECK(code_of([] { validate_request(Endpoint::kDetect, {{"labels", {"desk"}}}); }) == ErrorCode::kSchemaViolation);
  CHECK(code_of([] {
          validate_request(Endpoint::kDetect,
                           {{"image", "x"}, {"labels", {"desk"}}, {"region", {10, 10, 5, 20}}});
        }) == ErrorCode::kSchemaViolation);
  CHECK_NOTHROW(validate_request(Endpoint::kSubobjects, {{"image", "x"},
                                                         {"prompt", "p"},
                                                         {"container", "desk"},
                                                         {"region", {0, 0, 10, 10}}}));
  CHECK(code_of([] {
          validate_request(Endpoint::kSelect,
                           {{"image", "x"}, {"prompt", "p"}, {"description", "d"},
                            {"candidates", {{{"color", "red"}, {"bbox", {0, 0, 1, 1}}}}}});
        }) == ErrorCode::kSchemaViolation);
  CHECK_NOTHROW(validate_request(Endpoint::kCot, {{"graph", json::object()}, {"prompt", "p"}}));
  CHECK_NOTHROW(validate_request(Endpoint::kClipscore, {{"image", "x"}, {"prompts", {"a", "b"}}}));
}

TEST_CASE("response schema validation") {
  CHECK_NOTHROW(validate_response(Endpoint::kDetect, {{"detections", {{"desk", json::array()}}}}));
  CHECK(code_of([] {
          validate_response(Endpoint::kDetect, {{"detections", {{"desk", {{{"bbox", {0, 0, 1, 1}}}}}}}});
        }) == ErrorCode::kSchemaViolation);
  CHECK(code_of([] {
          validate_response(Endpoint::kDetect,
                            {{"detections", {{"desk", {{{"bbox", {0, 0, 1, 1}}, {"score", 1.5}}}}}}});
        }) == ErrorCode::kSchemaViolation);
  const json req{{"image", "x"}, {"labels", {"desk", "mug"}}};
  CHECK(code_of([&] { validate_response(Endpoint::kDetect, {{"detections", {{"desk", json::array()}}}}, &req); }) ==
        ErrorCode::kSchemaViolation);
  const json clip{{"image", "x"}, {"prompts", {"a", "b"}}};
  CHECK(code_of([&] { validate_response(Endpoint::kClipscore, {{"scores", {0.5}}}, &clip); }) ==
        ErrorCode::kSchemaViolation);
  CHECK(code_of([] { validate_response(Endpoint::kDescribe, {{"txt", "a"}}); }) == ErrorCode::kSchemaViolation);
}

TEST_CASE("detect call against the mock returns scored candidates") {
  auto backend = std::make_shared<MockBackend>(MockScript::from_json(detect_rule()));
  auto client = mock_client(backend);
  const json resp = client.call(Endpoint::kDetect, {{"image", "sha256:00"}, {"labels", {"desk"}}});
  const Detections d = parse_detections(resp);
  REQUIRE(d.at("desk").size() == 2);
  CHECK(d.at("desk")[0].bbox == BBox{40, 300, 340, 460});
  CHECK(d.at("desk")[0].score == doctest::Approx(0.9));
  CHECK(d.at("desk")[1].score == doctest::Approx(0.6));
  CHECK(backend->pending_rules() == 0);
  // Consumed rules do not match again.
  CHECK(code_of([&] { client.call(Endpoint::kDetect, {{"image", "sha256:00"}, {"labels", {"desk"}}}); }) ==
        ErrorCode::kUnmatchedRequest);
}

TEST_CASE("malformed response missing score is a schema violation") {
  auto script = MockScript::from_json(json::parse(R"({"rules": [
    {"endpoint": "detect", "unchecked": true,
     "response": {"detections": {"desk": [{"bbox": [0, 0, 10, 10]}]}}}]})"));
  auto backend = std::make_shared<MockBackend>(script);
  auto client = mock_client(backend);
  CHECK(code_of([&] { client.call(Endpoint::kDetect, {{"image", "x"}, {"labels", {"desk"}}}); }) ==
        ErrorCode::kSchemaViolation);
  // The same response is rejected at script load without the opt-out.
  CHECK(code_of([] {
          MockScript::from_json(json::parse(R"({"rules": [{"endpoint": "detect",
            "response": {"detections": {"desk": [{"bbox": [0, 0, 10, 10]}]}}}]})"));
        }) == ErrorCode::kConfig);
}

TEST_CASE("backend down gives Transport after the configured attempts") {
  auto t = std::make_shared<CountingTransport>(HttpReply{0, "", "", "Connection refused"});
  BackendClient client(t, fast_options());
  CHECK(code_of([&] { client.call(Endpoint::kDepth, {{"image", "x"}}); }) == ErrorCode::kTransport);
  CHECK(t->calls == 3);

  auto t5 = std::make_shared<CountingTransport>(HttpReply{503, "{}", "", ""});
  ClientOptions o = fast_options();
  o.retry.attempts = 5;
  BackendClient client5(t5, o);
  CHECK(code_of([&] { client5.call(Endpoint::kDepth, {{"image", "x"}}); }) == ErrorCode::kTransport);
  CHECK(t5->calls == 5);

  // Client errors are not retried.
  auto t4 = std::make_shared<CountingTransport>(HttpReply{400, R"({"error": {"kind": "Bad"}})", "", ""});
  BackendClient client4(t4, fast_options());
  CHECK(code_of([&] { client4.call(Endpoint::kDepth, {{"image", "x"}}); }) == ErrorCode::kBackendFailure);
  CHECK(t4->calls == 1);
}

TEST_CASE("real socket: closed port is a transport failure") {
  std::string url;
  {
    auto server = serve_mock(MockScript{});
    url = server->url();
  }
  BackendClient client(make_http_transport(url), fast_options());
  CHECK(code_of([&] { client.call(Endpoint::kDepth, {{"image", "x"}}); }) == ErrorCode::kTransport);
}

TEST_CASE("deadline bounds the whole call") {
  auto t = std::make_shared<CountingTransport>(HttpReply{0, "", "", "timeout"});
  ClientOptions o;
  o.retry.attempts = 10;
  o.retry.backoff = 200ms;
  o.retry.deadline = 300ms;
  BackendClient client(t, o);
  const auto start = std::chrono::steady_clock::now();
  CHECK(code_of([&] { client.call(Endpoint::kDepth, {{"image", "x"}}); }) == ErrorCode::kTransport);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(elapsed < 1000ms);
  CHECK(t->calls < 10);
}

TEST_CASE("scripted transient failures are retried") {
  auto script = MockScript::from_json(json::parse(R"({"rules": [
    {"endpoint": "describe", "fail_times": 2, "response": {"text": "-1"}}]})"));
  auto backend = std::make_shared<MockBackend>(script);
  auto client = mock_client(backend);
  CHECK(response_text(client.call(Endpoint::kDescribe, {{"image", "x"}, {"prompt", "p"}})) == "-1");
  const auto tr = backend->transcript();
  REQUIRE(tr.size() == 3);
  CHECK(tr[0].status == 503);
  CHECK(tr[1].status == 503);
  CHECK(tr[2].status == 200);
  CHECK(tr[0].fingerprint == tr[2].fingerprint);

  auto script3 = MockScript::from_json(json::parse(R"({"rules": [
    {"endpoint": "describe", "fail_times": 3, "response": {"text": "-1"}}]})"));
  auto client3 = mock_client(std::make_shared<MockBackend>(script3));
  CHECK(code_of([&] { client3.call(Endpoint::kDescribe, {{"image", "x"}, {"prompt", "p"}}); }) ==
        ErrorCode::kTransport);
}

TEST_CASE("refusals surface as BackendRefusal") {
  auto script = MockScript::from_json(json::parse(R"({"rules": [
    {"endpoint": "describe", "response": {"refusal": "I can't help with that."}}]})"));
  auto client = mock_client(std::make_shared<MockBackend>(script));
  try {
    client.call(Endpoint::kDescribe, {{"image", "x"}, {"prompt", "p"}});
    FAIL("expected refusal");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBackendRefusal);
    CHECK(e.detail() == "I can't help with that.");
  }
}

TEST_CASE("request id correlation") {
  auto t = std::make_shared<CountingTransport>(HttpReply{200, R"({"text": "a"})", "999999", ""});
  t->echo = false;
  BackendClient client(t, fast_options());
  CHECK(code_of([&] { client.call(Endpoint::kDescribe, {{"image", "x"}, {"prompt", "p"}}); }) ==
        ErrorCode::kTransport);
}

TEST_CASE("in-flight limit bounds concurrency") {
  auto t = std::make_shared<SlowTransport>();
  ClientOptions o = fast_options();
  o.max_in_flight = 3;
  BackendClient client(t, o);
  std::vector<std::thread> threads;
  for (int i = 0; i < 12; ++i) {
    threads.emplace_back([&] {
      for (int k = 0; k < 3; ++k) client.call(Endpoint::kDescribe, {{"image", "x"}, {"prompt", "p"}});
    });
  }
  for (auto& th : threads) th.join();
  CHECK(t->peak <= 3);
  CHECK(t->peak >= 1);
}

TEST_CASE("fingerprint rules and subset matching") {
  const json req{{"image", "x"}, {"labels", {"desk"}}};
  const auto fp = request_fingerprint(Endpoint::kDetect, req);
  CHECK(fp.size() == 64);
  CHECK(fp == request_fingerprint(Endpoint::kDetect, json::parse(R"({"labels":["desk"],"image":"x"})")));
  CHECK(fp != request_fingerprint(Endpoint::kSegment, req));

  json doc = detect_rule();
  doc["rules"][0].erase("match");
  doc["rules"][0]["fingerprint"] = fp;
  auto client = mock_client(std::make_shared<MockBackend>(MockScript::from_json(doc)));
  CHECK(code_of([&] { client.call(Endpoint::kDetect, {{"image", "y"}, {"labels", {"desk"}}}); }) ==
        ErrorCode::kUnmatchedRequest);
  CHECK_NOTHROW(client.call(Endpoint::kDetect, req));

  CHECK(json_subset_match(json::parse(R"({"a": 1})"), json::parse(R"({"a": 1.0, "b": 2})")));
  CHECK_FALSE(json_subset_match(json::parse(R"({"a": [1]})"), json::parse(R"({"a": [1, 2]})")));
  CHECK(json_subset_match(json(), json::parse("[1]")));
}

TEST_CASE("parse_model_object_json") {
  const std::string example =
      R"({"object1": {"description": "trash bin with liner", "container": "False"}, "object2": {"description": "retangular dinner table with tablecloths", "container": "True"}, "object3": {"description": "wooden shelf with electronic devices", "container": "True" }})";
  const auto objs = parse_model_object_json(example);
  REQUIRE(objs.size() == 3);
  CHECK(objs[0] == DescribedObject{"trash bin with liner", false});
  CHECK(objs[1] == DescribedObject{"retangular dinner table with tablecloths", true});
  CHECK(objs[2] == DescribedObject{"wooden shelf with electronic devices", true});

  CHECK(parse_model_object_json("-1").empty());
  CHECK(parse_model_object_json("  -1\n").empty());
  CHECK(parse_model_object_json("```\n-1\n```").empty());

  const auto prose = parse_model_object_json(
      "Sure! Here is the list:\n```json\n{\"object1\": {\"description\": \"mug\"}}\n```\nHope this helps.");
  REQUIRE(prose.size() == 1);
  CHECK(prose[0] == DescribedObject{"mug", false});

  const auto ordered = parse_model_object_json(
      R"({"object10": {"description": "j"}, "object2": {"description": "b"}, "object1": {"description": "a", "container": true}})");
  REQUIRE(ordered.size() == 3);
  CHECK(ordered[0] == DescribedObject{"a", true});
  CHECK(ordered[1].description == "b");
  CHECK(ordered[2].description == "j");

  CHECK(parse_model_object_json("{}").empty());
  CHECK(code_of([] { parse_model_object_json("I see a desk and a chair."); }) == ErrorCode::kUnparseable);
  CHECK(code_of([] { parse_model_object_json(R"({"item1": {"description": "a"}})"); }) ==
        ErrorCode::kSchemaViolation);
  CHECK(code_of([] { parse_model_object_json(R"({"object1": {"container": "True"}})"); }) ==
        ErrorCode::kSchemaViolation);
  CHECK(code_of([] { parse_model_object_json(R"({"object1": {"description": "a", "container": "maybe"}})"); }) ==
        ErrorCode::kSchemaViolation);
}

TEST_CASE("parse_select_color") {
  CHECK(parse_select_color(R"({"reason": "left one", "color": "Green"})") == "green");
  CHECK_FALSE(parse_select_color("green"));
  CHECK_FALSE(parse_select_color(R"({"reason": "none"})"));
}

TEST_CASE("depth and mask payloads") {
  DepthMap d{3, 2, {1.0f, 2.0f, 0.0f, 0.5f, 4.25f, 3.0f}};
  const json enc = encode_depth(d, 0.5);
  CHECK_NOTHROW(validate_response(Endpoint::kDepth, enc));
  const DepthMap back = decode_depth(enc);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.values == d.values);

  json bad = enc;
  bad["width"] = 4;
  CHECK(code_of([&] { decode_depth(bad); }) == ErrorCode::kSchemaViolation);

  Mask m(4, 3);
  m.set(1, 1);
  m.set(2, 1);
  const json masks{{"masks",
                    {{{"label", "mug"}, {"rle", {{"size", {3, 4}}, {"counts", m.to_rle()}}}},
                     {{"label", "cup"}, {"rle", {{"size", {3, 4}}, {"counts", m.to_counts()}}}}}}};
  const auto decoded = decode_masks(masks);
  REQUIRE(decoded.size() == 2);
  CHECK(decoded[0].first == "mug");
  CHECK(decoded[0].second == m);
  CHECK(decoded[1].second == m);
}

TEST_CASE("mock server over HTTP: replay determinism") {
  const json doc = json::parse(read_fixture("office_script.json"));
  auto run = [&doc] {
    auto server = serve_mock(MockScript::from_json(doc));
    BackendClient client(make_http_transport(server->url()), fast_options());
    const json d = client.call(Endpoint::kDescribe, {{"image", "sha256:ab"}, {"prompt", prompts::object_prompt()}});
    CHECK(parse_model_object_json(response_text(d)).size() == 3);
    const json det =
        client.call(Endpoint::kDetect, {{"image", "sha256:ab"}, {"labels", {"desk", "chair", "lamp"}}});
    CHECK(parse_detections(det).at("lamp").size() == 1);
    return server->backend().transcript_jsonl();
  };
  const std::string a = run();
  const std::string b = run();
  CHECK_FALSE(a.empty());
  CHECK(a == b);
  CHECK(std::count(a.begin(), a.end(), '\n') == 2);
}

TEST_CASE("mock server over HTTP: unmatched request, blobs, clean shutdown") {
  auto server = serve_mock(MockScript{});
  BackendClient client(make_http_transport(server->url()), fast_options());
  try {
    client.call(Endpoint::kDepth, {{"image", "x"}});
    FAIL("expected UnmatchedRequest");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnmatchedRequest);
    CHECK(e.detail() == request_fingerprint(Endpoint::kDepth, {{"image", "x"}}));
  }
  const std::string bytes("\x89PNG fake image bytes", 21);
  CHECK(client.upload_blob(bytes) == content_ref(bytes));
  server->stop();
  server->stop();

  auto idle = serve_mock(MockScript{});
  CHECK(idle->port() > 0);
  idle.reset();
}

TEST_CASE("accepted responses re-validate against their schema") {
  const json doc = json::parse(read_fixture("office_script.json"));
  auto backend = std::make_shared<MockBackend>(MockScript::from_json(doc));
  auto client = mock_client(backend);
  const json req{{"image", "x"}, {"labels", {"desk", "chair", "lamp"}}};
  const json resp = client.call(Endpoint::kDetect, req);
  CHECK_NOTHROW(validate_response(Endpoint::kDetect, json::parse(resp.dump()), &req));
}
