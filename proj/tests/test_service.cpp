#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <latch>
#include <random>
#include <set>
#include <thread>

#include "roomgraph/scenevqa.hpp"
#include "roomgraph/service.hpp"
#include "support/fixtures.hpp"

// After Eigen: resolv.h defines a _res macro.
#include <httplib.h>

using namespace roomgraph;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("roomgraph-store-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

StoreOptions fixed_clock() {
  StoreOptions o;
  o.clock = [] { return std::string("2024-01-01T00:00:00.000Z"); };
  return o;
}

SceneGraph toy() { return parse_graph(read_fixture("toy_graph.json")); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

std::set<RelationTriple> triple_set(const SceneGraph& g) {
  auto t = to_pairwise(g);
  return {t.begin(), t.end()};
}

}  // namespace

TEST_CASE("enqueue stores the proposal as model revision 0") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  const auto id = store.enqueue("sha256:aa", {}, toy());
  CHECK(id == "scene-000001");
  const auto r = store.get(id);
  REQUIRE(r.revisions.size() == 1);
  CHECK(r.revisions[0].id == 0);
  CHECK(r.revisions[0].author == Author::kModel);
  CHECK(r.revisions[0].graph == toy());
  CHECK(r.status == SceneStatus::kPending);
  CHECK(r.object_list.size() == 7);
  CHECK(store.enqueue("sha256:bb", {"mug"}, std::nullopt) == "scene-000002");
}

TEST_CASE("enqueue errors and duplicate images") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  const auto id = store.enqueue("sha256:aa", {}, toy());
  CHECK(code_of([&] { store.enqueue("sha256:aa", {"mug"}, std::nullopt); }) == ErrorCode::kDuplicateImage);
  CHECK(code_of([&] { store.enqueue("sha256:cc", {}, std::nullopt); }) == ErrorCode::kInvalidArgument);
  const auto bare = store.enqueue("sha256:dd", {"mug", "desk"}, std::nullopt);
  const auto r = store.get(bare);
  CHECK(r.revisions.empty());
  CHECK(r.status == SceneStatus::kPending);
  store.approve(id, true);
  CHECK_NOTHROW(store.enqueue("sha256:aa", {}, toy()));
  CHECK(code_of([&] { store.get("scene-999999"); }) == ErrorCode::kUnknownScene);
}

TEST_CASE("move mug to the floor swaps exactly one triple") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  const auto id = store.enqueue("sha256:aa", {}, toy());
  const int rev = store.apply_correction(id, {0, {EditOp::move_subtree("mug", "floor", Relation::kSupport)}});
  CHECK(rev == 1);
  const auto r = store.get(id);
  CHECK(r.status == SceneStatus::kInReview);
  CHECK(r.revisions[1].author == Author::kHuman);
  const auto before = triple_set(r.revisions[0].graph);
  const auto after = triple_set(r.revisions[1].graph);
  std::vector<RelationTriple> gone, added;
  std::set_difference(before.begin(), before.end(), after.begin(), after.end(), std::back_inserter(gone));
  std::set_difference(after.begin(), after.end(), before.begin(), before.end(), std::back_inserter(added));
  REQUIRE(gone.size() == 1);
  REQUIRE(added.size() == 1);
  CHECK(gone[0] == RelationTriple{"desk", Relation::kSupport, "mug"});
  CHECK(added[0] == RelationTriple{"floor", Relation::kSupport, "mug"});
}

TEST_CASE("stale base and invalid edits are rejected without a new revision") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  const auto id = store.enqueue("sha256:aa", {}, toy());
  store.apply_correction(id, {0, {EditOp::rename("mug", "cup")}});
  try {
    store.apply_correction(id, {0, {EditOp::rename("cup", "glass")}});
    FAIL("expected StaleBase");
  } catch (const StaleBase& e) {
    CHECK(e.code() == ErrorCode::kStaleBase);
    CHECK(e.latest() == 1);
  }
  CHECK(code_of([&] { store.apply_correction(id, {1, {EditOp::add_relation("floor", Relation::kSupport, "cup")}}); }) ==
        ErrorCode::kInvalidEdit);
  CHECK(code_of([&] { store.apply_correction(id, {1, {EditOp::move_subtree("desk", "cup", Relation::kSupport)}}); }) ==
        ErrorCode::kInvalidEdit);
  CHECK(code_of([&] {
          store.apply_correction(id, {1, {EditOp::rename("cup", "glass"), EditOp::remove_relation("floor", "cup")}});
        }) == ErrorCode::kInvalidEdit);
  CHECK(code_of([&] { store.apply_correction(id, {std::nullopt, {}}); }) == ErrorCode::kStaleBase);
  CHECK(store.get(id).revisions.size() == 2);
}

TEST_CASE("edit operations") {
  SceneGraph g = toy();
  apply_ops(g, {EditOp::remove_relation("floor", "desk")});
  CHECK_FALSE(g.contains("desk"));
  CHECK_FALSE(g.contains("mug"));
  g = toy();
  apply_ops(g, {EditOp::set_relation("desk", "notebook", Relation::kContain), EditOp::rename("chair", "stool"),
                EditOp::add_relation("stool", Relation::kSupport, "cushion")});
  CHECK(g.parent_of("notebook")->relation == Relation::kContain);
  CHECK(g.parent_of("cushion")->parent == "stool");
  CHECK_FALSE(g.contains("chair"));

  const Correction c{3, {EditOp::move_subtree("a", "b", Relation::kHang), EditOp::rename("x", "y"),
                         EditOp::remove_relation("p", "q"), EditOp::set_relation("p", "q", Relation::kAttach),
                         EditOp::add_relation("p", Relation::kContain, "q")}};
  const auto back = correction_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(back.base_revision == 3);
  REQUIRE(back.ops.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(to_json(back.ops[i]) == to_json(c.ops[i]));
  CHECK_THROWS_AS(edit_op_from_json(nlohmann::json{{"op", "explode"}}), Error);
  CHECK_THROWS_AS(edit_op_from_json(nlohmann::json{{"op", "rename"}}), Error);
  CHECK_THROWS_AS(correction_from_json(nlohmann::json{{"ops", nlohmann::json::array()}}), Error);
}

TEST_CASE("approval rules and status transitions") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  const auto a = store.enqueue("sha256:aa", {}, toy());
  const auto b = store.enqueue("sha256:bb", {"lamp"}, std::nullopt);
  CHECK(code_of([&] { store.approve(a, false); }) == ErrorCode::kInvalidTransition);
  CHECK(code_of([&] { store.approve(b, true); }) == ErrorCode::kInvalidTransition);
  CHECK(store.approve(a, true) == 0);
  CHECK(store.get(a).status == SceneStatus::kApproved);
  CHECK(store.get(a).accepted_as_is);

  CHECK(store.apply_correction(b, {std::nullopt, {EditOp::add_relation("floor", Relation::kSupport, "lamp")}}) == 0);
  CHECK(store.get(b).status == SceneStatus::kInReview);
  CHECK(store.approve(b, false) == 0);
  CHECK_FALSE(store.get(b).accepted_as_is);
  CHECK(store.approve(b, false) == 0);
}

TEST_CASE("export follows the newest approved revision") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  CHECK(store.export_jsonl().empty());
  const auto id = store.enqueue("sha256:aa", {}, toy());
  CHECK(store.export_jsonl().empty());
  store.apply_correction(id, {0, {EditOp::rename("mug", "cup")}});
  store.approve(id, false);
  auto recs = read_jsonl(store.export_jsonl());
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].graph == store.get(id).revisions.back().graph);
  CHECK(recs[0].provenance == Provenance::kApproved);
  CHECK(recs[0].id == id);
  CHECK(parse_graph(*graph_answer_json(recs[0].answer)) == *recs[0].graph);

  store.apply_correction(id, {1, {EditOp::rename("cup", "glass")}});
  recs = read_jsonl(store.export_jsonl());
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].graph->contains("cup"));
  store.approve(id, false);
  recs = read_jsonl(store.export_jsonl());
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].graph->contains("glass"));
}

TEST_CASE("queue paging and filters") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  CHECK(store.queue(SceneStatus::kApproved, 0).empty());
  for (int i = 0; i < 3; ++i) store.enqueue("sha256:" + std::to_string(i), {"a", "b"}, std::nullopt);
  const auto q = store.queue(SceneStatus::kPending, 0);
  REQUIRE(q.size() == 3);
  CHECK(q[0].scene_id == "scene-000001");
  CHECK(q[2].scene_id == "scene-000003");
  CHECK(q[0].object_count == 2);
  CHECK(q[0].revision_count == 0);
  CHECK(store.queue(std::nullopt, 1, 2).size() == 1);
  CHECK(store.queue(std::nullopt, 5).empty());
  CHECK(store.count(SceneStatus::kPending) == 3);
  CHECK(to_json(q[0]).dump() == R"({"sceneId":"scene-000001","status":"pending","revisionCount":0,"objectCount":2})");
}

TEST_CASE("reopening replays the log and export is byte reproducible") {
  TempDir dir;
  std::string first;
  {
    SceneStore store(dir.path, fixed_clock());
    for (int i = 0; i < 4; ++i) {
      const auto id = store.enqueue("sha256:" + std::to_string(i), {}, toy());
      if (i % 2 == 0) {
        store.apply_correction(id, {0, {EditOp::move_subtree("mug", "floor", Relation::kSupport)}});
        store.approve(id, false);
      }
    }
    store.approve("scene-000002", true);
    first = store.export_jsonl();
    CHECK(first == store.export_jsonl());
  }
  SceneStore reopened(dir.path, fixed_clock());
  CHECK(reopened.export_jsonl() == first);
  CHECK(read_jsonl(first).size() == 3);
  CHECK(reopened.get("scene-000001").revisions.size() == 2);
  CHECK(reopened.get("scene-000004").status == SceneStatus::kPending);
  CHECK(reopened.enqueue("sha256:new", {"x"}, std::nullopt) == "scene-000005");
}

TEST_CASE("property: revision history is append-only") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  const auto id = store.enqueue("sha256:aa", {}, toy());
  std::mt19937_64 rng(8);
  const std::vector<std::string> parents = {"floor", "desk", "chair", "bookshelf_0"};
  std::string prev = slurp(store.log_path(id));
  std::vector<std::string> snapshots = {serialize_graph(store.get(id).revisions[0].graph)};
  for (int step = 0; step < 60; ++step) {
    const auto r = store.get(id);
    const std::string label = "item" + std::to_string(step);
    std::vector<EditOp> ops;
    switch (rng() % 3) {
      case 0: ops = {EditOp::add_relation(parents[rng() % parents.size()], Relation::kSupport, label)}; break;
      case 1: ops = {EditOp::move_subtree("mug", parents[rng() % parents.size()], Relation::kSupport)}; break;
      default: ops = {EditOp::add_relation("mug", Relation::kContain, "mug")}; break;
    }
    try {
      store.apply_correction(id, {r.latest_revision(), ops});
      snapshots.push_back(serialize_graph(store.get(id).revisions.back().graph));
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidEdit);
    }
    const std::string now = slurp(store.log_path(id));
    CHECK(now.compare(0, prev.size(), prev) == 0);
    prev = now;
    const auto revs = store.get(id).revisions;
    REQUIRE(revs.size() == snapshots.size());
    for (std::size_t i = 0; i < revs.size(); ++i) {
      CHECK(serialize_graph(revs[i].graph) == snapshots[i]);
      CHECK(validate(revs[i].graph).ok());
    }
  }
}

TEST_CASE("torn final line is dropped on recovery") {
  TempDir dir;
  std::string id;
  {
    SceneStore store(dir.path, fixed_clock());
    id = store.enqueue("sha256:aa", {}, toy());
    store.apply_correction(id, {0, {EditOp::rename("mug", "cup")}});
  }
  const auto log = SceneStore(dir.path).log_path(id);
  const std::string intact = slurp(log);
  {
    std::ofstream out(log, std::ios::app | std::ios::binary);
    out << R"({"event":"revision","revisionId":2,"au)";
  }
  SceneStore store(dir.path, fixed_clock());
  CHECK(store.get(id).revisions.size() == 2);
  CHECK(slurp(log) == intact);
  CHECK(store.apply_correction(id, {1, {EditOp::rename("cup", "glass")}}) == 2);

  {
    std::ofstream out(log, std::ios::app | std::ios::binary);
    out << "garbage\n";
  }
  CHECK(code_of([&] { SceneStore again(dir.path); }) == ErrorCode::kIo);
}

TEST_CASE("concurrent corrections on one base: exactly one wins") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  const auto id = store.enqueue("sha256:aa", {}, toy());
  int successes = 0, stale = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int base = store.get(id).latest_revision();
    std::atomic<int> ok{0}, conflict{0};
    std::latch start(2);
    auto writer = [&](std::string label) {
      start.arrive_and_wait();
      try {
        store.apply_correction(id, {base, {EditOp::add_relation("floor", Relation::kSupport, label)}});
        ++ok;
      } catch (const StaleBase& e) {
        if (e.latest() == base + 1) ++conflict;
      }
    };
    std::thread a(writer, "a" + std::to_string(trial));
    std::thread b(writer, "b" + std::to_string(trial));
    a.join();
    b.join();
    CHECK(ok == 1);
    CHECK(conflict == 1);
    successes += ok;
    stale += conflict;
    CHECK(store.get(id).latest_revision() == base + 1);
  }
  CHECK(successes == 100);
  CHECK(stale == 100);
  CHECK(SceneStore(dir.path).get(id).revisions.size() == 101);
}

TEST_CASE("cross-scene writers do not lose updates") {
  TempDir dir;
  SceneStore store(dir.path, fixed_clock());
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(store.enqueue("sha256:" + std::to_string(i), {}, toy()));
  std::atomic<int> applied{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int k = 0; k < 25; ++k) {
        const auto& id = ids[static_cast<std::size_t>((t + k) % 4)];
        for (;;) {
          const int base = store.get(id).latest_revision();
          try {
            store.apply_correction(
                id, {base, {EditOp::add_relation("floor", Relation::kSupport, "t" + std::to_string(t) + "-" +
                                                                               std::to_string(k))}});
            ++applied;
            break;
          } catch (const StaleBase&) {
          }
        }
        (void)store.queue(std::nullopt, 0);
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(applied == 200);
  std::size_t revisions = 0;
  for (const auto& id : ids) revisions += store.get(id).revisions.size();
  CHECK(revisions == 4 + 200);
}

TEST_CASE("HTTP API round trip") {
  TempDir dir;
  auto store = std::make_shared<SceneStore>(dir.path, fixed_clock());
  ServiceOptions opts;
  opts.bearer_token = "s3cret";
  ServiceServer server(store, opts);
  httplib::Client cli("127.0.0.1", server.port());
  const httplib::Headers auth = {{"Authorization", "Bearer s3cret"}};

  auto denied = cli.Get("/scenes");
  REQUIRE(denied);
  CHECK(denied->status == 401);

  nlohmann::json body{{"imageRef", "sha256:aa"}, {"proposal", nlohmann::json::parse(read_fixture("toy_graph.json"))}};
  auto res = cli.Post("/scenes", auth, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const auto scene = nlohmann::json::parse(res->body);
  const std::string id = scene["sceneId"];
  CHECK(scene["latestRevisionId"] == 0);

  res = cli.Post("/scenes", auth, body.dump(), "application/json");
  CHECK(res->status == 409);
  CHECK(nlohmann::json::parse(res->body)["error"]["kind"] == "DuplicateImage");

  res = cli.Post("/scenes", auth, R"({"imageRef":"sha256:zz","proposal":{"floor":{"support":[{"a":{}},{"a":{}}]}}})",
                 "application/json");
  CHECK(res->status == 422);
  res = cli.Post("/scenes", auth, "{not json", "application/json");
  CHECK(res->status == 400);

  res = cli.Get("/scenes?status=pending", auth);
  REQUIRE(res);
  auto list = nlohmann::json::parse(res->body);
  CHECK(list["total"] == 1);
  CHECK(list["scenes"][0]["sceneId"] == id);
  CHECK(cli.Get("/scenes?status=bogus", auth)->status == 400);
  CHECK(cli.Get("/scenes/scene-424242", auth)->status == 404);

  const std::string correction =
      R"({"baseRevisionId":0,"ops":[{"op":"move_subtree","child":"mug","newParent":"floor","relation":"support"}]})";
  res = cli.Post("/scenes/" + id + "/corrections", auth, correction, "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  CHECK(nlohmann::json::parse(res->body)["revisionId"] == 1);
  res = cli.Post("/scenes/" + id + "/corrections", auth, correction, "application/json");
  CHECK(res->status == 409);
  const auto err = nlohmann::json::parse(res->body)["error"];
  CHECK(err["kind"] == "StaleBase");
  CHECK(err["latestRevisionId"] == 1);
  res = cli.Post("/scenes/" + id + "/corrections", auth,
                 R"({"baseRevisionId":1,"ops":[{"op":"add_relation","parent":"desk","relation":"support","child":"chair"}]})",
                 "application/json");
  CHECK(res->status == 422);
  CHECK(nlohmann::json::parse(res->body)["error"]["kind"] == "InvalidEdit");

  res = cli.Post("/scenes/" + id + "/approve", auth, "{}", "application/json");
  CHECK(res->status == 200);
  res = cli.Get("/export?status=approved", auth);
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == store->export_jsonl());
  const auto recs = read_jsonl(res->body);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].graph->parent_of("mug")->parent == "floor");
  CHECK(cli.Get("/export?status=pending", auth)->status == 400);

  res = cli.Get("/scenes/" + id, auth);
  const auto full = nlohmann::json::parse(res->body);
  CHECK(full["status"] == "approved");
  CHECK(full["revisions"].size() == 2);
  CHECK(full["revisions"][1]["author"] == "human");

  res = cli.Post("/blobs", auth, "image-bytes", "application/octet-stream");
  REQUIRE(res);
  const std::string ref = nlohmann::json::parse(res->body)["ref"];
  CHECK(store->get_blob(ref) == std::optional<std::string>("image-bytes"));
  server.stop();
}
