#include <thread>

#include <httplib.h>

#include "roomgraph/service.hpp"

namespace roomgraph {

using ojson = nlohmann::ordered_json;

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownScene: return 404;
    case ErrorCode::kDuplicateImage:
    case ErrorCode::kStaleBase:
    case ErrorCode::kInvalidTransition: return 409;
    case ErrorCode::kInvalidEdit:
    case ErrorCode::kMalformedGraph:
    case ErrorCode::kDuplicateLabel:
    case ErrorCode::kNonRootTopLevelKey:
    case ErrorCode::kUnknownRelation: return 422;
    case ErrorCode::kMalformedJson:
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kInvalidArgument: return 400;
    default: return 500;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& detail,
                const ojson& extra = ojson::object()) {
  ojson err{{"kind", kind}, {"detail", detail}};
  for (auto it = extra.begin(); it != extra.end(); ++it) err[it.key()] = it.value();
  send_json(res, status, ojson{{"error", err}});
}

nlohmann::json body_json(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kMalformedJson, e.what());
  }
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used == text.size() && v >= 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be a non-negative integer");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const StaleBase& e) {
      send_error(res, 409, "StaleBase", e.detail(), ojson{{"latestRevisionId", e.latest()}});
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), error_code_name(e.code()), e.detail());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "SchemaViolation", e.what());
    }
  };
}

}  // namespace

struct ServiceServer::Impl {
  httplib::Server server;
  std::thread thread;
};

ServiceServer::ServiceServer(std::shared_ptr<SceneStore> store, ServiceOptions options)
    : store_(std::move(store)), impl_(std::make_unique<Impl>()), options_(std::move(options)) {
  auto& srv = impl_->server;
  auto store_ptr = store_;

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  if (!options_.bearer_token.empty()) {
    const std::string expected = "Bearer " + options_.bearer_token;
    srv.set_pre_routing_handler([expected](const httplib::Request& req, httplib::Response& res) {
      if (req.method == "OPTIONS" || req.get_header_value("Authorization") == expected) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  srv.Post("/scenes", guarded([store_ptr](const httplib::Request& req, httplib::Response& res) {
             const auto body = body_json(req);
             if (!body.is_object()) throw Error(ErrorCode::kSchemaViolation, "body must be an object");
             const auto image = body.at("imageRef").get<std::string>();
             std::vector<std::string> objects;
             if (body.contains("objectList")) objects = body.at("objectList").get<std::vector<std::string>>();
             std::optional<SceneGraph> proposal;
             if (body.contains("proposal") && !body.at("proposal").is_null()) {
               proposal = parse_graph(body.at("proposal").dump(), {DuplicatePolicy::kReject});
             }
             const auto id = store_ptr->enqueue(image, std::move(objects), proposal);
             send_json(res, 201, to_json(store_ptr->get(id)));
           }));

  srv.Get("/scenes", guarded([store_ptr](const httplib::Request& req, httplib::Response& res) {
            std::optional<SceneStatus> status;
            if (req.has_param("status") && !req.get_param_value("status").empty()) {
              status = scene_status_from_name(req.get_param_value("status"));
              if (!status) throw Error(ErrorCode::kInvalidArgument, "unknown status " + req.get_param_value("status"));
            }
            const auto page = size_param(req, "page", 0);
            const auto page_size = size_param(req, "pageSize", 50);
            ojson scenes = ojson::array();
            for (const auto& s : store_ptr->queue(status, page, page_size)) scenes.push_back(to_json(s));
            send_json(res, 200,
                      ojson{{"scenes", scenes}, {"page", page}, {"pageSize", page_size}, {"total", store_ptr->count(status)}});
          }));

  srv.Get(R"(/scenes/([A-Za-z0-9_-]+))", guarded([store_ptr](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, to_json(store_ptr->get(req.matches[1])));
          }));

  srv.Post(R"(/scenes/([A-Za-z0-9_-]+)/corrections)",
           guarded([store_ptr](const httplib::Request& req, httplib::Response& res) {
             const auto c = correction_from_json(body_json(req));
             const int rev = store_ptr->apply_correction(req.matches[1], c);
             send_json(res, 201, ojson{{"sceneId", req.matches[1]}, {"revisionId", rev}});
           }));

  srv.Post(R"(/scenes/([A-Za-z0-9_-]+)/approve)",
           guarded([store_ptr](const httplib::Request& req, httplib::Response& res) {
             const auto body = body_json(req);
             const bool as_is = body.is_object() && body.value("acceptAsIs", false);
             const int rev = store_ptr->approve(req.matches[1], as_is);
             send_json(res, 200, ojson{{"sceneId", req.matches[1]}, {"status", "approved"}, {"revisionId", rev}});
           }));

  srv.Get("/export", guarded([store_ptr](const httplib::Request& req, httplib::Response& res) {
            if (req.has_param("status") && req.get_param_value("status") != "approved") {
              throw Error(ErrorCode::kInvalidArgument, "only status=approved can be exported");
            }
            res.status = 200;
            res.set_content(store_ptr->export_jsonl(), "application/x-ndjson");
          }));

  srv.Post("/blobs", guarded([store_ptr](const httplib::Request& req, httplib::Response& res) {
             send_json(res, 201, ojson{{"ref", store_ptr->put_blob(req.body)}});
           }));

  if (options_.port == 0) {
    port_ = srv.bind_to_any_port(options_.host);
  } else {
    port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) {
    throw Error(ErrorCode::kIo, "cannot bind service to " + options_.host + ":" + std::to_string(options_.port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

ServiceServer::~ServiceServer() { stop(); }

std::string ServiceServer::url() const { return "http://" + options_.host + ":" + std::to_string(port_); }

void ServiceServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ServiceServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace roomgraph
