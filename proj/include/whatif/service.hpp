/* Copyright 2026 The Whatif Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

// Local HTTP/JSON API over the simulator.
//
//   POST /traces                       trace document -> {session_id, stats}
//   GET  /sessions                     ids, most recently used first
//   GET  /sessions/{id}/graph          graph document
//   GET  /sessions/{id}/timeline       Chrome trace; ?scenario=
//   GET  /sessions/{id}/breakdown      breakdown report; ?scenario=
//   POST /sessions/{id}/simulate       {scenario, params} or {steps, ...}
//   GET  /scenarios                    registry with parameter schemas
//
// ?scenario= takes a scenario name (with optional ?params= JSON object) or a
// JSON request document. Errors are {"error": name, "detail": text}.

#include <filesystem>
#include <fstream>
#include <list>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <unordered_map>

#include <httplib.h>

#include "whatif/builder.hpp"
#include "whatif/evaluate.hpp"
#include "whatif/export.hpp"

namespace whatif {

struct Session {
  std::string id;
  TraceDocument trace;
  DependencyGraph graph;
  SimulationResult baseline;

  ScenarioContext context() const { return {graph, trace.gradient_buckets}; }
};

inline ordered_json session_stats(const Session& s) {
  ordered_json edges = ordered_json::object();
  for (const auto& [kind, n] : s.graph.edge_counts()) edges[std::string(to_string(kind))] = n;
  std::set<std::string> layers;
  for (const auto& [id, t] : s.graph.tasks()) {
    if (t.layer) layers.insert(t.layer->layer);
  }
  return ordered_json{{"tasks", s.graph.size()},
                      {"edges", s.graph.edge_count()},
                      {"edge_counts", std::move(edges)},
                      {"lanes", s.graph.lane_order().size()},
                      {"layers", layers.size()},
                      {"baseline_makespan", s.baseline.makespan}};
}

/// Sessions by id, evicting the least recently used beyond `capacity`.
/// Sessions are immutable once stored; readers share them.
class SessionStore {
 public:
  explicit SessionStore(std::size_t capacity = 16) : capacity_(std::max<std::size_t>(capacity, 1)) {}

  /// Builds the graph and baseline, then stores them under `id` (a fresh
  /// id when empty), replacing any session of that id.
  std::shared_ptr<const Session> put(TraceDocument trace, std::string id = "", const BuildOptions& options = {}) {
    auto s = std::make_shared<Session>();
    s->trace = std::move(trace);
    s->graph = build_layered_graph(s->trace, options);
    s->baseline = simulate(s->graph);
    std::lock_guard lock(mu_);
    if (id.empty()) {
      do {
        id = "s" + std::to_string(++counter_);
      } while (index_.count(id));
    }
    s->id = id;
    erase_locked(id);
    order_.push_front(s);
    index_[id] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back()->id);
      order_.pop_back();
    }
    return s;
  }

  std::shared_ptr<const Session> get(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = index_.find(id);
    if (it == index_.end()) return nullptr;
    order_.splice(order_.begin(), order_, it->second);
    return order_.front();
  }

  bool erase(const std::string& id) {
    std::lock_guard lock(mu_);
    return erase_locked(id);
  }

  std::vector<std::string> ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& s : order_) out.push_back(s->id);
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return order_.size();
  }
  std::size_t capacity() const { return capacity_; }

 private:
  bool erase_locked(const std::string& id) {
    auto it = index_.find(id);
    if (it == index_.end()) return false;
    order_.erase(it->second);
    index_.erase(it);
    return true;
  }

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::shared_ptr<const Session>> order_;
  std::unordered_map<std::string, std::list<std::shared_ptr<const Session>>::iterator> index_;
  std::uint64_t counter_ = 0;
};

/// 400 for malformed input, 422 when a well-formed request cannot be
/// applied to this trace.
inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoWeightUpdate:
    case ErrorCode::MissingLayer:
    case ErrorCode::MissingLayerGradients:
    case ErrorCode::MissingConvPairs:
    case ErrorCode::BadFactorization:
    case ErrorCode::BadRatio:
    case ErrorCode::InvalidGroup:
    case ErrorCode::WouldCreateCycle:
    case ErrorCode::ZeroBaseline:
    case ErrorCode::Deadlock:
    case ErrorCode::CycleDetected:
    case ErrorCode::AcyclicityViolated:
    case ErrorCode::LaneViolation:
      return 422;
    default:
      return 400;
  }
}

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

inline ApiResponse json_response(int status, const ordered_json& j) { return {status, j.dump(), "application/json"}; }

inline ApiResponse error_response(int status, std::string_view name, const std::string& detail) {
  return json_response(status, ordered_json{{"error", name}, {"detail", detail}});
}

class Service {
 public:
  explicit Service(std::size_t capacity = 16) : store_(capacity) {}

  SessionStore& store() { return store_; }

  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::multimap<std::string, std::string>& query, const std::string& body) {
    try {
      return route(method, path, query, body);
    } catch (const Error& e) {
      return error_response(http_status_for(e.code()), e.name(), e.detail());
    } catch (const json::exception& e) {
      return error_response(400, error_name(ErrorCode::MalformedDocument), e.what());
    }
  }

 private:
  static std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '/')) {
      if (!part.empty()) out.push_back(part);
    }
    return out;
  }

  static json parse_body(const std::string& body) {
    try {
      return json::parse(body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedDocument, e.what());
    }
  }

  /// Pipeline named by the query string, or nullopt for the baseline.
  static std::optional<TransformPipeline> query_pipeline(const Session& s,
                                                         const std::multimap<std::string, std::string>& query) {
    auto it = query.find("scenario");
    if (it == query.end() || it->second.empty()) return std::nullopt;
    const std::string& v = it->second;
    if (v.front() == '{') return pipeline_for_request(s.context(), parse_body(v));
    json params = json::object();
    if (auto p = query.find("params"); p != query.end()) params = parse_body(p->second);
    return build_scenario(s.context(), {v, params});
  }

  ApiResponse route(const std::string& method, const std::string& path,
                    const std::multimap<std::string, std::string>& query, const std::string& body) {
    auto parts = split_path(path);
    if (method == "OPTIONS") return {204, "", "text/plain"};
    if (parts == std::vector<std::string>{"scenarios"} && method == "GET") return json_response(200, registry_to_json());
    if (parts == std::vector<std::string>{"traces"} && method == "POST") {
      std::string id;
      if (auto it = query.find("id"); it != query.end()) id = it->second;
      auto s = store_.put(parse_trace(body), id);
      return json_response(201, ordered_json{{"session_id", s->id}, {"stats", session_stats(*s)}});
    }
    if (parts == std::vector<std::string>{"sessions"} && method == "GET") {
      return json_response(200, ordered_json{{"sessions", store_.ids()}});
    }
    if (parts.size() < 2 || parts[0] != "sessions") return error_response(404, "NotFound", "no route for " + path);
    auto session = store_.get(parts[1]);
    if (!session) return error_response(404, "UnknownSession", "no session '" + parts[1] + "'");
    const Session& s = *session;
    if (parts.size() == 2) {
      if (method == "GET") return json_response(200, ordered_json{{"session_id", s.id}, {"stats", session_stats(s)}});
      if (method == "DELETE") {
        store_.erase(s.id);
        return {204, "", "text/plain"};
      }
    }
    if (parts.size() != 3) return error_response(404, "NotFound", "no route for " + path);
    const std::string& what = parts[2];
    if (what == "graph" && method == "GET") return json_response(200, graph_to_json(s.graph));
    if (what == "timeline" && method == "GET") {
      auto pipeline = query_pipeline(s, query);
      if (!pipeline) return json_response(200, chrome_trace_json(s.baseline, s.graph));
      auto r = evaluate_pipeline(s.graph, *pipeline, s.baseline);
      return json_response(200, chrome_trace_json(r.predicted, r.graph));
    }
    if (what == "breakdown" && method == "GET") {
      auto pipeline = query_pipeline(s, query);
      if (!pipeline) return json_response(200, to_json(compute_breakdown(s.baseline, s.graph)));
      return json_response(200, to_json(evaluate_pipeline(s.graph, *pipeline, s.baseline).predicted_breakdown));
    }
    if (what == "simulate" && method == "POST") {
      json req = body.empty() ? json{{"steps", json::array()}} : parse_body(body);
      auto pipeline = pipeline_for_request(s.context(), req);
      return json_response(200, to_json(evaluate_pipeline(s.graph, pipeline, s.baseline)));
    }
    return error_response(404, "NotFound", "no route for " + method + " " + path);
  }

  SessionStore store_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string cors_origin = "*";
};

/// Routes every request of `server` through `service`.
inline void bind_routes(httplib::Server& server, Service& service, const std::string& cors_origin = "*") {
  auto handler = [&service, cors_origin](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
    auto r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", cors_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    if (!r.body.empty()) res.set_content(r.body, r.content_type);
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Delete(".*", handler);
  server.Options(".*", handler);
}

/// Loads every *.json trace in `dir` as a session named after the file stem.
inline std::vector<std::string> preload_traces(Service& service, const std::filesystem::path& dir,
                                               const BuildOptions& options = {}) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> ids;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    ids.push_back(service.store().put(parse_trace(ss.str()), f.stem().string(), options)->id);
  }
  return ids;
}

}  // namespace whatif
