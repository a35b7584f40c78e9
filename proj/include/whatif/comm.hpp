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

// Communication cost formulas and injection of data-parallel gradient
// synchronization into a single-worker graph.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "whatif/layers.hpp"
#include "whatif/simulator.hpp"
#include "whatif/trace.hpp"
#include "whatif/transform.hpp"

namespace whatif {

struct NetworkConfig {
  std::uint64_t workers = 1;
  std::uint64_t bandwidth_bps = 10'000'000'000ULL;
  TimeNs latency = 0;  // added once per primitive
  std::uint64_t channels = 1;
  // Slowdown applied to the bandwidth term; 1 means the ideal formula.
  Ratio contention = Ratio::of(1, 1);

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& msg) { throw Error(ErrorCode::InvalidScenario, msg); }

/// round(8 * bytes * 1e9 * num * contention / (den * bandwidth)), computed in
/// 128-bit integers; falls back to long double only when the exact product
/// would not fit.
inline TimeNs transfer_ns(std::uint64_t bytes, std::uint64_t num, std::uint64_t den, const NetworkConfig& cfg) {
  using u128 = unsigned __int128;
  u128 n = 0;
  u128 d = static_cast<u128>(den) * cfg.bandwidth_bps * cfg.contention.den;
  bool overflow = __builtin_mul_overflow(static_cast<u128>(bytes) * 8, u128{1000000000}, &n) ||
                  __builtin_mul_overflow(n, static_cast<u128>(num), &n) ||
                  __builtin_mul_overflow(n, static_cast<u128>(cfg.contention.num), &n);
  if (!overflow) return div_half_up(n, d);
  long double x = static_cast<long double>(bytes) * 8.0L * 1e9L * num * cfg.contention.num /
                  (static_cast<long double>(den) * cfg.bandwidth_bps * cfg.contention.den);
  return round_half_up(x);
}

}  // namespace detail

inline void validate(const NetworkConfig& cfg) {
  if (cfg.workers < 1) detail::config_error("workers must be at least 1");
  if (cfg.bandwidth_bps == 0) detail::config_error("bandwidth must be positive");
  if (cfg.channels < 1) detail::config_error("channels must be at least 1");
  if (cfg.contention.num == 0) detail::config_error("contention_factor must be positive");
}

/// Ring allReduce: latency + 2(n-1)/n * 8S/B. A single worker communicates
/// nothing and costs 0.
inline TimeNs allreduce_duration(std::uint64_t size_bytes, const NetworkConfig& cfg) {
  if (cfg.workers <= 1) return 0;
  return cfg.latency + detail::transfer_ns(size_bytes, 2 * (cfg.workers - 1), cfg.workers, cfg);
}

/// Parameter-server push or pull: latency + 8S/B.
inline TimeNs push_pull_duration(std::uint64_t size_bytes, const NetworkConfig& cfg) {
  return cfg.latency + detail::transfer_ns(size_bytes, 1, 1, cfg);
}

inline TimeNs reduce_scatter_duration(std::uint64_t size_bytes, std::uint64_t group, const NetworkConfig& cfg) {
  if (group < 2) throw Error(ErrorCode::InvalidGroup, "group size must be at least 2, got " + std::to_string(group));
  return cfg.latency + detail::transfer_ns(size_bytes, group - 1, group, cfg);
}

inline TimeNs all_gather_duration(std::uint64_t size_bytes, std::uint64_t group, const NetworkConfig& cfg) {
  return reduce_scatter_duration(size_bytes, group, cfg);
}

// ---------------------------------------------------------------------------
// JSON: {workers, bandwidth_gbps, latency_us, channels, contention_factor}

inline NetworkConfig network_config_from_json(const json& j, NetworkConfig cfg = {}) {
  if (j.is_null()) return cfg;
  if (!j.is_object()) detail::config_error("network config must be an object");
  try {
    if (j.contains("workers")) {
      if (!j["workers"].is_number_integer() || j["workers"].get<std::int64_t>() < 1) {
        detail::config_error("workers must be an integer >= 1");
      }
      cfg.workers = j["workers"].get<std::uint64_t>();
    }
    if (j.contains("bandwidth_gbps")) {
      double g = j["bandwidth_gbps"].get<double>();
      if (!(g > 0) || !std::isfinite(g)) detail::config_error("bandwidth_gbps must be positive");
      if (g > 1.8e10) detail::config_error("bandwidth_gbps is out of range");
      cfg.bandwidth_bps = static_cast<std::uint64_t>(round_half_up(static_cast<long double>(g) * 1e9L));
    }
    if (j.contains("bandwidth_bits_per_sec")) cfg.bandwidth_bps = j["bandwidth_bits_per_sec"].get<std::uint64_t>();
    if (j.contains("latency_us")) {
      double l = j["latency_us"].get<double>();
      if (!(l >= 0)) detail::config_error("latency_us must not be negative");
      cfg.latency = us_to_ns(l);
    }
    if (j.contains("channels")) {
      if (!j["channels"].is_number_integer() || j["channels"].get<std::int64_t>() < 1) {
        detail::config_error("channels must be an integer >= 1");
      }
      cfg.channels = j["channels"].get<std::uint64_t>();
    }
    if (j.contains("contention_factor")) {
      double c = j["contention_factor"].get<double>();
      if (!(c > 0) || !std::isfinite(c)) detail::config_error("contention_factor must be positive");
      cfg.contention = Ratio::from_double(c);
    }
  } catch (const json::exception& e) {
    detail::config_error(std::string("network config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

inline ordered_json to_json(const NetworkConfig& cfg) {
  return ordered_json{{"workers", cfg.workers},
                      {"bandwidth_gbps", static_cast<double>(cfg.bandwidth_bps) / 1e9},
                      {"latency_us", detail::time_to_ojson(cfg.latency)},
                      {"channels", cfg.channels},
                      {"contention_factor", cfg.contention.value()}};
}

// ---------------------------------------------------------------------------
// Distributed data parallelism

inline constexpr const char* kCollectiveLane = "comm:collective";

namespace detail {

/// Id of the task in `ids` that finishes last in `r` (largest id on ties).
inline TaskId last_finisher(const DependencyGraph& g, const SimulationResult& r, const std::set<TaskId>& ids) {
  TaskId best = *ids.begin();
  for (TaskId id : ids) {
    auto key = std::pair(r.start_of.at(id) + g.task(id).duration, id);
    if (key >= std::pair(r.start_of.at(best) + g.task(best).duration, best)) best = id;
  }
  return best;
}

/// Id of the task in `ids` that starts first in `r` (smallest id on ties).
inline TaskId first_starter(const SimulationResult& r, const std::set<TaskId>& ids) {
  TaskId best = *ids.begin();
  for (TaskId id : ids) {
    if (std::pair(r.start_of.at(id), id) < std::pair(r.start_of.at(best), best)) best = id;
  }
  return best;
}

/// GPU tasks of (layer, phase) when there are any, otherwise every task of it.
inline std::set<TaskId> phase_tasks(const DependencyGraph& g, const std::string& layer, Phase phase) {
  auto all = select_by_layer(g, layer, phase);
  std::set<TaskId> gpu;
  for (TaskId id : all) {
    if (g.task(id).on_gpu()) gpu.insert(id);
  }
  return gpu.empty() ? all : gpu;
}

inline std::set<TaskId> weight_update_tasks(const DependencyGraph& g) {
  std::set<TaskId> all, gpu;
  for (const auto& [id, t] : g.tasks()) {
    if (!t.layer || t.layer->phase != Phase::WeightUpdate) continue;
    all.insert(id);
    if (t.on_gpu()) gpu.insert(id);
  }
  return gpu.empty() ? all : gpu;
}

}  // namespace detail

/// Records one allReduce per bucket on the collective lane. Each waits for
/// the last backward task of its member layers and precedes the earliest
/// weight-update task. Returns the allReduce ids in bucket order.
inline std::vector<TaskId> record_distributed(PipelineRecorder& rec, const GradientBucketMap& buckets,
                                              const NetworkConfig& cfg) {
  validate(cfg);
  const DependencyGraph& g = rec.graph();
  auto wu = detail::weight_update_tasks(g);
  if (wu.empty()) throw Error(ErrorCode::NoWeightUpdate, "graph has no weight-update tasks");
  auto baseline = simulate(g);
  TaskId first_wu = detail::first_starter(baseline, wu);

  std::map<std::uint64_t, std::vector<std::string>> members;
  for (const auto& [layer, bucket] : buckets.bucket_of_layer) members[bucket].push_back(layer);

  std::vector<TaskId> out;
  for (const auto& [bucket, bytes] : buckets.bucket_size_bytes) {
    json after = json::array();
    for (const auto& layer : members[bucket]) {
      auto bw = detail::phase_tasks(g, layer, Phase::Backward);
      if (bw.empty()) throw Error(ErrorCode::MissingLayer, "bucket " + std::to_string(bucket) + " references layer '" + layer + "' with no backward tasks");
      after.push_back(detail::last_finisher(g, baseline, bw));
    }
    if (!out.empty()) after.push_back(out.back());
    json task = {{"name", "allreduce_bucket" + std::to_string(bucket)},
                 {"kind", "Comm"},
                 {"lane", kCollectiveLane},
                 {"duration_ns", allreduce_duration(bytes, cfg)},
                 {"size_bytes", bytes}};
    auto ids = rec.add("insert", Selector::all(), {{"task", task}, {"after", after}, {"before", json::array({first_wu})}});
    out.push_back(ids.front());
  }
  return out;
}

inline TransformPipeline distributed_pipeline(const DependencyGraph& graph, const GradientBucketMap& buckets,
                                              const NetworkConfig& cfg) {
  PipelineRecorder rec(graph);
  record_distributed(rec, buckets, cfg);
  return rec.take();
}

inline DependencyGraph insert_distributed(const DependencyGraph& graph, const GradientBucketMap& buckets,
                                          const NetworkConfig& cfg) {
  return apply_pipeline(graph, distributed_pipeline(graph, buckets, cfg));
}

}  // namespace whatif
