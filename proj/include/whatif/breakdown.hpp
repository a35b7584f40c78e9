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

// Runtime decomposition of a simulated schedule into CPU-only, GPU-only,
// CPU+GPU parallel and idle time, plus per-layer CPU/GPU totals.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "whatif/graph.hpp"
#include "whatif/layers.hpp"
#include "whatif/simulator.hpp"

namespace whatif {

struct BreakdownOptions {
  bool comm_as_gpu = true;       // otherwise communication lanes are ignored
  bool dataload_as_cpu = true;   // otherwise data-loading tasks are ignored
};

struct LayerTime {
  TimeNs cpu = 0;
  TimeNs gpu = 0;

  friend bool operator==(const LayerTime&, const LayerTime&) = default;
};

struct BreakdownReport {
  TimeNs cpu_only = 0;
  TimeNs gpu_only = 0;
  TimeNs parallel = 0;
  TimeNs idle = 0;
  TimeNs total = 0;
  std::map<std::string, LayerTime> per_layer;

  friend bool operator==(const BreakdownReport&, const BreakdownReport&) = default;
};

enum class Side { None, Cpu, Gpu };

inline Side side_of(const Task& t, const BreakdownOptions& opt = {}) {
  if (t.kind == TaskKind::DataLoad && !opt.dataload_as_cpu) return Side::None;
  switch (t.lane.cls) {
    case LaneClass::CpuThread: return Side::Cpu;
    case LaneClass::GpuStream: return Side::Gpu;
    case LaneClass::CommChannel: return opt.comm_as_gpu ? Side::Gpu : Side::None;
  }
  return Side::None;
}

namespace detail {

inline void check_result_matches(const SimulationResult& r, const DependencyGraph& g) {
  if (r.start_of.size() != g.size()) {
    throw Error(ErrorCode::MismatchedInput, "result has " + std::to_string(r.start_of.size()) + " tasks, graph has " +
                                                std::to_string(g.size()));
  }
  for (const auto& [id, t] : g.tasks()) {
    if (!r.start_of.count(id)) throw Error(ErrorCode::MismatchedInput, "task " + std::to_string(id) + " has no start");
  }
}

}  // namespace detail

/// Per layer, summed durations of CPU-side and GPU-side tasks. Tasks
/// without a layer go to "_unmapped".
inline std::map<std::string, LayerTime> per_layer_breakdown(const SimulationResult& result, const DependencyGraph& graph,
                                                            const BreakdownOptions& opt = {}) {
  (void)result;
  std::map<std::string, LayerTime> out;
  for (const auto& [id, t] : graph.tasks()) {
    Side s = side_of(t, opt);
    if (s == Side::None) continue;
    auto& slot = out[t.layer ? t.layer->layer : std::string(kUnmappedLayer)];
    (s == Side::Cpu ? slot.cpu : slot.gpu) += t.duration;
  }
  return out;
}

/// Sweep over [0, makespan). CPU-side tasks are busy for their duration
/// plus gap (the gap is framework time on that thread); GPU-side tasks for
/// their duration. Intervals are clipped to the makespan.
inline BreakdownReport compute_breakdown(const SimulationResult& result, const DependencyGraph& graph,
                                         const BreakdownOptions& opt = {}) {
  detail::check_result_matches(result, graph);
  BreakdownReport rep;
  rep.total = result.makespan;
  // (time, side, +1/-1)
  std::vector<std::tuple<TimeNs, int, int>> events;
  for (const auto& [id, t] : graph.tasks()) {
    Side s = side_of(t, opt);
    if (s == Side::None) continue;
    TimeNs begin = result.start_of.at(id);
    TimeNs end = std::min(begin + t.duration + (s == Side::Cpu ? t.gap : 0), result.makespan);
    if (end <= begin) continue;
    int which = s == Side::Cpu ? 0 : 1;
    events.emplace_back(begin, which, +1);
    events.emplace_back(end, which, -1);
  }
  std::sort(events.begin(), events.end());
  std::int64_t busy[2] = {0, 0};
  TimeNs prev = 0;
  auto account = [&](TimeNs until) {
    TimeNs span = until - prev;
    if (busy[0] > 0 && busy[1] > 0) {
      rep.parallel += span;
    } else if (busy[0] > 0) {
      rep.cpu_only += span;
    } else if (busy[1] > 0) {
      rep.gpu_only += span;
    } else {
      rep.idle += span;
    }
    prev = until;
  };
  for (const auto& [time, which, delta] : events) {
    if (time > prev) account(time);
    busy[which] += delta;
  }
  if (rep.total > prev) account(rep.total);
  rep.per_layer = per_layer_breakdown(result, graph, opt);
  return rep;
}

inline ordered_json to_json(const BreakdownReport& r) {
  ordered_json layers = ordered_json::object();
  for (const auto& [name, lt] : r.per_layer) layers[name] = ordered_json{{"cpu_ns", lt.cpu}, {"gpu_ns", lt.gpu}};
  return ordered_json{{"cpu_only_ns", r.cpu_only}, {"gpu_only_ns", r.gpu_only}, {"parallel_ns", r.parallel},
                      {"idle_ns", r.idle},         {"total_ns", r.total},       {"per_layer", std::move(layers)}};
}

inline BreakdownReport breakdown_from_json(const json& j) {
  BreakdownReport r;
  try {
    r.cpu_only = j.at("cpu_only_ns").get<TimeNs>();
    r.gpu_only = j.at("gpu_only_ns").get<TimeNs>();
    r.parallel = j.at("parallel_ns").get<TimeNs>();
    r.idle = j.at("idle_ns").get<TimeNs>();
    r.total = j.at("total_ns").get<TimeNs>();
    for (const auto& [name, lt] : j.at("per_layer").items()) {
      r.per_layer[name] = {lt.at("cpu_ns").get<TimeNs>(), lt.at("gpu_ns").get<TimeNs>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("breakdown: ") + e.what());
  }
  return r;
}

}  // namespace whatif
