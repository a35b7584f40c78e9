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

// Dependency graph construction from a validated trace.
//
// Five dependency rules produce every edge:
//   1. consecutive CPU tasks on one thread            (LaneSeqCpu)
//   2. consecutive GPU tasks on one stream            (LaneSeqGpu)
//   3. CPU launch call -> task with equal correlation (LaunchCorrelation)
//   4. awaited GPU task -> blocking CPU call          (SyncBlock)
//   5. consecutive tasks on one comm channel          (CommOrder)

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "whatif/graph.hpp"
#include "whatif/trace.hpp"

namespace whatif {

struct BuildOptions {
  /// Orphan kernels (correlation without a launch) are errors when strict,
  /// otherwise reported through `on_warning` and left without a launch edge.
  bool strict = false;
  std::function<void(const std::string&)> on_warning;
};

namespace detail {

inline std::map<TaskId, const TraceEvent*> index_events(const TraceDocument& trace) {
  std::map<TaskId, const TraceEvent*> out;
  for (const auto& e : trace.events) out[e.id] = &e;
  return out;
}

/// Launching CPU task of `id`, if any: the parent through a LaunchCorrelation
/// edge, or a CPU parent sharing its correlation id (pairs inserted by
/// transformations).
inline std::optional<TaskId> launcher_of(const DependencyGraph& g, TaskId id) {
  const Task& t = g.task(id);
  if (t.on_cpu()) return std::nullopt;
  for (TaskId p : g.parents(id)) {
    if (g.edge_kind(p, id) == EdgeKind::LaunchCorrelation) return p;
  }
  if (!t.correlation) return std::nullopt;
  for (TaskId p : g.parents(id)) {
    const Task& pt = g.task(p);
    if (pt.on_cpu() && pt.correlation == t.correlation) return p;
  }
  return std::nullopt;
}

}  // namespace detail

/// Sets each CPU task's gap to the idle time before its lane successor
/// (original trace timestamps). Non-CPU tasks and lane tails get 0.
inline DependencyGraph compute_gaps(const TraceDocument& trace, DependencyGraph graph) {
  auto events = detail::index_events(trace);
  for (const auto& [lane, order] : graph.lane_order()) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      Task& t = graph.task(order[i]);
      t.gap = 0;
      if (lane.cls != LaneClass::CpuThread || i + 1 == order.size()) continue;
      const TraceEvent* cur = events.at(order[i]);
      const TraceEvent* next = events.at(order[i + 1]);
      if (next->start > cur->end()) t.gap = next->start - cur->end();
    }
  }
  return graph;
}

/// Adds SyncBlock edges into Sync tasks and into the launch calls of blocking
/// device-to-host copies.
///
/// For each awaited stream the edge comes from the latest task on that stream
/// whose launch call started before the blocking call did. The blocking
/// call's duration is then reduced to the part after the awaited work ends,
/// since simulation re-creates the wait from the new edges.
inline DependencyGraph link_syncs(const TraceDocument& trace, DependencyGraph graph) {
  auto events = detail::index_events(trace);

  // Per stream: (launch start, position in stream) sorted by launch start,
  // with the running maximum position, so "latest task launched before T"
  // is a binary search.
  struct StreamIndex {
    std::vector<TimeNs> launch_start;
    std::vector<TaskId> best;  // best[i]: latest-in-stream task among first i+1 launches
  };
  std::map<LaneId, StreamIndex> streams;
  for (const auto& [lane, order] : graph.lane_order()) {
    if (lane.cls != LaneClass::GpuStream) continue;
    std::vector<std::tuple<TimeNs, std::size_t, TaskId>> launched;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      auto launcher = detail::launcher_of(graph, order[pos]);
      if (!launcher) continue;
      launched.emplace_back(events.at(*launcher)->start, pos, order[pos]);
    }
    std::sort(launched.begin(), launched.end());
    StreamIndex idx;
    std::size_t best_pos = 0;
    TaskId best_id = 0;
    for (std::size_t i = 0; i < launched.size(); ++i) {
      auto [start, pos, id] = launched[i];
      if (i == 0 || pos > best_pos) {
        best_pos = pos;
        best_id = id;
      }
      idx.launch_start.push_back(start);
      idx.best.push_back(best_id);
    }
    streams.emplace(lane, std::move(idx));
  }

  auto latest_before = [&](const LaneId& stream, TimeNs t) -> std::optional<TaskId> {
    auto it = streams.find(stream);
    if (it == streams.end()) return std::nullopt;
    const auto& starts = it->second.launch_start;
    auto n = std::lower_bound(starts.begin(), starts.end(), t) - starts.begin();
    if (n == 0) return std::nullopt;
    return it->second.best[static_cast<std::size_t>(n - 1)];
  };

  auto block = [&](TaskId blocked, const std::vector<LaneId>& awaited) {
    const TraceEvent* ev = events.at(blocked);
    TimeNs released = ev->start;
    for (const auto& stream : awaited) {
      auto src = latest_before(stream, ev->start);
      if (!src) continue;
      graph.add_edge(*src, blocked, EdgeKind::SyncBlock);
      released = std::max(released, events.at(*src)->end());
    }
    Task& t = graph.task(blocked);
    t.duration = ev->end() > released ? ev->end() - released : 0;
  };

  std::vector<LaneId> all_streams;
  for (const auto& [lane, idx] : streams) all_streams.push_back(lane);

  for (const auto& e : trace.events) {
    if (e.kind == TaskKind::Sync) {
      if (e.sync_target) {
        block(e.id, {*e.sync_target});
      } else {
        block(e.id, all_streams);
      }
    } else if (is_blocking_dtoh(e)) {
      if (auto launcher = detail::launcher_of(graph, e.id)) block(*launcher, {e.lane});
    }
  }
  return graph;
}

/// Builds the kernel-granularity dependency graph of `trace`.
inline DependencyGraph build_graph(const TraceDocument& trace, const BuildOptions& options = {}) {
  DependencyGraph graph;

  std::map<LaneId, std::vector<const TraceEvent*>> by_lane;
  for (const auto& e : trace.events) by_lane[e.lane].push_back(&e);

  for (auto& [lane, list] : by_lane) {
    std::sort(list.begin(), list.end(), [](const TraceEvent* a, const TraceEvent* b) {
      return std::pair(a->start, a->id) < std::pair(b->start, b->id);
    });
    const TraceEvent* prev = nullptr;
    for (const TraceEvent* e : list) {
      Task t;
      t.id = e->id;
      t.kind = e->kind;
      t.name = e->name;
      t.lane = e->lane;
      t.duration = e->duration;
      t.correlation = e->correlation;
      t.size_bytes = e->size_bytes;
      t.trace_start = e->start;
      t.trace_duration = e->duration;
      graph.add_task(std::move(t));
      if (prev) graph.add_edge(prev->id, e->id, lane_edge_kind(lane.cls));
      prev = e;
    }
  }

  std::map<std::uint64_t, TaskId> launch_by_corr;
  for (const auto& e : trace.events) {
    if (e.lane.cls == LaneClass::CpuThread && e.correlation) launch_by_corr[*e.correlation] = e.id;
  }
  for (const auto& e : trace.events) {
    if (e.lane.cls == LaneClass::CpuThread || !e.correlation) continue;
    auto it = launch_by_corr.find(*e.correlation);
    if (it == launch_by_corr.end()) {
      std::string msg = "task " + std::to_string(e.id) + " (" + e.name + ") has correlation " +
                        std::to_string(*e.correlation) + " but no launch call";
      if (options.strict) throw Error(ErrorCode::OrphanKernel, msg);
      if (options.on_warning) options.on_warning("OrphanKernel: " + msg);
      continue;
    }
    graph.add_edge(it->second, e.id, EdgeKind::LaunchCorrelation);
  }

  graph = link_syncs(trace, std::move(graph));
  graph = compute_gaps(trace, std::move(graph));
  verify_acyclic(graph);
  return graph;
}

}  // namespace whatif
