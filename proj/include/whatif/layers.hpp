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

// Task-to-layer mapping without synchronization.
//
// A CPU task belongs to the layer whose marker interval contains it on the
// same thread. GPU and communication tasks take the layer of the CPU call
// that launched them. Only original trace timestamps are consulted.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "whatif/builder.hpp"
#include "whatif/graph.hpp"
#include "whatif/trace.hpp"

namespace whatif {

inline constexpr const char* kGlobalLayer = "_global";
inline constexpr const char* kUnmappedLayer = "_unmapped";

struct LayerAssignment {
  std::map<TaskId, LayerTag> assigned;
  std::set<TaskId> unmapped;
};

/// Computes the assignment; the graph is not modified.
inline LayerAssignment map_tasks_to_layers(const DependencyGraph& graph, const std::vector<LayerMarker>& markers) {
  std::map<LaneId, std::vector<const LayerMarker*>> by_lane;
  for (const auto& m : markers) by_lane[m.cpu_lane].push_back(&m);

  LayerAssignment out;
  for (const auto& [id, t] : graph.tasks()) {
    if (!t.on_cpu()) continue;
    if (!t.trace_start) {
      out.unmapped.insert(id);
      continue;
    }
    TimeNs start = *t.trace_start;
    TimeNs end = start + t.trace_duration.value_or(t.duration);
    std::vector<const LayerMarker*> covering;
    if (auto it = by_lane.find(t.lane); it != by_lane.end()) {
      for (const LayerMarker* m : it->second) {
        if (m->start <= start && end <= m->end && start < m->end) covering.push_back(m);
      }
    }
    if (covering.empty()) {
      out.unmapped.insert(id);
      continue;
    }
    // Covering markers must nest; the innermost one wins.
    std::sort(covering.begin(), covering.end(), [](const LayerMarker* a, const LayerMarker* b) {
      return std::tuple(a->end - a->start, a->start, a->layer) < std::tuple(b->end - b->start, b->start, b->layer);
    });
    for (std::size_t i = 1; i < covering.size(); ++i) {
      const LayerMarker* inner = covering[i - 1];
      const LayerMarker* outer = covering[i];
      if (!(outer->start <= inner->start && inner->end <= outer->end)) {
        throw Error(ErrorCode::AmbiguousMarker, "task " + std::to_string(id) + " lies in overlapping markers " +
                                                    inner->layer + " and " + outer->layer);
      }
    }
    const LayerMarker* m = covering.front();
    out.assigned[id] = LayerTag{m->layer == "*" ? kGlobalLayer : m->layer, m->phase};
  }

  for (const auto& [id, t] : graph.tasks()) {
    if (t.on_cpu()) continue;
    auto launcher = detail::launcher_of(graph, id);
    if (launcher) {
      if (auto it = out.assigned.find(*launcher); it != out.assigned.end()) {
        out.assigned[id] = it->second;
        continue;
      }
    }
    out.unmapped.insert(id);
  }
  return out;
}

/// Writes the assignment onto Task::layer (unmapped tasks get no layer).
inline void apply_assignment(DependencyGraph& graph, const LayerAssignment& a) {
  for (const auto& [id, t] : graph.tasks()) {
    auto it = a.assigned.find(id);
    graph.task(id).layer = it == a.assigned.end() ? std::nullopt : std::optional<LayerTag>(it->second);
  }
}

inline DependencyGraph map_layers(DependencyGraph graph, const std::vector<LayerMarker>& markers) {
  apply_assignment(graph, map_tasks_to_layers(graph, markers));
  return graph;
}

/// Builds the dependency graph of `trace` and tags it with the trace's layer
/// markers.
inline DependencyGraph build_layered_graph(const TraceDocument& trace, const BuildOptions& options = {}) {
  return map_layers(build_graph(trace, options), trace.layer_markers);
}

inline std::set<TaskId> select_by_layer(const DependencyGraph& graph, const std::string& layer,
                                        std::optional<Phase> phase = std::nullopt) {
  std::set<TaskId> out;
  for (const auto& [id, t] : graph.tasks()) {
    if (t.layer && t.layer->layer == layer && (!phase || t.layer->phase == *phase)) out.insert(id);
  }
  return out;
}

/// Layers with forward tasks, ordered by their first forward task in the
/// original trace (input layer first). The synthetic global layer is skipped.
inline std::vector<std::string> forward_layer_order(const DependencyGraph& graph) {
  std::map<std::string, std::pair<TimeNs, TaskId>> first;
  for (const auto& [id, t] : graph.tasks()) {
    if (!t.layer || t.layer->phase != Phase::Forward || t.layer->layer == kGlobalLayer) continue;
    std::pair<TimeNs, TaskId> key{t.trace_start.value_or(0), id};
    auto [it, fresh] = first.emplace(t.layer->layer, key);
    if (!fresh && key < it->second) it->second = key;
  }
  std::vector<std::pair<std::pair<TimeNs, TaskId>, std::string>> sorted;
  for (const auto& [layer, key] : first) sorted.emplace_back(key, layer);
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> out;
  for (const auto& [key, layer] : sorted) out.push_back(layer);
  return out;
}

}  // namespace whatif
