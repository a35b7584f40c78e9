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

// Chrome trace ("X" complete events) of a simulated schedule. pid is the
// lane class, tid the full lane name; ts/dur are microseconds.

#include <string>
#include <tuple>
#include <vector>

#include "whatif/breakdown.hpp"
#include "whatif/graph.hpp"
#include "whatif/simulator.hpp"

namespace whatif {

inline ordered_json chrome_trace_json(const SimulationResult& result, const DependencyGraph& graph) {
  detail::check_result_matches(result, graph);
  std::vector<std::tuple<LaneId, TimeNs, TaskId>> order;
  for (const auto& [id, t] : graph.tasks()) order.emplace_back(t.lane, result.start_of.at(id), id);
  std::sort(order.begin(), order.end());
  ordered_json events = ordered_json::array();
  for (const auto& [lane, start, id] : order) {
    const Task& t = graph.task(id);
    ordered_json args{{"id", id}, {"kind", std::string(to_string(t.kind))}, {"start_ns", start}, {"duration_ns", t.duration}};
    if (t.gap) args["gap_ns"] = t.gap;
    if (t.layer) {
      args["layer"] = t.layer->layer;
      args["phase"] = std::string(to_string(t.layer->phase));
    }
    if (t.priority) args["priority"] = t.priority;
    if (t.size_bytes) args["size_bytes"] = *t.size_bytes;
    events.push_back(ordered_json{{"name", t.name},
                                  {"ph", "X"},
                                  {"ts", detail::time_to_ojson(start)},
                                  {"dur", detail::time_to_ojson(t.duration)},
                                  {"pid", std::string(lane_prefix(lane.cls))},
                                  {"tid", lane.str()},
                                  {"args", std::move(args)}});
  }
  return events;
}

inline std::string export_chrome_trace(const SimulationResult& result, const DependencyGraph& graph) {
  return chrome_trace_json(result, graph).dump();
}

}  // namespace whatif
