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

// Baseline versus transformed simulation of one graph.

#include <optional>

#include "whatif/breakdown.hpp"
#include "whatif/scenarios.hpp"

namespace whatif {

struct WhatIfReport {
  TransformPipeline pipeline;
  DependencyGraph graph;  // after the pipeline
  SimulationResult baseline;
  SimulationResult predicted;
  BreakdownReport baseline_breakdown;
  BreakdownReport predicted_breakdown;
  double speedup = 0;
};

/// `baseline` may carry a cached simulation of `graph` under the default
/// policy.
inline WhatIfReport evaluate_pipeline(const DependencyGraph& graph, const TransformPipeline& pipeline,
                                      const std::optional<SimulationResult>& baseline = std::nullopt,
                                      const BreakdownOptions& opt = {}) {
  WhatIfReport r;
  r.pipeline = pipeline;
  r.baseline = baseline ? *baseline : simulate(graph);
  r.graph = apply_pipeline(graph, pipeline);
  r.predicted = simulate(r.graph, policy_by_name(pipeline.schedule_policy));
  r.baseline_breakdown = compute_breakdown(r.baseline, graph, opt);
  r.predicted_breakdown = compute_breakdown(r.predicted, r.graph, opt);
  r.speedup = speedup(r.baseline, r.predicted);
  return r;
}

inline WhatIfReport evaluate_scenario(const ScenarioContext& ctx, const ScenarioSpec& spec,
                                      const std::optional<SimulationResult>& baseline = std::nullopt) {
  return evaluate_pipeline(ctx.graph, build_scenario(ctx, spec), baseline);
}

inline ordered_json breakdown_delta_json(const BreakdownReport& before, const BreakdownReport& after) {
  auto d = [](TimeNs a, TimeNs b) { return static_cast<std::int64_t>(b) - static_cast<std::int64_t>(a); };
  return ordered_json{{"cpu_only_ns", d(before.cpu_only, after.cpu_only)},
                      {"gpu_only_ns", d(before.gpu_only, after.gpu_only)},
                      {"parallel_ns", d(before.parallel, after.parallel)},
                      {"idle_ns", d(before.idle, after.idle)},
                      {"total_ns", d(before.total, after.total)}};
}

/// Response document: makespans in ns, speedup as a signed fraction.
inline ordered_json to_json(const WhatIfReport& r) {
  ordered_json busy = ordered_json::object();
  for (const auto& [lane, t] : r.predicted.lane_busy) busy[lane.str()] = t;
  return ordered_json{{"baseline_makespan", r.baseline.makespan},
                      {"predicted_makespan", r.predicted.makespan},
                      {"speedup", r.speedup},
                      {"schedule_policy", r.pipeline.schedule_policy},
                      {"breakdown", to_json(r.predicted_breakdown)},
                      {"baseline_breakdown", to_json(r.baseline_breakdown)},
                      {"breakdown_delta", breakdown_delta_json(r.baseline_breakdown, r.predicted_breakdown)},
                      {"lane_busy", std::move(busy)},
                      {"task_count", r.graph.size()}};
}

}  // namespace whatif
