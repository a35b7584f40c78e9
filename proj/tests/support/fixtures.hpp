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

// Crafted traces shared by the unit tests and the acceptance run, plus
// brute-force and interval oracles.

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "support/oracles.hpp"
#include "whatif/breakdown.hpp"
#include "whatif/synthetic.hpp"

namespace whatif::testing_support {

/// One CPU thread launching the given kernels onto one stream.
inline SyntheticSpec launches(TimeNs launch, const std::vector<std::pair<std::string, TimeNs>>& kernels) {
  SyntheticSpec spec;
  spec.lanes = {{LaneId::cpu("0"), {}}, {LaneId::gpu("0:7"), {}}};
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    std::string call = "cudaLaunchKernel#" + std::to_string(i);
    std::string kernel = kernels[i].first + "#" + std::to_string(i);
    spec.lanes[0].tasks.push_back({call, TaskKind::CpuApi, launch, 0, 0, {}});
    spec.lanes[1].tasks.push_back({kernel, TaskKind::GpuKernel, kernels[i].second, 0, 0, {}});
    spec.launches.emplace_back(call, kernel);
  }
  return spec;
}

/// 100 weight-update launches of 5 us, each launching a 1 us kernel, then a
/// 200 us CPU tail.
inline SyntheticSpec many_small_updates() {
  std::vector<std::pair<std::string, TimeNs>> kernels(100, {"adam_update", 1 * kNsPerUs});
  SyntheticSpec spec = launches(5 * kNsPerUs, kernels);
  SyntheticMarker marker{"optimizer", Phase::WeightUpdate, {}};
  for (const auto& [call, kernel] : spec.launches) marker.tasks.push_back(call);
  spec.markers.push_back(marker);
  spec.lanes[0].tasks.push_back({"python_tail", TaskKind::CpuOther, 200 * kNsPerUs, 0, 0, {}});
  return spec;
}

/// Backward of L2 then L1, then the next iteration's forward of L1 then L2;
/// every GPU task is 10 us and each launch 1 us. With p3_params, L2 has three
/// gradient slices and L1 one; each push or pull of a slice takes 10 us on
/// one server.
inline SyntheticSpec p3_instance() {
  SyntheticSpec spec = launches(1 * kNsPerUs, {{"bw_L2", 10 * kNsPerUs},
                                               {"bw_L1", 10 * kNsPerUs},
                                               {"fw_L1", 10 * kNsPerUs},
                                               {"fw_L2", 10 * kNsPerUs}});
  spec.markers = {{"L2", Phase::Backward, {"cudaLaunchKernel#0"}},
                  {"L1", Phase::Backward, {"cudaLaunchKernel#1"}},
                  {"L1", Phase::Forward, {"cudaLaunchKernel#2"}},
                  {"L2", Phase::Forward, {"cudaLaunchKernel#3"}}};
  return spec;
}

inline json p3_params() {
  return {{"network", {{"workers", 2}, {"bandwidth_gbps", 10}}},
          {"slice_size_bytes", 12500},
          {"servers", 1},
          {"layer_gradient_bytes", {{"L1", 12500}, {"L2", 37500}}}};
}

/// Longest path of `g` with the tasks of one lane forced into `order`.
inline TimeNs makespan_with_lane_order(const DependencyGraph& g, const std::vector<TaskId>& order) {
  auto og = oracle_graph(g);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) og.edges.emplace(order[i], order[i + 1], EdgeKind::CommOrder);
  return longest_path(og);
}

struct LaneOrderSearch {
  TimeNs best = std::numeric_limits<TimeNs>::max();
  std::size_t feasible = 0;  // orders consistent with the graph
};

/// Every order a scheduler could give `lane`: all permutations that respect
/// the graph's own reachability.
inline LaneOrderSearch best_over_lane_orders(const DependencyGraph& g, const LaneId& lane) {
  std::vector<TaskId> tasks = g.lane(lane);
  std::sort(tasks.begin(), tasks.end());
  std::map<TaskId, std::set<TaskId>> reach;
  for (TaskId a : tasks) {
    std::vector<TaskId> stack{a};
    while (!stack.empty()) {
      TaskId v = stack.back();
      stack.pop_back();
      for (TaskId c : g.children(v)) {
        if (reach[a].insert(c).second) stack.push_back(c);
      }
    }
  }
  LaneOrderSearch out;
  do {
    bool ok = true;
    for (std::size_t i = 0; i < tasks.size() && ok; ++i) {
      for (std::size_t j = i + 1; j < tasks.size() && ok; ++j) ok = !reach[tasks[j]].count(tasks[i]);
    }
    if (!ok) continue;
    ++out.feasible;
    out.best = std::min(out.best, makespan_with_lane_order(g, tasks));
  } while (std::next_permutation(tasks.begin(), tasks.end()));
  return out;
}

/// Union length of half-open intervals.
inline TimeNs union_length(std::vector<std::pair<TimeNs, TimeNs>> v) {
  std::sort(v.begin(), v.end());
  TimeNs total = 0, reach = 0;
  for (auto [b, e] : v) {
    if (e <= reach) continue;
    total += e - std::max(b, reach);
    reach = e;
  }
  return total;
}

/// Breakdown by inclusion-exclusion over interval unions; shares nothing
/// with the sweep in compute_breakdown.
inline BreakdownReport breakdown_oracle(const SimulationResult& r, const DependencyGraph& g) {
  std::vector<std::pair<TimeNs, TimeNs>> cpu, gpu, both;
  for (const auto& [id, t] : g.tasks()) {
    bool is_cpu = t.lane.cls == LaneClass::CpuThread;
    TimeNs b = r.start_of.at(id);
    TimeNs e = std::min(b + t.duration + (is_cpu ? t.gap : 0), r.makespan);
    if (e <= b) continue;
    (is_cpu ? cpu : gpu).emplace_back(b, e);
    both.emplace_back(b, e);
  }
  BreakdownReport o;
  TimeNs uc = union_length(cpu), ug = union_length(gpu), u = union_length(both);
  o.total = r.makespan;
  o.parallel = uc + ug - u;
  o.cpu_only = uc - o.parallel;
  o.gpu_only = ug - o.parallel;
  o.idle = r.makespan - u;
  return o;
}

}  // namespace whatif::testing_support
