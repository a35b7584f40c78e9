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
#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "support/random_specs.hpp"
#include "whatif/simulator.hpp"

namespace whatif {
namespace {

Task task(TaskId id, const char* lane, TimeNs dur_us, TimeNs gap_us = 0, TaskKind kind = TaskKind::CpuApi) {
  Task t;
  t.id = id;
  t.lane = *LaneId::parse(lane);
  t.kind = kind;
  t.name = "t" + std::to_string(id);
  t.duration = dur_us * kNsPerUs;
  t.gap = gap_us * kNsPerUs;
  return t;
}

TEST(Simulate, ChainWithGap) {
  DependencyGraph g;
  g.add_task(task(0, "cpu:0", 10, 2));
  g.add_task(task(1, "cpu:0", 5));
  g.add_edge(0, 1, EdgeKind::LaneSeqCpu);
  auto r = simulate(g);
  EXPECT_EQ(r.start_of.at(0), 0u);
  EXPECT_EQ(r.start_of.at(1), 12000u);
  EXPECT_EQ(r.makespan, 17000u);
}

TEST(Simulate, LaunchRunsInParallelWithNextCall) {
  DependencyGraph g;
  g.add_task(task(0, "cpu:0", 1));
  g.add_task(task(1, "gpu:0:7", 10, 0, TaskKind::GpuKernel));
  g.add_task(task(2, "cpu:0", 1));
  g.add_edge(0, 1, EdgeKind::LaunchCorrelation);
  g.add_edge(0, 2, EdgeKind::LaneSeqCpu);
  auto r = simulate(g);
  EXPECT_EQ(r.start_of.at(1), 1000u);
  EXPECT_EQ(r.start_of.at(2), 1000u);
  EXPECT_EQ(r.makespan, 11000u);
}

TEST(Simulate, EmptyGraph) {
  DependencyGraph g;
  auto r = simulate(g);
  EXPECT_EQ(r.makespan, 0u);
  EXPECT_TRUE(r.start_of.empty());
}

TEST(Simulate, GapDelaysChildrenOnOtherLanes) {
  DependencyGraph g;
  g.add_task(task(0, "cpu:0", 1, 4));
  g.add_task(task(1, "gpu:0:7", 10, 0, TaskKind::GpuKernel));
  g.add_edge(0, 1, EdgeKind::LaunchCorrelation);
  EXPECT_EQ(simulate(g).start_of.at(1), 5000u);
}

TEST(Simulate, DeadlockOnCycle) {
  DependencyGraph g;
  g.add_task(task(0, "cpu:0", 1));
  g.add_task(task(1, "cpu:0", 1));
  g.add_edge(0, 1, EdgeKind::LaneSeqCpu);
  g.add_edge(1, 0, EdgeKind::Injected);
  try {
    simulate(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Deadlock);
  }
}

// Policies are exercised directly on hand-built states.
struct Frontier {
  DependencyGraph g;
  Frontier() {
    // Two independent lanes: ids 3 and 9 on fresh lanes, one busy lane.
    auto a = task(3, "comm:send", 1, 0, TaskKind::Comm);
    auto b = task(9, "comm:recv", 1, 0, TaskKind::Comm);
    a.priority = -5;
    b.priority = -1;
    g.add_task(a);
    g.add_task(b);
  }
};

TEST(DefaultSchedule, EarliestThenSmallestId) {
  Frontier f;
  SimulationState s(f.g);
  EXPECT_EQ(DefaultSchedule{}.choose(s), 3u);

  DependencyGraph g;
  auto early = task(8, "cpu:0", 1);
  auto late = task(2, "cpu:1", 1);
  early.ready_time = 5000;
  late.ready_time = 7000;
  g.add_task(early);
  g.add_task(late);
  SimulationState s2(g);
  EXPECT_EQ(DefaultSchedule{}.choose(s2), 8u);

  DependencyGraph single;
  single.add_task(task(4, "cpu:0", 1));
  EXPECT_EQ(DefaultSchedule{}.choose(SimulationState(single)), 4u);
}

TEST(PrioritySchedule, CommTiesGoToHigherPriority) {
  Frontier f;
  SimulationState s(f.g);
  EXPECT_EQ(PrioritySchedule{}.choose(s), 9u);
}

TEST(PrioritySchedule, NonCommTieUsesSmallestId) {
  DependencyGraph g;
  auto k = task(1, "gpu:0:7", 1, 0, TaskKind::GpuKernel);
  auto c = task(2, "comm:send", 1, 0, TaskKind::Comm);
  k.priority = -10;
  c.priority = 0;
  g.add_task(k);
  g.add_task(c);
  EXPECT_EQ(PrioritySchedule{}.choose(SimulationState(g)), 1u);
}

TEST(PrioritySchedule, WithoutTiesMatchesDefault) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto g = testing_support::random_graph(seed, 60, false);
    // Distinct ready times remove every tie.
    TimeNs r = 1;
    for (const auto& [id, t] : g.tasks()) {
      g.task(id).ready_time = (r++) * 1000003;
      g.task(id).duration = 1;
      g.task(id).gap = 0;
    }
    for (const auto& e : g.edges()) g.remove_edge(e.from, e.to);
    EXPECT_EQ(simulate(g, PrioritySchedule{}), simulate(g, DefaultSchedule{}));
  }
}

TEST(Speedup, ReportingFormat) {
  SimulationResult base, variant;
  base.makespan = 100000000;
  variant.makespan = 82800000;
  EXPECT_NEAR(speedup(base, variant), 0.172, 1e-12);
  EXPECT_EQ(speedup(base, base), 0.0);
  variant.makespan = 120000000;
  EXPECT_LT(speedup(base, variant), 0.0);
  SimulationResult zero;
  try {
    speedup(zero, variant);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroBaseline);
  }
}

TEST(Simulate, ChainLanesMatchLongestPath) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto g = testing_support::random_graph(seed, 1 + seed % 200, true);
    EXPECT_EQ(simulate(g).makespan, testing_support::longest_path(g)) << "seed " << seed;
  }
}

TEST(Simulate, PropertiesOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto g = testing_support::random_graph(seed, 1 + seed % 150, seed % 3 == 0);
    auto copy = g;
    for (const AnyPolicy& policy : {AnyPolicy(DefaultSchedule{}), AnyPolicy(PrioritySchedule{}), AnyPolicy(DeferringSchedule{})}) {
      auto r = simulate(g, policy);
      auto violations = testing_support::schedule_violations(g, r);
      EXPECT_TRUE(violations.empty()) << "seed " << seed << " policy " << policy.name() << ": " << violations.front();
      EXPECT_EQ(simulate(g, policy), r);
    }
    EXPECT_EQ(g, copy);
  }
}

TEST(Simulate, LaneProgressNeverDecreases) {
  auto g = testing_support::random_graph(11, 120, false);
  auto r = simulate(g);
  std::map<LaneId, TimeNs> last;
  for (const auto& [id, start] : r.schedule_trace) {
    const Task& t = g.task(id);
    EXPECT_GE(start, last[t.lane]);
    last[t.lane] = start;
  }
}

TEST(PolicyByName, KnownAndUnknown) {
  EXPECT_EQ(policy_by_name("default").name(), "default");
  EXPECT_EQ(policy_by_name("priority").name(), "priority");
  EXPECT_EQ(policy_by_name("vdnn").name(), "deferring");
  try {
    policy_by_name("lottery");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidPipeline);
  }
}

TEST(ResultJson, Fields) {
  DependencyGraph g;
  g.add_task(task(0, "cpu:0", 10));
  auto j = result_to_json(simulate(g));
  EXPECT_EQ(j["makespan_ns"], 10000);
  EXPECT_EQ(j["starts_ns"]["0"], 0);
  EXPECT_EQ(j["lane_busy_ns"]["cpu:0"], 10000);
}

}  // namespace
}  // namespace whatif
