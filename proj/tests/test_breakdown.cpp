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

#include "support/fixtures.hpp"
#include "support/model_specs.hpp"
#include "support/random_specs.hpp"
#include "whatif/evaluate.hpp"
#include "whatif/export.hpp"

namespace whatif {
namespace {

constexpr TimeNs kUs = 1000;

Task make(TaskId id, const char* name, const char* lane, TimeNs dur_us, TaskKind kind) {
  Task t;
  t.id = id;
  t.name = name;
  t.lane = *LaneId::parse(lane);
  t.kind = kind;
  t.duration = dur_us * kUs;
  return t;
}

void expect_matches_oracle(const DependencyGraph& g, const SimulationResult& r) {
  auto rep = compute_breakdown(r, g);
  auto o = testing_support::breakdown_oracle(r, g);
  EXPECT_EQ(rep.cpu_only + rep.gpu_only + rep.parallel + rep.idle, r.makespan);
  EXPECT_EQ(rep.total, r.makespan);
  EXPECT_EQ(rep.cpu_only, o.cpu_only);
  EXPECT_EQ(rep.gpu_only, o.gpu_only);
  EXPECT_EQ(rep.parallel, o.parallel);
  EXPECT_EQ(rep.idle, o.idle);
}

TEST(Breakdown, DisjointAndOverlapping) {
  DependencyGraph g;
  TaskId a = g.add_task(make(0, "a", "cpu:0", 10, TaskKind::CpuApi));
  TaskId b = g.add_task(make(1, "b", "gpu:0:7", 10, TaskKind::GpuKernel));
  g.add_edge(a, b, EdgeKind::LaunchCorrelation);
  auto rep = compute_breakdown(simulate(g), g);
  EXPECT_EQ(rep.cpu_only, 10 * kUs);
  EXPECT_EQ(rep.gpu_only, 10 * kUs);
  EXPECT_EQ(rep.parallel, 0u);
  EXPECT_EQ(rep.idle, 0u);

  DependencyGraph h;
  h.add_task(make(2, "a", "cpu:0", 10, TaskKind::CpuApi));
  h.add_task(make(3, "b", "gpu:0:7", 10, TaskKind::GpuKernel));
  rep = compute_breakdown(simulate(h), h);
  EXPECT_EQ(rep.parallel, 10 * kUs);
  EXPECT_EQ(rep.cpu_only + rep.gpu_only + rep.idle, 0u);
}

TEST(Breakdown, EmptyIsAllZero) {
  DependencyGraph g;
  EXPECT_EQ(compute_breakdown(simulate(g), g), BreakdownReport{});
}

TEST(Breakdown, IdleAndGaps) {
  DependencyGraph g;
  Task t = make(0, "a", "cpu:0", 10, TaskKind::CpuApi);
  t.gap = 5 * kUs;
  TaskId a = g.add_task(t);
  Task k = make(1, "k", "gpu:0:7", 10, TaskKind::GpuKernel);
  k.ready_time = 20 * kUs;
  TaskId b = g.add_task(k);
  g.add_edge(a, b, EdgeKind::LaunchCorrelation);
  auto rep = compute_breakdown(simulate(g), g);
  // CPU busy [0,15) including the gap, idle [15,20), GPU [20,30).
  EXPECT_EQ(rep.cpu_only, 15 * kUs);
  EXPECT_EQ(rep.idle, 5 * kUs);
  EXPECT_EQ(rep.gpu_only, 10 * kUs);
}

TEST(Breakdown, CommAndDataLoadOptions) {
  DependencyGraph g;
  g.add_task(make(0, "load", "cpu:1", 10, TaskKind::DataLoad));
  g.add_task(make(1, "ar", "comm:collective", 20, TaskKind::Comm));
  auto r = simulate(g);
  auto rep = compute_breakdown(r, g);
  EXPECT_EQ(rep.parallel, 10 * kUs);
  EXPECT_EQ(rep.gpu_only, 10 * kUs);
  BreakdownOptions opt;
  opt.comm_as_gpu = false;
  opt.dataload_as_cpu = false;
  rep = compute_breakdown(r, g, opt);
  EXPECT_EQ(rep.idle, 20 * kUs);
  EXPECT_TRUE(rep.per_layer.empty());
}

TEST(Breakdown, MatchesIntervalOracleOnRandomTraces) {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    auto trace = generate_synthetic_trace(testing_support::random_spec(seed, 300), seed).trace;
    auto g = build_graph(trace);
    expect_matches_oracle(g, simulate(g));
  }
}

TEST(Breakdown, ConservationOnEveryScenarioResult) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    auto layers = testing_support::random_model(seed, 10);
    layers.push_back(testing_support::conv_layer("conv_tail", 7000, 1000));
    auto trace = testing_support::model_trace(layers, testing_support::random_options(seed));
    auto g = build_layered_graph(trace);
    ScenarioContext ctx{g, trace.gradient_buckets};
    for (const auto& s : registry()) {
      json params = json::object();
      if (s.name == "blueconnect" || s.name == "dgc") params["distributed"] = true;
      if ((s.name == "distributed" || s.name == "p3" || params.contains("distributed")) && !trace.gradient_buckets) continue;
      auto rep = evaluate_scenario(ctx, {s.name, params});
      expect_matches_oracle(rep.graph, rep.predicted);
    }
  }
}

TEST(Breakdown, SubtractionRuleWhenNothingIsIdle) {
  // One stream, so GPU busy time is the sum of kernel durations.
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto g = testing_support::model_graph(testing_support::random_model(seed, 10), testing_support::random_options(seed));
    auto r = simulate(g);
    auto rep = compute_breakdown(r, g);
    if (rep.idle != 0) continue;
    TimeNs gpu = 0;
    for (const auto& [id, t] : g.tasks()) gpu += t.on_gpu() ? t.duration : 0;
    EXPECT_EQ(rep.cpu_only, r.makespan - gpu) << seed;
  }
}

TEST(Breakdown, AmpShrinksGpuOnlyAndKeepsCpuOnly) {
  testing_support::ModelOptions opt;
  opt.launch = 1 * kUs;
  opt.gap = 0;
  auto trace = testing_support::model_trace(testing_support::small_cnn(), opt);
  auto g = build_layered_graph(trace);
  auto rep = evaluate_scenario({g, trace.gradient_buckets}, {"amp", {}});
  EXPECT_LT(rep.predicted_breakdown.gpu_only, rep.baseline_breakdown.gpu_only);
  EXPECT_EQ(rep.predicted_breakdown.cpu_only, rep.baseline_breakdown.cpu_only);
  EXPECT_GT(rep.speedup, 0);
}

TEST(PerLayer, PartitionAndUnmapped) {
  auto trace = testing_support::model_trace(testing_support::small_cnn());
  auto g = build_layered_graph(trace);
  auto r = simulate(g);
  auto layers = per_layer_breakdown(r, g);
  TimeNs cpu = 0, gpu = 0, lcpu = 0, lgpu = 0;
  for (const auto& [id, t] : g.tasks()) (t.on_gpu() ? gpu : cpu) += t.duration;
  for (const auto& [name, lt] : layers) {
    lcpu += lt.cpu;
    lgpu += lt.gpu;
  }
  EXPECT_EQ(lcpu, cpu);
  EXPECT_EQ(lgpu, gpu);
  ASSERT_TRUE(layers.count(kUnmappedLayer));  // the final device sync
  EXPECT_EQ(layers.at(kUnmappedLayer).gpu, 0u);

  auto single = testing_support::model_graph({testing_support::fc_layer("fc", 9000, 0)},
                                             {.launch = 2000, .gap = 0, .dataload = 0, .final_sync = false});
  auto one = per_layer_breakdown(simulate(single), single);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.at("fc").gpu, 3 * 9000 + 3000u);
  EXPECT_EQ(one.at("fc").cpu, 4 * 2000u);
}

TEST(Breakdown, JsonRoundTrip) {
  auto g = testing_support::model_graph(testing_support::small_cnn());
  auto rep = compute_breakdown(simulate(g), g);
  EXPECT_EQ(breakdown_from_json(json::parse(to_json(rep).dump())), rep);
  EXPECT_THROW(breakdown_from_json(json::object()), Error);
}

// ---------------------------------------------------------------------------

TEST(ChromeTrace, Examples) {
  DependencyGraph empty;
  EXPECT_EQ(export_chrome_trace(simulate(empty), empty), "[]");

  DependencyGraph one;
  one.add_task(make(0, "k", "gpu:0:7", 10, TaskKind::GpuKernel));
  auto ev = json::parse(export_chrome_trace(simulate(one), one));
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0]["ph"], "X");
  EXPECT_EQ(ev[0]["ts"], 0);
  EXPECT_EQ(ev[0]["dur"], 10);
  EXPECT_EQ(ev[0]["tid"], "gpu:0:7");
  EXPECT_EQ(ev[0]["pid"], "gpu");
  for (const char* k : {"name", "ph", "ts", "dur", "pid", "tid", "args"}) EXPECT_TRUE(ev[0].contains(k));
}

TEST(ChromeTrace, BijectionAndLaneNames) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto trace = generate_synthetic_trace(testing_support::random_spec(seed, 200), seed).trace;
    auto g = build_graph(trace);
    auto r = simulate(g);
    auto ev = json::parse(export_chrome_trace(r, g));
    ASSERT_EQ(ev.size(), g.size());
    std::set<TaskId> seen;
    for (const auto& e : ev) {
      TaskId id = e["args"]["id"].get<TaskId>();
      seen.insert(id);
      EXPECT_EQ(*LaneId::parse(e["tid"].get<std::string>()), g.task(id).lane);
      EXPECT_EQ(e["args"]["start_ns"].get<TimeNs>(), r.start_of.at(id));
      EXPECT_EQ(us_to_ns(e["ts"].get<double>()), r.start_of.at(id));
    }
    EXPECT_EQ(seen.size(), g.size());
  }
}

TEST(ChromeTrace, MismatchedResult) {
  auto g = testing_support::model_graph(testing_support::small_cnn());
  auto r = simulate(g);
  r.start_of.erase(r.start_of.begin());
  try {
    export_chrome_trace(r, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MismatchedInput);
  }
}

// ---------------------------------------------------------------------------

TEST(Evaluate, EmptyPipelineIsBaseline) {
  auto g = testing_support::model_graph(testing_support::small_cnn());
  auto rep = evaluate_pipeline(g, {});
  EXPECT_EQ(rep.predicted, rep.baseline);
  EXPECT_EQ(rep.speedup, 0.0);
  auto j = to_json(rep);
  for (const char* k : {"baseline_makespan", "predicted_makespan", "speedup", "breakdown", "lane_busy"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["breakdown_delta"]["total_ns"], 0);
  EXPECT_EQ(j.dump(), to_json(evaluate_pipeline(g, {}, rep.baseline)).dump());
}

}  // namespace
}  // namespace whatif
