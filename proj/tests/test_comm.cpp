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

#include <random>

#include "support/model_specs.hpp"
#include "support/oracles.hpp"
#include "whatif/comm.hpp"

namespace whatif {
namespace {

using testing_support::model_graph;
using testing_support::small_cnn;

NetworkConfig net(std::uint64_t workers, double gbps) {
  NetworkConfig cfg;
  cfg.workers = workers;
  cfg.bandwidth_bps = static_cast<std::uint64_t>(gbps * 1e9);
  return cfg;
}

constexpr std::uint64_t kMB = 1'000'000;
constexpr TimeNs kMs = 1'000'000;

TEST(Formulas, AllReduce) {
  EXPECT_EQ(allreduce_duration(100 * kMB, net(4, 10)), 120 * kMs);
  EXPECT_EQ(allreduce_duration(100 * kMB, net(1, 10)), 0u);
  auto cfg = net(4, 10);
  cfg.latency = 7000;
  EXPECT_EQ(allreduce_duration(100 * kMB, cfg), 120 * kMs + 7000);
  EXPECT_EQ(allreduce_duration(0, cfg), 7000u);
}

TEST(Formulas, PushPull) {
  EXPECT_EQ(push_pull_duration(4 * kMB, net(1, 10)), 3200000u);
  EXPECT_EQ(push_pull_duration(8 * kMB, net(1, 10)), 6400000u);
  auto cfg = net(1, 10);
  cfg.latency = 3;
  EXPECT_EQ(push_pull_duration(0, cfg), 3u);
}

TEST(Formulas, ReduceScatterAllGather) {
  EXPECT_EQ(reduce_scatter_duration(100 * kMB, 4, net(4, 10)), 60 * kMs);
  EXPECT_EQ(all_gather_duration(100 * kMB, 2, net(4, 10)), 40 * kMs);
  for (std::uint64_t p : {0, 1}) {
    try {
      reduce_scatter_duration(1, p, net(4, 10));
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidGroup);
    }
  }
}

TEST(Formulas, ContentionScalesBandwidthTermOnly) {
  auto cfg = net(4, 10);
  cfg.latency = 1000;
  cfg.contention = Ratio::of(134, 100);
  EXPECT_EQ(allreduce_duration(100 * kMB, cfg), 1000 + 160800000u);
}

// The exact (unrounded) value of (num/den) * 8S/B in ns, as a fraction.
std::pair<unsigned __int128, unsigned __int128> exact(std::uint64_t s, std::uint64_t num, std::uint64_t den,
                                                       std::uint64_t bps) {
  return {static_cast<unsigned __int128>(s) * 8 * 1000000000ULL * num, static_cast<unsigned __int128>(den) * bps};
}

TEST(Formulas, Properties) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    std::uint64_t s = rng() % (1ULL << 34);
    std::uint64_t n = 2 + rng() % 64;
    std::uint64_t bps = 1 + rng() % 100'000'000'000ULL;
    NetworkConfig cfg;
    cfg.workers = n;
    cfg.bandwidth_bps = bps;
    // Each value is the half-up rounding of the exact fraction.
    auto [an, ad] = exact(s, 2 * (n - 1), n, bps);
    TimeNs ar = allreduce_duration(s, cfg);
    EXPECT_TRUE(2 * static_cast<unsigned __int128>(ar) * ad <= 2 * an + ad && 2 * an + ad < 2 * (static_cast<unsigned __int128>(ar) + 1) * ad);
    // RS + AG and AR are roundings of the same exact quantity.
    auto [rn, rd] = exact(s, n - 1, n, bps);
    EXPECT_TRUE(2 * rn * ad == an * rd);
    TimeNs rs = reduce_scatter_duration(s, n, cfg), ag = all_gather_duration(s, n, cfg);
    EXPECT_LE((rs + ag > ar ? rs + ag - ar : ar - rs - ag), 1u);
    // Doubling bandwidth halves the term up to rounding.
    NetworkConfig fast = cfg;
    fast.bandwidth_bps = 2 * bps;
    TimeNs half = allreduce_duration(s, fast);
    EXPECT_LE((2 * half > ar ? 2 * half - ar : ar - 2 * half), 1u);
  }
}

TEST(Formulas, DoublingBandwidthIsExactWhenDivisible) {
  for (std::uint64_t s : {25 * kMB, 40 * kMB, 4 * kMB}) {
    EXPECT_EQ(allreduce_duration(s, net(4, 10)), 2 * allreduce_duration(s, net(4, 20)));
    EXPECT_EQ(push_pull_duration(s, net(4, 10)), 2 * push_pull_duration(s, net(4, 20)));
  }
}

TEST(NetworkJson, ParseAndValidate) {
  auto cfg = network_config_from_json(json::parse(
      R"({"workers":8,"bandwidth_gbps":25,"latency_us":2.5,"channels":2,"contention_factor":1.34})"));
  EXPECT_EQ(cfg.workers, 8u);
  EXPECT_EQ(cfg.bandwidth_bps, 25'000'000'000ULL);
  EXPECT_EQ(cfg.latency, 2500u);
  EXPECT_EQ(cfg.channels, 2u);
  EXPECT_EQ(cfg.contention, Ratio::of(67, 50));
  EXPECT_EQ(network_config_from_json(json::parse(to_json(cfg).dump())), cfg);
  for (const char* bad : {R"({"workers":0})", R"({"bandwidth_gbps":0})", R"({"channels":0})",
                          R"({"contention_factor":-1})", R"({"latency_us":-1})", R"({"workers":"many"})", "[]"}) {
    try {
      network_config_from_json(json::parse(bad));
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidScenario) << bad;
    }
  }
}

std::vector<TaskId> comm_tasks(const DependencyGraph& g) {
  std::vector<TaskId> out;
  for (TaskId id : g.lane(*LaneId::parse("comm:collective"))) out.push_back(id);
  return out;
}

TEST(InsertDistributed, OneAllReducePerBucketInBucketOrder) {
  auto trace = testing_support::model_trace(small_cnn());
  auto g = build_layered_graph(trace);
  ASSERT_TRUE(trace.gradient_buckets);
  auto out = insert_distributed(g, *trace.gradient_buckets, net(4, 10));
  auto ids = comm_tasks(out);
  ASSERT_EQ(ids.size(), trace.gradient_buckets->bucket_size_bytes.size());
  std::size_t i = 0;
  for (const auto& [bucket, bytes] : trace.gradient_buckets->bucket_size_bytes) {
    const Task& t = out.task(ids[i]);
    EXPECT_EQ(t.kind, TaskKind::Comm);
    EXPECT_EQ(t.duration, allreduce_duration(bytes, net(4, 10)));
    EXPECT_EQ(t.size_bytes, bytes);
    if (i > 0) {
      EXPECT_EQ(out.edge_kind(ids[i - 1], ids[i]), EdgeKind::CommOrder);
    }
    ++i;
  }
  EXPECT_NO_THROW(check_graph_invariants(out));
}

TEST(InsertDistributed, AllReduceWaitsForLastBackwardAndGatesWeightUpdate) {
  auto trace = testing_support::model_trace(small_cnn());
  auto g = build_layered_graph(trace);
  auto out = insert_distributed(g, *trace.gradient_buckets, net(4, 10));
  auto r = simulate(out);
  const auto& buckets = *trace.gradient_buckets;
  auto ids = comm_tasks(out);
  TimeNs first_wu = std::numeric_limits<TimeNs>::max();
  for (const auto& [id, t] : out.tasks()) {
    if (t.on_gpu() && t.layer && t.layer->phase == Phase::WeightUpdate) first_wu = std::min(first_wu, r.start_of.at(id));
  }
  std::size_t i = 0;
  for (const auto& [bucket, bytes] : buckets.bucket_size_bytes) {
    TaskId ar = ids[i++];
    for (const auto& [layer, b] : buckets.bucket_of_layer) {
      if (b != bucket) continue;
      for (TaskId id : select_by_layer(out, layer, Phase::Backward)) {
        if (out.task(id).on_gpu()) EXPECT_GE(r.start_of.at(ar), r.start_of.at(id) + out.task(id).duration);
      }
    }
    EXPECT_LE(r.start_of.at(ar) + out.task(ar).duration, first_wu);
  }
}

TEST(InsertDistributed, SingleWorkerIsIdentity) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto trace = testing_support::model_trace(testing_support::random_model(seed, 3 + seed % 12),
                                              testing_support::random_options(seed));
    if (!trace.gradient_buckets) continue;
    auto g = build_layered_graph(trace);
    auto out = insert_distributed(g, *trace.gradient_buckets, net(1, 10));
    EXPECT_EQ(simulate(out).makespan, simulate(g).makespan) << "seed " << seed;
  }
}

TEST(InsertDistributed, BandwidthSweep) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto trace = testing_support::model_trace(testing_support::random_model(seed, 3 + seed % 12),
                                              testing_support::random_options(seed));
    if (!trace.gradient_buckets) continue;
    auto g = build_layered_graph(trace);
    TimeNs previous = std::numeric_limits<TimeNs>::max();
    std::vector<TimeNs> ten;
    for (double gbps : {1.0, 10.0, 20.0, 40.0, 80.0}) {
      auto out = insert_distributed(g, *trace.gradient_buckets, net(8, gbps));
      auto ms = simulate(out).makespan;
      EXPECT_LE(ms, previous) << "seed " << seed << " at " << gbps;
      previous = ms;
      std::vector<TimeNs> durations;
      for (TaskId id : comm_tasks(out)) durations.push_back(out.task(id).duration);
      if (gbps == 10.0) ten = durations;
      if (gbps == 20.0 || gbps == 40.0) {
        for (std::size_t i = 0; i < durations.size(); ++i) {
          TimeNs scaled = durations[i] * static_cast<TimeNs>(gbps / 10.0);
          EXPECT_LE(scaled > ten[i] ? scaled - ten[i] : ten[i] - scaled, static_cast<TimeNs>(gbps / 10.0));
        }
      }
    }
  }
}

TEST(InsertDistributed, FigureThreeHalving) {
  // Bucket sizes chosen so every duration divides exactly.
  auto trace = testing_support::model_trace(small_cnn());
  auto g = build_layered_graph(trace);
  GradientBucketMap buckets = *trace.gradient_buckets;
  for (auto& [b, bytes] : buckets.bucket_size_bytes) bytes = 25 * kMB * (b + 1);
  auto slow = insert_distributed(g, buckets, net(4, 10));
  auto fast = insert_distributed(g, buckets, net(4, 20));
  auto a = comm_tasks(slow), b = comm_tasks(fast);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(slow.task(a[i]).duration, 2 * fast.task(b[i]).duration);
}

TEST(InsertDistributed, OverlapFreeAddsEveryAllReduce) {
  // GPU-bound, one bucket holding every layer: nothing overlaps the allReduce.
  testing_support::ModelOptions opt;
  opt.launch = 1000;
  opt.gap = 0;
  opt.layers_per_bucket = 100;
  auto trace = testing_support::model_trace(small_cnn(), opt);
  auto g = build_layered_graph(trace);
  auto out = insert_distributed(g, *trace.gradient_buckets, net(4, 10));
  TimeNs total = 0;
  for (TaskId id : comm_tasks(out)) total += out.task(id).duration;
  EXPECT_GT(total, 0u);
  EXPECT_EQ(simulate(out).makespan, simulate(g).makespan + total);
}

TEST(InsertDistributed, Errors) {
  auto trace = testing_support::model_trace(small_cnn());
  auto g = build_layered_graph(trace);
  GradientBucketMap missing = *trace.gradient_buckets;
  missing.bucket_of_layer["decoder"] = 0;
  try {
    insert_distributed(g, missing, net(4, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingLayer);
  }
  auto layers = small_cnn();
  for (auto& l : layers) l.update.clear();
  auto no_wu = model_graph(layers);
  try {
    insert_distributed(no_wu, *trace.gradient_buckets, net(4, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoWeightUpdate);
  }
}

TEST(InsertDistributed, DoesNotMutateInput) {
  auto trace = testing_support::model_trace(small_cnn());
  auto g = build_layered_graph(trace);
  auto copy = g;
  insert_distributed(g, *trace.gradient_buckets, net(4, 10));
  EXPECT_EQ(g, copy);
}

}  // namespace
}  // namespace whatif
