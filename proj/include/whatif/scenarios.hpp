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

// Built-in optimization scenarios. Each one inspects a layer-mapped graph and
// emits a TransformPipeline; nothing here mutates the input graph.

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "whatif/comm.hpp"
#include "whatif/layers.hpp"
#include "whatif/simulator.hpp"
#include "whatif/transform.hpp"

namespace whatif {

struct ScenarioSpec {
  std::string name;
  json params = json::object();
  std::string description;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

/// What a scenario may look at besides its parameters.
struct ScenarioContext {
  const DependencyGraph& graph;
  std::optional<GradientBucketMap> buckets;
};

struct ParamSchema {
  std::string name;
  // ratio | number | integer | boolean | string_list | integer_list |
  // network | layer_factors | layer_bytes | buckets | pipeline | steps
  std::string type;
  json default_value;  // null means "derived from the graph"
  std::string description;
};

struct ScenarioInfo {
  std::string name;
  std::string description;
  std::vector<ParamSchema> params;
  std::function<TransformPipeline(const ScenarioContext&, const json&)> generate;
};

namespace detail {

[[noreturn]] inline void scenario_error(const std::string& msg) { throw Error(ErrorCode::InvalidScenario, msg); }

inline bool type_matches(const std::string& type, const json& v) {
  if (v.is_null()) return true;
  if (type == "ratio") return v.is_number() || v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") return v.is_number_integer();
  if (type == "boolean") return v.is_boolean();
  if (type == "string_list") {
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); });
  }
  if (type == "integer_list") {
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_integer(); });
  }
  if (type == "layer_factors") {
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) {
             return x.is_object() && x.contains("layer") && x["layer"].is_string() && x.contains("factor");
           });
  }
  if (type == "layer_bytes") {
    return v.is_object() && std::all_of(v.begin(), v.end(), [](const json& x) {
             return x.is_number_integer() && x.get<std::int64_t>() >= 0;
           });
  }
  if (type == "network" || type == "buckets" || type == "pipeline") return v.is_object();
  if (type == "steps") return v.is_array();
  return false;
}

/// Parses a factor; values at or below zero raise `nonpositive`.
inline Ratio positive_ratio(const json& v, const std::string& what, ErrorCode nonpositive) {
  if (v.is_number() && !(v.get<double>() > 0)) throw Error(nonpositive, what + " must be positive");
  if (v.is_string() && !v.get<std::string>().empty() && v.get<std::string>()[0] == '-') {
    throw Error(nonpositive, what + " must be positive");
  }
  Ratio r;
  try {
    r = parse_ratio(v, what);
  } catch (const Error& e) {
    scenario_error(e.detail());
  }
  if (r.num == 0) throw Error(nonpositive, what + " must be positive");
  return r;
}

inline std::vector<std::string> strings(const json& v) { return v.get<std::vector<std::string>>(); }

inline bool matches_any(std::string_view text, const std::vector<std::string>& keywords) {
  return std::any_of(keywords.begin(), keywords.end(), [&](const std::string& k) { return contains_ci(text, k); });
}

inline Selector name_any(const std::vector<std::string>& keywords) {
  std::vector<Selector> parts;
  for (const auto& k : keywords) parts.push_back(Selector::by_name(k));
  return Selector::any_of(std::move(parts));
}

/// Layers (mapped, not synthetic) whose name contains one of `keywords`.
inline std::set<std::string> layers_matching(const DependencyGraph& g, const std::vector<std::string>& keywords) {
  std::set<std::string> out;
  for (const auto& [id, t] : g.tasks()) {
    if (t.layer && t.layer->layer != kGlobalLayer && matches_any(t.layer->layer, keywords)) out.insert(t.layer->layer);
  }
  return out;
}

inline std::set<TaskId> gpu_tasks_of(const DependencyGraph& g, const std::set<std::string>& layers,
                                     std::optional<Phase> phase = std::nullopt) {
  std::set<TaskId> out;
  for (const auto& [id, t] : g.tasks()) {
    if (t.on_gpu() && t.layer && layers.count(t.layer->layer) && (!phase || t.layer->phase == *phase)) out.insert(id);
  }
  return out;
}

inline json id_list(const std::set<TaskId>& ids) { return json(std::vector<TaskId>(ids.begin(), ids.end())); }

inline std::optional<TaskId> lane_neighbor(const DependencyGraph& g, TaskId id, int step) {
  const auto& order = g.lane(g.task(id).lane);
  auto it = std::find(order.begin(), order.end(), id);
  if (step < 0 && it == order.begin()) return std::nullopt;
  if (step > 0 && it + 1 == order.end()) return std::nullopt;
  return *(it + step);
}

inline std::set<TaskId> opt_set(std::optional<TaskId> id) { return id ? std::set<TaskId>{*id} : std::set<TaskId>{}; }

/// Median duration of GPU kernels whose name matches `keywords`, falling
/// back to every GPU kernel, then to 0.
inline TimeNs median_kernel_duration(const DependencyGraph& g, const std::vector<std::string>& keywords) {
  auto median = [](std::vector<TimeNs> d) -> std::optional<TimeNs> {
    if (d.empty()) return std::nullopt;
    std::sort(d.begin(), d.end());
    std::size_t n = d.size();
    if (n % 2) return d[n / 2];
    return div_half_up(static_cast<unsigned __int128>(d[n / 2 - 1]) + d[n / 2], 2);
  };
  std::vector<TimeNs> matched, all;
  for (const auto& [id, t] : g.tasks()) {
    if (t.kind != TaskKind::GpuKernel) continue;
    all.push_back(t.duration);
    if (matches_any(t.name, keywords)) matched.push_back(t.duration);
  }
  if (auto m = median(matched)) return *m;
  return median(all).value_or(0);
}

/// Time parameter in microseconds; null falls back to `fallback`.
inline TimeNs us_param(const json& p, const char* name, TimeNs fallback) {
  const json& v = p.at(name);
  if (v.is_null()) return fallback;
  if (v.get<double>() < 0) scenario_error(std::string(name) + " must not be negative");
  return v.is_number_float() ? us_to_ns(v.get<double>()) : v.get<TimeNs>() * kNsPerUs;
}

inline LaneId cpu_lane_for(const DependencyGraph& g, std::optional<TaskId> near) {
  if (near) {
    if (g.task(*near).on_cpu()) return g.task(*near).lane;
    if (auto l = launcher_of(g, *near)) return g.task(*l).lane;
  }
  for (const auto& [lane, order] : g.lane_order()) {
    if (lane.cls == LaneClass::CpuThread) return lane;
  }
  return LaneId::cpu("0");
}

inline json kernel_json(const std::string& name, const LaneId& lane, TimeNs duration,
                        const std::optional<LayerTag>& layer = std::nullopt) {
  json t = {{"name", name}, {"kind", "GpuKernel"}, {"lane", lane.str()}, {"duration_ns", duration}};
  if (layer) {
    t["layer"] = layer->layer;
    t["phase"] = std::string(to_string(layer->phase));
  }
  return t;
}

inline std::optional<GradientBucketMap> buckets_param(const ScenarioContext& ctx, const json& p) {
  if (p.contains("buckets") && !p["buckets"].is_null()) {
    try {
      return parse_gradient_buckets(p["buckets"]);
    } catch (const Error& e) {
      scenario_error("buckets: " + e.detail());
    }
  }
  return ctx.buckets;
}

inline NetworkConfig network_param(const json& p) { return network_config_from_json(p.at("network")); }

/// Records the distributed-training steps when `distributed` is set.
inline void maybe_distributed(PipelineRecorder& rec, const ScenarioContext& ctx, const json& p) {
  if (!p.value("distributed", false)) return;
  auto buckets = buckets_param(ctx, p);
  if (!buckets) throw Error(ErrorCode::MissingLayerGradients, "no gradient buckets in the trace or parameters");
  record_distributed(rec, *buckets, network_param(p));
}

inline const json kDefaultNetwork = {{"workers", 4}, {"bandwidth_gbps", 10}, {"latency_us", 0},
                                     {"channels", 1}, {"contention_factor", 1}};

}  // namespace detail

// ---------------------------------------------------------------------------
// Generators. `p` always holds every declared parameter (defaults merged).

inline TransformPipeline whatif_amp(const ScenarioContext& ctx, const json& p) {
  (void)ctx;
  auto compute = detail::positive_ratio(p.at("compute_factor"), "compute_factor", ErrorCode::InvalidScenario);
  auto memory = detail::positive_ratio(p.at("memory_factor"), "memory_factor", ErrorCode::InvalidScenario);
  Selector gpu = Selector::by_lane(LaneClass::GpuStream);
  Selector compute_bound = detail::name_any(detail::strings(p.at("compute_keywords")));
  TransformPipeline out;
  out.steps.push_back({"scale", Selector::all_of({gpu, compute_bound}), {{"factor", detail::ratio_to_json(compute)}}});
  out.steps.push_back(
      {"scale", Selector::all_of({gpu, Selector::negate(compute_bound)}), {{"factor", detail::ratio_to_json(memory)}}});
  return out;
}

inline TransformPipeline whatif_fused_adam(const ScenarioContext& ctx, const json& p) {
  (void)p;
  const DependencyGraph& g = ctx.graph;
  std::set<TaskId> wu;
  for (const auto& [id, t] : g.tasks()) {
    if (t.on_gpu() && t.layer && t.layer->phase == Phase::WeightUpdate) wu.insert(id);
  }
  if (wu.empty()) throw Error(ErrorCode::NoWeightUpdate, "no weight-update GPU tasks to fuse");
  auto baseline = simulate(g);
  TaskId kept = detail::first_starter(baseline, wu);
  TimeNs sum = 0;
  std::set<TaskId> removed;
  for (TaskId id : wu) {
    sum += g.task(id).duration;
    if (id == kept) continue;
    removed.insert(id);
    if (auto l = detail::launcher_of(g, id)) removed.insert(*l);
  }
  TransformPipeline out;
  out.steps.push_back({"set", Selector::by_ids({kept}), {{"duration_ns", sum}}});
  if (!removed.empty()) out.steps.push_back({"remove", Selector::by_ids(removed), json::object()});
  return out;
}

inline TransformPipeline whatif_reconstruct_batchnorm(const ScenarioContext& ctx, const json& p) {
  const DependencyGraph& g = ctx.graph;
  auto factor = detail::positive_ratio(p.at("batchnorm_factor"), "batchnorm_factor", ErrorCode::InvalidScenario);
  auto relu = detail::layers_matching(g, detail::strings(p.at("relu_keywords")));
  auto bn = detail::layers_matching(g, detail::strings(p.at("batchnorm_keywords")));
  for (const auto& l : relu) bn.erase(l);
  auto removed = detail::gpu_tasks_of(g, relu, p.at("include_backward").get<bool>() ? std::nullopt
                                                                                    : std::optional(Phase::Forward));
  auto scaled = detail::gpu_tasks_of(g, bn);
  TransformPipeline out;
  if (!removed.empty()) out.steps.push_back({"remove", Selector::by_ids(removed), json::object()});
  if (!scaled.empty()) out.steps.push_back({"scale", Selector::by_ids(scaled), {{"factor", detail::ratio_to_json(factor)}}});
  return out;
}

inline TransformPipeline whatif_distributed(const ScenarioContext& ctx, const json& p) {
  auto buckets = detail::buckets_param(ctx, p);
  if (!buckets) throw Error(ErrorCode::MissingLayerGradients, "no gradient buckets in the trace or parameters");
  return distributed_pipeline(ctx.graph, *buckets, detail::network_param(p));
}

/// Per-layer gradient sizes: explicit parameter, else bucket sizes split
/// evenly over their member layers (remainder to the first members).
inline std::map<std::string, std::uint64_t> layer_gradient_bytes(const ScenarioContext& ctx, const json& p) {
  std::map<std::string, std::uint64_t> out;
  if (p.contains("layer_gradient_bytes") && !p["layer_gradient_bytes"].is_null()) {
    for (const auto& [layer, bytes] : p["layer_gradient_bytes"].items()) out[layer] = bytes.get<std::uint64_t>();
    return out;
  }
  auto buckets = detail::buckets_param(ctx, p);
  if (!buckets) throw Error(ErrorCode::MissingLayerGradients, "no per-layer gradient sizes in the trace or parameters");
  std::map<std::uint64_t, std::vector<std::string>> members;
  for (const auto& [layer, b] : buckets->bucket_of_layer) members[b].push_back(layer);
  for (const auto& [b, layers] : members) {
    std::uint64_t bytes = buckets->bucket_size_bytes.at(b);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out[layers[i]] = bytes / layers.size() + (i < bytes % layers.size() ? 1 : 0);
    }
  }
  return out;
}

inline TransformPipeline whatif_p3(const ScenarioContext& ctx, const json& p) {
  const DependencyGraph& g = ctx.graph;
  auto cfg = detail::network_param(p);
  auto slice = p.at("slice_size_bytes").get<std::int64_t>();
  auto servers = p.at("servers").get<std::int64_t>();
  if (slice <= 0) detail::scenario_error("slice_size_bytes must be positive");
  if (servers <= 0) detail::scenario_error("servers must be positive");
  auto gradients = layer_gradient_bytes(ctx, p);
  auto baseline = simulate(g);

  // Layers in gradient generation order: by finish of their last backward task.
  std::vector<std::tuple<TimeNs, TaskId, std::string>> order;
  for (const auto& [layer, bytes] : gradients) {
    if (bytes == 0) continue;
    auto bw = detail::phase_tasks(g, layer, Phase::Backward);
    if (bw.empty()) throw Error(ErrorCode::MissingLayer, "layer '" + layer + "' has gradients but no backward tasks");
    TaskId last = detail::last_finisher(g, baseline, bw);
    order.emplace_back(baseline.start_of.at(last) + g.task(last).duration, last, layer);
  }
  std::sort(order.begin(), order.end());

  // Input-side layers are needed first by the next forward pass.
  auto forward = forward_layer_order(g);
  auto rank = [&](const std::string& layer) -> std::int64_t {
    auto it = std::find(forward.begin(), forward.end(), layer);
    return static_cast<std::int64_t>(it - forward.begin());
  };

  PipelineRecorder rec(g);
  std::uint64_t slice_index = 0;
  for (const auto& [finish, u, layer] : order) {
    std::optional<TaskId> v;
    for (TaskId id : detail::phase_tasks(g, layer, Phase::Forward)) {
      if (!g.task(id).on_gpu() || baseline.start_of.at(id) < finish) continue;
      if (!v || std::pair(baseline.start_of.at(id), id) < std::pair(baseline.start_of.at(*v), *v)) v = id;
    }
    std::int64_t priority = -rank(layer);
    std::uint64_t remaining = gradients.at(layer);
    for (int i = 0; remaining > 0; ++i, ++slice_index) {
      std::uint64_t s = std::min<std::uint64_t>(remaining, static_cast<std::uint64_t>(slice));
      remaining -= s;
      TimeNs d = push_pull_duration(s, cfg);
      std::string tag = layer + "#" + std::to_string(i);
      json push = {{"name", "push " + tag}, {"kind", "Comm"},     {"lane", "comm:send"},
                   {"duration_ns", d},      {"size_bytes", s},    {"priority", priority}};
      auto push_id = rec.add("insert", Selector::all(), {{"task", push}, {"after", json::array({u})}, {"placement", "scheduled"}})[0];
      bool first_server = slice_index % static_cast<std::uint64_t>(servers) == 0;
      json pull = push;
      pull["name"] = "pull " + tag;
      pull["lane"] = first_server ? "comm:send" : "comm:recv";
      rec.add("insert", Selector::all(),
              {{"task", pull}, {"after", json::array({push_id})}, {"before", detail::id_list(detail::opt_set(v))},
               {"placement", "scheduled"}});
    }
  }
  auto out = rec.take();
  out.schedule_policy = "priority";
  return out;
}

/// Duration of reduce-scatter (or all-gather) level `i` of a factorization:
/// the payload has already shrunk by the product of earlier factors.
inline TimeNs blueconnect_level_duration(std::uint64_t size_bytes, std::uint64_t factor, std::uint64_t shrink,
                                         const NetworkConfig& cfg) {
  if (factor < 2) throw Error(ErrorCode::InvalidGroup, "group size must be at least 2");
  return cfg.latency + detail::transfer_ns(size_bytes, factor - 1, factor * shrink, cfg);
}

inline TransformPipeline whatif_blueconnect(const ScenarioContext& ctx, const json& p) {
  auto cfg = detail::network_param(p);
  auto factors = p.at("factorization").is_null() ? std::vector<std::int64_t>{}
                                                 : p.at("factorization").get<std::vector<std::int64_t>>();
  if (factors.empty()) factors.push_back(static_cast<std::int64_t>(cfg.workers));
  std::uint64_t product = 1;
  for (auto f : factors) {
    if (f < 2) throw Error(ErrorCode::BadFactorization, "every factor must be at least 2");
    product *= static_cast<std::uint64_t>(f);
  }
  if (product != cfg.workers) {
    throw Error(ErrorCode::BadFactorization, "factors multiply to " + std::to_string(product) + ", not " +
                                                 std::to_string(cfg.workers) + " workers");
  }
  if (factors.size() > cfg.channels) {
    throw Error(ErrorCode::BadFactorization, std::to_string(factors.size()) + " levels need as many channels, have " +
                                                 std::to_string(cfg.channels));
  }
  PipelineRecorder rec(ctx.graph);
  detail::maybe_distributed(rec, ctx, p);
  auto keywords = detail::strings(p.at("allreduce_keywords"));
  std::vector<TaskId> reduces;
  for (const auto& [id, t] : rec.graph().tasks()) {
    if (t.kind == TaskKind::Comm && detail::matches_any(t.name, keywords)) reduces.push_back(id);
  }
  for (TaskId u : reduces) {
    const Task& ar = rec.graph().task(u);
    if (!ar.size_bytes) detail::scenario_error("allReduce task " + std::to_string(u) + " has no size_bytes");
    std::uint64_t size = *ar.size_bytes;
    std::string base = ar.name;
    std::set<TaskId> parents(rec.graph().parents(u).begin(), rec.graph().parents(u).end());
    std::set<TaskId> children(rec.graph().children(u).begin(), rec.graph().children(u).end());
    rec.add("remove", Selector::by_ids({u}));
    std::set<TaskId> prev = parents;
    auto level = [&](const std::string& what, std::size_t i, std::uint64_t shrink) {
      json task = {{"name", base + "/" + what + std::to_string(i)},
                   {"kind", "Comm"},
                   {"lane", "comm:channel:" + std::to_string(i)},
                   {"duration_ns", blueconnect_level_duration(size, static_cast<std::uint64_t>(factors[i]), shrink, cfg)},
                   {"size_bytes", size / shrink}};
      TaskId id = rec.add("insert", Selector::all(),
                          {{"task", task}, {"after", detail::id_list(prev)}, {"before", detail::id_list(children)},
                           {"placement", "late"}})[0];
      prev = {id};
    };
    std::vector<std::uint64_t> shrink(factors.size(), 1);
    for (std::size_t i = 1; i < factors.size(); ++i) shrink[i] = shrink[i - 1] * static_cast<std::uint64_t>(factors[i - 1]);
    for (std::size_t i = 0; i < factors.size(); ++i) level("reduce_scatter", i, shrink[i]);
    for (std::size_t i = factors.size(); i-- > 0;) level("all_gather", i, shrink[i]);
  }
  return rec.take();
}

inline TransformPipeline whatif_metaflow(const ScenarioContext& ctx, const json& p) {
  (void)ctx;
  Selector gpu = Selector::by_lane(LaneClass::GpuStream);
  TransformPipeline out;
  std::vector<Selector> removed;
  for (const auto& layer : detail::strings(p.at("remove_layers"))) removed.push_back(Selector::by_layer(layer));
  if (!removed.empty()) out.steps.push_back({"remove", Selector::all_of({gpu, Selector::any_of(removed)}), json::object()});
  for (const auto& entry : p.at("scale_layers")) {
    auto factor = detail::positive_ratio(entry.at("factor"), "factor", ErrorCode::InvalidScenario);
    out.steps.push_back({"scale", Selector::all_of({gpu, Selector::by_layer(entry.at("layer").get<std::string>())}),
                         {{"factor", detail::ratio_to_json(factor)}}});
  }
  try {
    auto extra = pipeline_from_json(json{{"steps", p.at("extra_steps")}});
    for (auto& s : extra.steps) out.steps.push_back(std::move(s));
  } catch (const Error& e) {
    detail::scenario_error("extra_steps: " + e.detail());
  }
  return out;
}

inline TransformPipeline whatif_vdnn(const ScenarioContext& ctx, const json& p) {
  const DependencyGraph& g = ctx.graph;
  double gbps = p.at("pcie_bandwidth_gbps").get<double>();
  if (gbps < 0) detail::scenario_error("pcie_bandwidth_gbps must not be negative");
  auto conv = detail::layers_matching(g, detail::strings(p.at("conv_keywords")));
  auto layer_bytes = p.at("layer_tensor_bytes");
  std::uint64_t default_bytes = p.at("tensor_bytes").get<std::uint64_t>();
  TimeNs call = detail::us_param(p, "call_us", default_launch_cost(g));
  auto baseline = simulate(g);

  struct Pair {
    std::string layer;
    TaskId u, v;
  };
  std::vector<Pair> pairs;
  for (const auto& layer : forward_layer_order(g)) {
    if (!conv.count(layer)) continue;
    auto fw = detail::gpu_tasks_of(g, {layer}, Phase::Forward);
    auto bw = detail::gpu_tasks_of(g, {layer}, Phase::Backward);
    if (fw.empty() || bw.empty()) continue;
    pairs.push_back({layer, detail::last_finisher(g, baseline, fw), detail::first_starter(baseline, bw)});
  }
  if (pairs.empty()) throw Error(ErrorCode::MissingConvPairs, "no convolution layer has both forward and backward GPU tasks");

  PipelineRecorder rec(g);
  const std::int64_t n = static_cast<std::int64_t>(pairs.size());
  for (std::int64_t rank = 0; rank < n; ++rank) {
    const Pair& pr = pairs[static_cast<std::size_t>(rank)];
    std::uint64_t bytes = layer_bytes.is_object() && layer_bytes.contains(pr.layer)
                              ? layer_bytes[pr.layer].get<std::uint64_t>()
                              : default_bytes;
    TimeNs copy = gbps == 0 ? 0 : round_half_up(static_cast<long double>(bytes) * 8.0L / (gbps * 1e9L) * 1e9L);
    std::string device = g.task(pr.u).lane.key.substr(0, g.task(pr.u).lane.key.find(':'));
    std::string copy_lane = "gpu:" + device + ":vdnn_copy";
    // Layers nearer the output are needed first in backward, so their
    // prefetches rank higher; every prefetch ranks below offloads (0).
    std::int64_t prefetch_priority = -(n - rank);
    TaskId prev = pr.u;
    auto chain = [&](const std::string& name, const char* kind, const std::string& lane, TimeNs d, std::int64_t prio,
                     bool last) {
      json task = {{"name", name + " " + pr.layer}, {"kind", kind},  {"lane", lane},
                   {"duration_ns", d},              {"priority", prio}};
      if (std::string(kind) != "CpuApi") task["size_bytes"] = bytes;
      json before = last ? json::array({pr.v}) : json::array();
      prev = rec.add("insert", Selector::all(),
                     {{"task", task}, {"after", json::array({prev})}, {"before", before}, {"placement", "scheduled"}})[0];
    };
    chain("cudaMemcpyLaunch_offload", "CpuApi", "cpu:vdnn", call, 0, false);
    chain("memcpy_dtoh_offload", "GpuMemcpy", copy_lane, copy, 0, false);
    chain("cudaFree_vDNN", "CpuApi", "cpu:vdnn", call, prefetch_priority, false);
    chain("cudaMalloc_vDNN", "CpuApi", "cpu:vdnn", call, prefetch_priority, false);
    chain("cudaMemcpyLaunch_prefetch", "CpuApi", "cpu:vdnn", call, prefetch_priority, false);
    chain("memcpy_htod_prefetch", "GpuMemcpy", copy_lane, copy, prefetch_priority, true);
  }
  auto out = rec.take();
  out.schedule_policy = "deferring";
  return out;
}

inline TransformPipeline whatif_gist(const ScenarioContext& ctx, const json& p) {
  const DependencyGraph& g = ctx.graph;
  TimeNs estimate = detail::median_kernel_duration(g, detail::strings(p.at("elementwise_keywords")));
  TimeNs encode = detail::us_param(p, "encode_us", estimate);
  TimeNs decode = detail::us_param(p, "decode_us", estimate);
  TimeNs dpr = detail::us_param(p, "dpr_us", estimate);
  auto relu = detail::strings(p.at("relu_keywords"));
  auto pool = detail::strings(p.at("pool_keywords"));
  auto conv = detail::strings(p.at("conv_keywords"));
  json launch = json::object();
  if (!p.at("launch_us").is_null()) launch["duration_ns"] = detail::us_param(p, "launch_us", 0);

  auto baseline = simulate(g);
  auto layers = forward_layer_order(g);
  auto last_of = [&](const std::string& layer, Phase ph) -> std::optional<TaskId> {
    auto ids = detail::gpu_tasks_of(g, {layer}, ph);
    if (ids.empty()) return std::nullopt;
    return detail::last_finisher(g, baseline, ids);
  };
  auto first_of = [&](const std::string& layer, Phase ph) -> std::optional<TaskId> {
    auto ids = detail::gpu_tasks_of(g, {layer}, ph);
    if (ids.empty()) return std::nullopt;
    return detail::first_starter(baseline, ids);
  };

  PipelineRecorder rec(g);
  // Inserts a kernel with its launch right after `after_id` (or right before
  // `before_id`) on that task's stream.
  auto insert_after = [&](const std::string& name, TaskId anchor, TimeNs d, bool before_anchor) {
    const DependencyGraph& cur = rec.graph();
    const Task& a = cur.task(anchor);
    std::set<TaskId> after, before;
    if (before_anchor) {
      after = detail::opt_set(detail::lane_neighbor(cur, anchor, -1));
      before = {anchor};
    } else {
      after = {anchor};
      before = detail::opt_set(detail::lane_neighbor(cur, anchor, +1));
    }
    rec.add("insert_gpu", Selector::all(),
            {{"task", detail::kernel_json(name, a.lane, d, a.layer)},
             {"cpu_lane", detail::cpu_lane_for(cur, anchor).str()},
             {"launch", launch},
             {"after", detail::id_list(after)},
             {"before", detail::id_list(before)}});
  };

  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (!detail::matches_any(layers[i], relu) || !detail::matches_any(layers[i + 1], pool)) continue;
    bool ssdc = i + 2 < layers.size() && detail::matches_any(layers[i + 2], conv);
    auto pool_fw = last_of(layers[i + 1], Phase::Forward);
    auto pool_bw = first_of(layers[i + 1], Phase::Backward);
    if (!pool_fw) continue;
    insert_after(ssdc ? "gist_ssdc_encode" : "gist_binarize_encode", *pool_fw, encode, false);
    if (pool_bw) insert_after(ssdc ? "gist_ssdc_decode" : "gist_binarize_decode", *pool_bw, decode, true);
  }
  if (p.at("lossy").get<bool>()) {
    for (const auto& [id, t] : g.tasks()) {
      if (!t.on_gpu() || !t.layer || t.layer->phase != Phase::Forward || detail::matches_any(t.layer->layer, relu)) continue;
      insert_after("gist_dpr", id, dpr, false);
    }
  }
  return rec.take();
}

inline TransformPipeline whatif_dgc(const ScenarioContext& ctx, const json& p) {
  auto ratio = detail::positive_ratio(p.at("compression_ratio"), "compression_ratio", ErrorCode::BadRatio);
  PipelineRecorder rec(ctx.graph);
  detail::maybe_distributed(rec, ctx, p);
  const DependencyGraph& g0 = rec.graph();
  TimeNs estimate = detail::median_kernel_duration(g0, {"elementwise"});
  TimeNs quantize = detail::us_param(p, "quantize_us", estimate);
  TimeNs sparse = detail::us_param(p, "sparse_us", estimate);
  TimeNs decompress = detail::us_param(p, "decompress_us", estimate);
  json launch = json::object();
  if (!p.at("launch_us").is_null()) launch["duration_ns"] = detail::us_param(p, "launch_us", 0);

  std::set<TaskId> comm;
  for (const auto& [id, t] : g0.tasks()) {
    if (t.kind == TaskKind::Comm) comm.insert(id);
  }
  if (comm.empty()) return rec.take();
  if (!ratio.is_one()) rec.add("scale", Selector::by_ids(comm), {{"factor", detail::ratio_to_json(ratio)}});

  std::optional<LaneId> default_stream;
  for (const auto& [lane, order] : g0.lane_order()) {
    if (lane.cls == LaneClass::GpuStream) {
      default_stream = lane;
      break;
    }
  }
  if (!default_stream) default_stream = LaneId::gpu("0:7");

  for (TaskId r : comm) {
    const DependencyGraph& cur = rec.graph();
    std::set<TaskId> sources, sinks;
    std::optional<TaskId> gpu_source;
    for (TaskId s : cur.parents(r)) {
      if (cur.task(s).on_comm()) continue;
      sources.insert(s);
      if (cur.task(s).on_gpu() && (!gpu_source || s > *gpu_source)) gpu_source = s;
    }
    for (TaskId t : cur.children(r)) {
      if (!cur.task(t).on_comm()) sinks.insert(t);
    }
    LaneId stream = gpu_source ? cur.task(*gpu_source).lane : *default_stream;
    std::string cpu = detail::cpu_lane_for(cur, gpu_source).str();
    auto q = rec.add("insert_gpu", Selector::all(),
                     {{"task", detail::kernel_json("dgc_quantize", stream, quantize)},
                      {"cpu_lane", cpu},
                      {"launch", launch},
                      {"after", detail::id_list(sources)},
                      {"before", json::array({r})}});
    rec.add("insert_gpu", Selector::all(),
            {{"task", detail::kernel_json("dgc_sparsify", stream, sparse)},
             {"cpu_lane", cpu},
             {"launch", launch},
             {"after", json::array({q[1]})},
             {"before", json::array({r})}});
    rec.add("insert_gpu", Selector::all(),
            {{"task", detail::kernel_json("dgc_decompress", stream, decompress)},
             {"cpu_lane", cpu},
             {"launch", launch},
             {"after", json::array({r})},
             {"before", detail::id_list(sinks)},
             {"placement", "late"}});
  }
  return rec.take();
}

inline TransformPipeline whatif_custom(const ScenarioContext& ctx, const json& p) {
  (void)ctx;
  try {
    return pipeline_from_json(p.at("pipeline"));
  } catch (const Error& e) {
    detail::scenario_error("pipeline: " + e.detail());
  }
}

// ---------------------------------------------------------------------------
// Registry

inline const std::vector<ScenarioInfo>& registry() {
  static const std::vector<ScenarioInfo> kRegistry = [] {
    using detail::kDefaultNetwork;
    json network = kDefaultNetwork;
    ParamSchema net{"network", "network", network, "workers, bandwidth_gbps, latency_us, channels, contention_factor"};
    ParamSchema buckets{"buckets", "buckets", nullptr, "gradient buckets; defaults to the trace's"};
    ParamSchema distributed{"distributed", "boolean", false, "first add one allReduce per gradient bucket"};
    std::vector<ScenarioInfo> r;
    r.push_back({"amp",
                 "Automatic mixed precision: compute-bound kernels and other GPU tasks shrink by separate factors.",
                 {{"compute_factor", "ratio", "1/3", "scale for kernels matching compute_keywords"},
                  {"memory_factor", "ratio", "1/2", "scale for every other GPU task"},
                  {"compute_keywords", "string_list", {"sgemm", "scudnn"}, "name substrings of compute-bound kernels"}},
                 whatif_amp});
    r.push_back({"fused_adam",
                 "Fused optimizer: one weight-update kernel carries the summed duration; the others and their launches go.",
                 {},
                 whatif_fused_adam});
    r.push_back({"reconstruct_batchnorm",
                 "Batchnorm restructuring: ReLU kernels fuse away and batchnorm kernels shrink.",
                 {{"batchnorm_factor", "ratio", "1/2", "scale for batchnorm-layer GPU tasks"},
                  {"relu_keywords", "string_list", {"relu"}, "layer-name substrings of ReLU layers"},
                  {"batchnorm_keywords", "string_list", {"bn", "batchnorm", "batch_norm"}, "layer-name substrings of batchnorm layers"},
                  {"include_backward", "boolean", false, "also remove backward ReLU kernels"}},
                 whatif_reconstruct_batchnorm});
    r.push_back({"distributed",
                 "Data-parallel training: one ring allReduce per gradient bucket between backward and weight update.",
                 {net, buckets},
                 whatif_distributed});
    r.push_back({"p3",
                 "Priority-based parameter propagation: sliced push/pull per layer, input-side layers first.",
                 {net,
                  {"slice_size_bytes", "integer", 4000000, "gradient slice size"},
                  {"servers", "integer", 2, "parameter servers; slices are placed round-robin"},
                  {"layer_gradient_bytes", "layer_bytes", nullptr, "gradient bytes per layer; defaults to bucket sizes"},
                  buckets},
                 whatif_p3});
    r.push_back({"blueconnect",
                 "allReduce decomposed into reduce-scatter and all-gather levels over parallel channels.",
                 {net,
                  {"factorization", "integer_list", json::array(), "group sizes per level; empty means [workers]"},
                  {"allreduce_keywords", "string_list", {"allreduce"}, "name substrings of allReduce tasks"},
                  distributed,
                  buckets},
                 whatif_blueconnect});
    r.push_back({"metaflow",
                 "Layer substitution: remove some layers' GPU tasks and rescale others.",
                 {{"remove_layers", "string_list", json::array(), "layers whose GPU tasks are removed"},
                  {"scale_layers", "layer_factors", json::array(), "[{layer, factor}] applied to GPU tasks"},
                  {"extra_steps", "steps", json::array(), "pipeline steps appended, e.g. insert_gpu for new layers"}},
                 whatif_metaflow});
    r.push_back({"vdnn",
                 "Convolution feature maps offloaded to host after forward and prefetched before backward.",
                 {{"pcie_bandwidth_gbps", "number", 96, "host link bandwidth; 0 means unlimited"},
                  {"tensor_bytes", "integer", 16000000, "feature-map bytes per convolution layer"},
                  {"layer_tensor_bytes", "layer_bytes", nullptr, "per-layer overrides of tensor_bytes"},
                  {"call_us", "number", nullptr, "duration of each inserted CPU call; defaults to the median launch"},
                  {"conv_keywords", "string_list", {"conv"}, "layer-name substrings of convolution layers"}},
                 whatif_vdnn});
    r.push_back({"gist",
                 "Feature-map encoding: encode kernels after ReLU-pool patterns, decode kernels in backward.",
                 {{"lossy", "boolean", false, "also insert delayed-precision-reduction kernels"},
                  {"encode_us", "number", nullptr, "encode kernel duration; defaults to the median elementwise kernel"},
                  {"decode_us", "number", nullptr, "decode kernel duration; same default"},
                  {"dpr_us", "number", nullptr, "reduction kernel duration; same default"},
                  {"launch_us", "number", nullptr, "launch call duration; defaults to the median launch"},
                  {"relu_keywords", "string_list", {"relu"}, "layer-name substrings of ReLU layers"},
                  {"pool_keywords", "string_list", {"pool"}, "layer-name substrings of pooling layers"},
                  {"conv_keywords", "string_list", {"conv"}, "layer-name substrings of convolution layers"},
                  {"elementwise_keywords", "string_list", {"elementwise"}, "kernels used for the duration estimate"}},
                 whatif_gist});
    r.push_back({"dgc",
                 "Gradient compression: communication shrinks; compression kernels run before it and decompression after.",
                 {{"compression_ratio", "ratio", "1/100", "scale for communication tasks"},
                  {"quantize_us", "number", nullptr, "kernel duration; defaults to the median elementwise kernel"},
                  {"sparse_us", "number", nullptr, "kernel duration; same default"},
                  {"decompress_us", "number", nullptr, "kernel duration; same default"},
                  {"launch_us", "number", nullptr, "launch call duration; defaults to the median launch"},
                  distributed,
                  net,
                  buckets},
                 whatif_dgc});
    r.push_back({"custom",
                 "A user-written transformation pipeline.",
                 {{"pipeline", "pipeline", {{"steps", json::array()}}, "{steps, schedule_policy}"}},
                 whatif_custom});
    return r;
  }();
  return kRegistry;
}

inline const ScenarioInfo& find_scenario(const std::string& name) {
  for (const auto& s : registry()) {
    if (s.name == name) return s;
  }
  detail::scenario_error("unknown scenario '" + name + "'");
}

/// Declared defaults overlaid with `given`; unknown or mistyped parameters
/// are rejected.
inline json resolve_params(const ScenarioInfo& info, const json& given) {
  if (!given.is_null() && !given.is_object()) detail::scenario_error("params must be an object");
  json out = json::object();
  for (const auto& ps : info.params) out[ps.name] = ps.default_value;
  if (given.is_object()) {
    for (const auto& [key, value] : given.items()) {
      auto it = std::find_if(info.params.begin(), info.params.end(), [&](const ParamSchema& ps) { return ps.name == key; });
      if (it == info.params.end()) detail::scenario_error("scenario '" + info.name + "' has no parameter '" + key + "'");
      if (!detail::type_matches(it->type, value)) {
        detail::scenario_error("parameter '" + key + "' of '" + info.name + "' must be of type " + it->type);
      }
      if (it->type == "network") {
        json merged = it->default_value;
        for (const auto& [k, v] : value.items()) merged[k] = v;
        out[key] = merged;
      } else {
        out[key] = value;
      }
    }
  }
  return out;
}

inline TransformPipeline build_scenario(const ScenarioContext& ctx, const ScenarioSpec& spec) {
  const ScenarioInfo& info = find_scenario(spec.name);
  json params = resolve_params(info, spec.params);
  try {
    return info.generate(ctx, params);
  } catch (const json::exception& e) {
    detail::scenario_error("parameters of '" + spec.name + "': " + e.what());
  }
}

inline ScenarioSpec scenario_spec_from_json(const json& j) {
  if (!j.is_object()) detail::scenario_error("scenario document must be an object");
  ScenarioSpec s;
  auto name = j.contains("scenario") ? j["scenario"] : j.value("name", json());
  if (!name.is_string()) detail::scenario_error("scenario document needs a 'scenario' name");
  s.name = name.get<std::string>();
  s.params = j.value("params", json::object());
  s.description = j.value("description", "");
  return s;
}

inline ordered_json to_json(const ScenarioSpec& s) {
  ordered_json out{{"scenario", s.name}, {"params", ordered_json::parse(s.params.dump())}};
  if (!s.description.empty()) out["description"] = s.description;
  return out;
}

inline ordered_json registry_to_json() {
  ordered_json out = ordered_json::array();
  for (const auto& s : registry()) {
    ordered_json params = ordered_json::array();
    for (const auto& p : s.params) {
      params.push_back(ordered_json{{"name", p.name},
                                    {"type", p.type},
                                    {"default", ordered_json::parse(p.default_value.dump())},
                                    {"description", p.description}});
    }
    out.push_back(ordered_json{{"name", s.name}, {"description", s.description}, {"params", std::move(params)}});
  }
  return out;
}

/// A request body holding either a scenario ({scenario, params}) or a raw
/// pipeline ({steps, schedule_policy}).
inline TransformPipeline pipeline_for_request(const ScenarioContext& ctx, const json& body) {
  if (body.is_object() && body.contains("steps")) return pipeline_from_json(body);
  return build_scenario(ctx, scenario_spec_from_json(body));
}

}  // namespace whatif
