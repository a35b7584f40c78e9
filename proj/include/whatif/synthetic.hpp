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

// Synthetic traces with analytically known timing.
//
// A SyntheticSpec lists, per lane, a chain of tasks with durations and gaps,
// plus launch pairs (CPU call -> GPU/comm task) and blocking syncs. The
// generator plays the CPU threads forward in time, so every timestamp it
// writes is consistent with the dependency rules the graph builder
// re-derives. The makespan it returns is the longest weighted path over the
// implied graph, computed separately from the timestamps.

#include <map>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "whatif/trace.hpp"

namespace whatif {

struct SyntheticTask {
  std::string name;
  TaskKind kind = TaskKind::CpuOther;
  TimeNs duration = 0;
  TimeNs gap = 0;     // CPU tasks only; ignored on a thread's last task
  TimeNs jitter = 0;  // duration += uniform integer in [0, jitter]
  std::optional<std::uint64_t> size_bytes;
};

struct SyntheticLane {
  LaneId lane;
  std::vector<SyntheticTask> tasks;
};

struct SyntheticMarker {
  std::string layer;
  Phase phase = Phase::Forward;
  std::vector<std::string> tasks;  // CPU tasks on one thread
};

struct SyntheticSpec {
  std::vector<SyntheticLane> lanes;
  std::vector<std::pair<std::string, std::string>> launches;  // (cpu call, launched task)
  std::map<std::string, std::optional<LaneId>> syncs;        // sync task -> awaited stream
  std::vector<SyntheticMarker> markers;
  std::optional<GradientBucketMap> gradient_buckets;
  std::map<std::string, std::string> metadata;
};

namespace detail {

[[noreturn]] inline void spec_error(const std::string& msg) { throw Error(ErrorCode::InvalidSpec, msg); }

inline TimeNs spec_time(const json& obj, const char* field, TimeNs fallback, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) spec_error(where + ": '" + field + "' must be a number");
  if (it->get<double>() < 0) spec_error(where + ": negative " + field);
  return it->is_number_float() ? us_to_ns(it->get<double>()) : static_cast<TimeNs>(it->get<std::int64_t>()) * kNsPerUs;
}

}  // namespace detail

namespace detail {

inline SyntheticSpec synthetic_spec_from_json_unchecked(const json& j) {
  using detail::spec_error;
  if (!j.is_object()) spec_error("spec must be an object");
  SyntheticSpec spec;
  auto lanes = j.find("lanes");
  if (lanes == j.end() || !lanes->is_array()) spec_error("spec needs a 'lanes' array");
  for (const auto& lj : *lanes) {
    SyntheticLane lane;
    auto lane_id = LaneId::parse(lj.value("lane", ""));
    if (!lane_id) spec_error("bad lane '" + lj.value("lane", "") + "'");
    lane.lane = *lane_id;
    for (const auto& tj : lj.value("tasks", json::array())) {
      SyntheticTask t;
      t.name = tj.value("name", "");
      std::string where = "task '" + t.name + "'";
      auto kind = parse_task_kind(tj.value("kind", ""));
      if (!kind) spec_error(where + ": unknown kind");
      t.kind = *kind;
      t.duration = detail::spec_time(tj, "duration", 0, where);
      t.gap = detail::spec_time(tj, "gap", 0, where);
      t.jitter = detail::spec_time(tj, "jitter", 0, where);
      if (tj.contains("size_bytes")) t.size_bytes = tj["size_bytes"].get<std::uint64_t>();
      lane.tasks.push_back(std::move(t));
    }
    spec.lanes.push_back(std::move(lane));
  }
  for (const auto& l : j.value("launches", json::array())) {
    spec.launches.emplace_back(l.value("launch", ""), l.value("task", ""));
  }
  for (const auto& s : j.value("syncs", json::array())) {
    std::optional<LaneId> target;
    if (s.contains("target") && !s["target"].is_null()) {
      target = LaneId::parse(s["target"].get<std::string>());
      if (!target) spec_error("bad sync target");
    }
    spec.syncs[s.value("sync", "")] = target;
  }
  for (const auto& m : j.value("layer_markers", json::array())) {
    SyntheticMarker marker;
    marker.layer = m.value("layer", "");
    auto phase = parse_phase(m.value("phase", ""));
    if (!phase) spec_error("marker " + marker.layer + ": unknown phase");
    marker.phase = *phase;
    marker.tasks = m.value("tasks", std::vector<std::string>{});
    spec.markers.push_back(std::move(marker));
  }
  if (j.contains("gradient_buckets")) {
    try {
      spec.gradient_buckets = parse_gradient_buckets(j["gradient_buckets"]);
    } catch (const Error& e) {
      spec_error(e.detail());
    }
  }
  json metadata = j.value("metadata", json::object());
  for (const auto& [k, v] : metadata.items()) {
    spec.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return spec;
}

}  // namespace detail

inline SyntheticSpec synthetic_spec_from_json(const json& j) {
  try {
    return detail::synthetic_spec_from_json_unchecked(j);
  } catch (const json::exception& e) {
    detail::spec_error(std::string("spec: ") + e.what());
  }
}

inline ordered_json to_json(const SyntheticSpec& spec) {
  ordered_json lanes = ordered_json::array();
  for (const auto& lane : spec.lanes) {
    ordered_json tasks = ordered_json::array();
    for (const auto& t : lane.tasks) {
      ordered_json tj{{"name", t.name},
                      {"kind", to_string(t.kind)},
                      {"duration", detail::time_to_ojson(t.duration)}};
      if (t.gap) tj["gap"] = detail::time_to_ojson(t.gap);
      if (t.jitter) tj["jitter"] = detail::time_to_ojson(t.jitter);
      if (t.size_bytes) tj["size_bytes"] = *t.size_bytes;
      tasks.push_back(std::move(tj));
    }
    lanes.push_back(ordered_json{{"lane", lane.lane.str()}, {"tasks", std::move(tasks)}});
  }
  ordered_json launches = ordered_json::array();
  for (const auto& [l, t] : spec.launches) launches.push_back(ordered_json{{"launch", l}, {"task", t}});
  ordered_json syncs = ordered_json::array();
  for (const auto& [s, target] : spec.syncs) {
    ordered_json sj{{"sync", s}};
    if (target) sj["target"] = target->str();
    syncs.push_back(std::move(sj));
  }
  ordered_json out{{"lanes", std::move(lanes)}, {"launches", std::move(launches)}, {"syncs", std::move(syncs)}};
  if (!spec.markers.empty()) {
    ordered_json markers = ordered_json::array();
    for (const auto& m : spec.markers) {
      markers.push_back(ordered_json{{"layer", m.layer}, {"phase", to_string(m.phase)}, {"tasks", m.tasks}});
    }
    out["layer_markers"] = std::move(markers);
  }
  if (spec.gradient_buckets) out["gradient_buckets"] = to_json(*spec.gradient_buckets);
  if (!spec.metadata.empty()) {
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : spec.metadata) meta[k] = v;
    out["metadata"] = std::move(meta);
  }
  return out;
}

struct SyntheticTrace {
  TraceDocument trace;
  TimeNs makespan = 0;
};

/// Generates a trace whose simulated makespan is known in closed form.
/// Deterministic in (spec, seed); the seed only matters when some task has
/// a non-zero jitter.
inline SyntheticTrace generate_synthetic_trace(const SyntheticSpec& spec, std::uint64_t seed) {
  using detail::spec_error;

  struct Node {
    const SyntheticTask* def = nullptr;
    LaneId lane;
    TimeNs duration = 0;  // intrinsic, after jitter
    TimeNs gap = 0;
    std::optional<std::size_t> launches;     // index of launched node
    std::optional<std::size_t> launched_by;  // index of launching node
    bool is_sync = false;
    std::optional<LaneId> sync_target;
    bool blocking_launch = false;  // launches a memcpy_dtoh copy
    // Filled during generation.
    TaskId id = 0;
    TimeNs trace_start = 0;
    TimeNs trace_duration = 0;
    TimeNs start = 0;  // when the intrinsic part begins
  };

  std::vector<Node> nodes;
  std::map<std::string, std::size_t> by_name;
  std::mt19937_64 rng(seed);
  for (const auto& lane : spec.lanes) {
    for (const auto& t : lane.tasks) {
      if (!lane_accepts(lane.lane.cls, t.kind)) {
        spec_error("task '" + t.name + "' of kind " + std::string(to_string(t.kind)) + " on lane " + lane.lane.str());
      }
      if (t.gap && lane.lane.cls != LaneClass::CpuThread) spec_error("task '" + t.name + "': gaps exist on CPU lanes only");
      if (!by_name.emplace(t.name, nodes.size()).second) spec_error("duplicate task name '" + t.name + "'");
      Node n;
      n.def = &t;
      n.lane = lane.lane;
      n.duration = t.duration;
      n.gap = &t == &lane.tasks.back() ? 0 : t.gap;
      if (t.jitter) n.duration += rng() % (t.jitter + 1);
      nodes.push_back(std::move(n));
    }
  }
  auto lookup = [&](const std::string& name, const char* role) {
    auto it = by_name.find(name);
    if (it == by_name.end()) spec_error(std::string("dangling ") + role + " '" + name + "'");
    return it->second;
  };
  for (const auto& [launch, target] : spec.launches) {
    std::size_t l = lookup(launch, "launch"), k = lookup(target, "launch target");
    if (nodes[l].lane.cls != LaneClass::CpuThread) spec_error("launch '" + launch + "' is not a CPU task");
    if (nodes[k].lane.cls == LaneClass::CpuThread) spec_error("launch target '" + target + "' is a CPU task");
    if (nodes[l].launches || nodes[k].launched_by) spec_error("launch pair '" + launch + "' -> '" + target + "' reuses a task");
    if (nodes[l].def->kind == TaskKind::Sync) spec_error("sync '" + launch + "' cannot launch work");
    nodes[l].launches = k;
    nodes[k].launched_by = l;
  }
  for (auto& n : nodes) {
    if (n.lane.cls != LaneClass::CpuThread && !n.launched_by) spec_error("task '" + n.def->name + "' has no launch");
    if (n.def->kind == TaskKind::Sync) n.is_sync = true;
  }
  for (const auto& [name, target] : spec.syncs) {
    std::size_t s = lookup(name, "sync");
    if (!nodes[s].is_sync) spec_error("'" + name + "' is not a Sync task");
    if (target && target->cls != LaneClass::GpuStream) spec_error("sync target must be a GPU stream");
    nodes[s].sync_target = target;
  }
  for (auto& n : nodes) {
    if (n.launches) {
      const Node& k = nodes[*n.launches];
      n.blocking_launch = k.def->kind == TaskKind::GpuMemcpy && k.def->name.rfind("memcpy_dtoh", 0) == 0;
    }
  }

  // Per CPU thread, the queue of node indices in declared order.
  std::vector<std::vector<std::size_t>> threads;
  std::set<LaneId> gpu_streams;
  {
    std::size_t idx = 0;
    for (const auto& lane : spec.lanes) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < lane.tasks.size(); ++i) members.push_back(idx++);
      if (lane.lane.cls == LaneClass::CpuThread) threads.push_back(std::move(members));
      if (lane.lane.cls == LaneClass::GpuStream) gpu_streams.insert(lane.lane);
    }
  }

  // Execution order per non-CPU lane, in launch order.
  std::map<LaneId, std::vector<std::size_t>> device_order;
  std::map<LaneId, TimeNs> device_free;
  std::vector<std::size_t> emission;  // node indices in id order
  std::vector<std::vector<std::size_t>> awaited(nodes.size());

  using Pending = std::tuple<TimeNs, std::size_t, std::size_t>;  // issue time, thread, position
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> heap;
  for (std::size_t t = 0; t < threads.size(); ++t) {
    if (!threads[t].empty()) heap.emplace(0, t, 0);
  }

  auto latest_launched_before = [&](const LaneId& stream, TimeNs t) -> std::optional<std::size_t> {
    auto it = device_order.find(stream);
    if (it == device_order.end()) return std::nullopt;
    const auto& order = it->second;
    for (auto r = order.rbegin(); r != order.rend(); ++r) {
      if (nodes[*nodes[*r].launched_by].trace_start < t) return *r;
    }
    return std::nullopt;
  };

  while (!heap.empty()) {
    auto [issue, thread, pos] = heap.top();
    heap.pop();
    std::size_t xi = threads[thread][pos];
    Node& x = nodes[xi];
    x.id = emission.size();
    emission.push_back(xi);
    x.trace_start = issue;

    TimeNs released = issue;
    if (x.is_sync || x.blocking_launch) {
      std::vector<LaneId> streams;
      if (x.is_sync) {
        if (x.sync_target) {
          streams.push_back(*x.sync_target);
        } else {
          streams.assign(gpu_streams.begin(), gpu_streams.end());
        }
      } else {
        streams.push_back(nodes[*x.launches].lane);
      }
      for (const auto& s : streams) {
        if (auto src = latest_launched_before(s, issue)) {
          awaited[xi].push_back(*src);
          released = std::max(released, nodes[*src].trace_start + nodes[*src].trace_duration);
        }
      }
    }
    x.start = released;
    x.trace_duration = (released - issue) + x.duration;
    TimeNs release = x.start + x.duration + x.gap;

    if (x.launches) {
      Node& k = nodes[*x.launches];
      k.id = emission.size();
      emission.push_back(*x.launches);
      TimeNs start = std::max(release, device_free[k.lane]);
      k.start = start;
      k.trace_start = start;
      k.trace_duration = k.duration;
      device_free[k.lane] = start + k.duration;
      device_order[k.lane].push_back(*x.launches);
    }
    if (pos + 1 < threads[thread].size()) heap.emplace(release, thread, pos + 1);
  }

  // Longest weighted path over the implied graph; ids are a topological order.
  std::vector<std::vector<std::size_t>> parents(nodes.size());
  for (const auto& order : threads) {
    for (std::size_t i = 1; i < order.size(); ++i) parents[order[i]].push_back(order[i - 1]);
  }
  for (const auto& [lane, order] : device_order) {
    for (std::size_t i = 1; i < order.size(); ++i) parents[order[i]].push_back(order[i - 1]);
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].launched_by) parents[i].push_back(*nodes[i].launched_by);
    for (std::size_t src : awaited[i]) parents[i].push_back(src);
  }
  std::vector<TimeNs> dist(nodes.size(), 0);
  TimeNs makespan = 0;
  for (std::size_t ni : emission) {
    for (std::size_t p : parents[ni]) {
      dist[ni] = std::max(dist[ni], dist[p] + nodes[p].duration + nodes[p].gap);
    }
    makespan = std::max(makespan, dist[ni] + nodes[ni].duration);
  }

  SyntheticTrace out;
  std::uint64_t next_corr = 1;
  std::vector<std::optional<std::uint64_t>> corr(nodes.size());
  for (std::size_t ni : emission) {
    if (nodes[ni].launches) {
      corr[ni] = next_corr;
      corr[*nodes[ni].launches] = next_corr++;
    }
  }
  for (std::size_t ni : emission) {
    const Node& n = nodes[ni];
    TraceEvent e;
    e.id = n.id;
    e.kind = n.def->kind;
    e.name = n.def->name;
    e.lane = n.lane;
    e.start = n.trace_start;
    e.duration = n.trace_duration;
    e.correlation = corr[ni];
    e.size_bytes = n.def->size_bytes;
    if (n.is_sync) e.sync_target = n.sync_target;
    out.trace.events.push_back(std::move(e));
  }
  for (const auto& m : spec.markers) {
    if (m.tasks.empty()) spec_error("marker " + m.layer + " lists no tasks");
    LayerMarker marker;
    marker.layer = m.layer;
    marker.phase = m.phase;
    bool first = true;
    for (const auto& name : m.tasks) {
      const Node& n = nodes[lookup(name, "marker task")];
      if (n.lane.cls != LaneClass::CpuThread) spec_error("marker task '" + name + "' is not a CPU task");
      if (first) {
        marker.cpu_lane = n.lane;
        marker.start = n.trace_start;
        marker.end = n.trace_start + n.trace_duration;
        first = false;
      } else {
        if (n.lane != marker.cpu_lane) spec_error("marker " + m.layer + " spans several threads");
        marker.start = std::min(marker.start, n.trace_start);
        marker.end = std::max(marker.end, n.trace_start + n.trace_duration);
      }
    }
    if (marker.end <= marker.start) marker.end = marker.start + 1;
    out.trace.layer_markers.push_back(std::move(marker));
  }
  out.trace.gradient_buckets = spec.gradient_buckets;
  out.trace.metadata = spec.metadata;
  out.makespan = makespan;
  validate_trace(out.trace);
  return out;
}

}  // namespace whatif
