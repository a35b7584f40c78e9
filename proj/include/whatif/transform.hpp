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

// Graph transformation primitives: select, scale, set, insert, remove, and
// serializable pipelines of them.

#include <array>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "whatif/builder.hpp"
#include "whatif/graph.hpp"
#include "whatif/simulator.hpp"

namespace whatif {

// ---------------------------------------------------------------------------
// Selectors

/// Composable predicate over task fields.
struct Selector {
  enum class Op { All, Kind, Name, Layer, Phase, LaneClass, Ids, And, Or, Not };

  Op op = Op::All;
  TaskKind kind = TaskKind::CpuOther;
  std::string text;  // name substring or layer
  std::optional<Phase> phase;
  LaneClass lane_class = LaneClass::CpuThread;
  std::set<TaskId> ids;
  std::vector<Selector> children;

  static Selector all() { return {}; }
  static Selector by_kind(TaskKind k) {
    Selector s;
    s.op = Op::Kind;
    s.kind = k;
    return s;
  }
  static Selector by_name(std::string substring) {
    Selector s;
    s.op = Op::Name;
    s.text = std::move(substring);
    return s;
  }
  static Selector by_layer(std::string layer, std::optional<Phase> phase = std::nullopt) {
    Selector s;
    s.op = Op::Layer;
    s.text = std::move(layer);
    s.phase = phase;
    return s;
  }
  static Selector by_phase(Phase p) {
    Selector s;
    s.op = Op::Phase;
    s.phase = p;
    return s;
  }
  static Selector by_lane(LaneClass cls) {
    Selector s;
    s.op = Op::LaneClass;
    s.lane_class = cls;
    return s;
  }
  static Selector by_ids(std::set<TaskId> ids) {
    Selector s;
    s.op = Op::Ids;
    s.ids = std::move(ids);
    return s;
  }
  static Selector all_of(std::vector<Selector> parts) {
    Selector s;
    s.op = Op::And;
    s.children = std::move(parts);
    return s;
  }
  static Selector any_of(std::vector<Selector> parts) {
    Selector s;
    s.op = Op::Or;
    s.children = std::move(parts);
    return s;
  }
  static Selector negate(Selector inner) {
    Selector s;
    s.op = Op::Not;
    s.children.push_back(std::move(inner));
    return s;
  }

  bool matches(const Task& t) const {
    switch (op) {
      case Op::All: return true;
      case Op::Kind: return t.kind == kind;
      case Op::Name: return t.name.find(text) != std::string::npos;
      case Op::Layer: return t.layer && t.layer->layer == text && (!phase || t.layer->phase == *phase);
      case Op::Phase: return t.layer && t.layer->phase == *phase;
      case Op::LaneClass: return t.lane.cls == lane_class;
      case Op::Ids: return ids.count(t.id) > 0;
      case Op::And:
        return std::all_of(children.begin(), children.end(), [&](const Selector& c) { return c.matches(t); });
      case Op::Or:
        return std::any_of(children.begin(), children.end(), [&](const Selector& c) { return c.matches(t); });
      case Op::Not: return !children.front().matches(t);
    }
    return false;
  }

  friend bool operator==(const Selector&, const Selector&) = default;
};

inline std::set<TaskId> select(const DependencyGraph& graph, const Selector& sel) {
  std::set<TaskId> out;
  for (const auto& [id, t] : graph.tasks()) {
    if (sel.matches(t)) out.insert(id);
  }
  return out;
}

namespace detail {

[[noreturn]] inline void pipeline_error(const std::string& msg) { throw Error(ErrorCode::InvalidPipeline, msg); }

}  // namespace detail

/// Parses {"kind"}, {"name"}, {"layer", "phase"?}, {"lane_class"}, {"ids"},
/// {"and": [...]}, {"or": [...]}, {"not": {...}}, {"all": true}. An object
/// with several keys is the conjunction of them.
inline Selector selector_from_json(const json& j) {
  using detail::pipeline_error;
  if (j.is_null()) return Selector::all();
  if (!j.is_object()) pipeline_error("selector must be an object");
  std::vector<Selector> parts;
  for (const auto& [key, v] : j.items()) {
    if (key == "all") {
      parts.push_back(Selector::all());
    } else if (key == "kind") {
      auto k = parse_task_kind(v.get<std::string>());
      if (!k) pipeline_error("unknown kind " + v.dump());
      parts.push_back(Selector::by_kind(*k));
    } else if (key == "name") {
      parts.push_back(Selector::by_name(v.get<std::string>()));
    } else if (key == "layer") {
      std::optional<Phase> phase;
      if (j.contains("phase")) {
        phase = parse_phase(j["phase"].get<std::string>());
        if (!phase) pipeline_error("unknown phase " + j["phase"].dump());
      }
      parts.push_back(Selector::by_layer(v.get<std::string>(), phase));
    } else if (key == "phase") {
      if (!j.contains("layer")) {
        auto phase = parse_phase(v.get<std::string>());
        if (!phase) pipeline_error("unknown phase " + v.dump());
        parts.push_back(Selector::by_phase(*phase));
      }
    } else if (key == "lane_class") {
      auto c = parse_lane_class(v.get<std::string>());
      if (!c) pipeline_error("unknown lane class " + v.dump());
      parts.push_back(Selector::by_lane(*c));
    } else if (key == "ids") {
      parts.push_back(Selector::by_ids(v.get<std::set<TaskId>>()));
    } else if (key == "and" || key == "or") {
      if (!v.is_array()) pipeline_error(key + " expects an array");
      std::vector<Selector> inner;
      for (const auto& c : v) inner.push_back(selector_from_json(c));
      parts.push_back(key == "and" ? Selector::all_of(std::move(inner)) : Selector::any_of(std::move(inner)));
    } else if (key == "not") {
      parts.push_back(Selector::negate(selector_from_json(v)));
    } else {
      pipeline_error("unknown selector key '" + key + "'");
    }
  }
  if (parts.empty()) pipeline_error("empty selector");
  if (parts.size() == 1) return parts.front();
  return Selector::all_of(std::move(parts));
}

inline ordered_json to_json(const Selector& s) {
  using Op = Selector::Op;
  switch (s.op) {
    case Op::All: return ordered_json{{"all", true}};
    case Op::Kind: return ordered_json{{"kind", to_string(s.kind)}};
    case Op::Name: return ordered_json{{"name", s.text}};
    case Op::Layer: {
      ordered_json j{{"layer", s.text}};
      if (s.phase) j["phase"] = to_string(*s.phase);
      return j;
    }
    case Op::Phase: return ordered_json{{"phase", to_string(*s.phase)}};
    case Op::LaneClass: return ordered_json{{"lane_class", to_string(s.lane_class)}};
    case Op::Ids: return ordered_json{{"ids", s.ids}};
    case Op::And:
    case Op::Or: {
      ordered_json arr = ordered_json::array();
      for (const auto& c : s.children) arr.push_back(to_json(c));
      return ordered_json{{s.op == Op::And ? "and" : "or", arr}};
    }
    case Op::Not: return ordered_json{{"not", to_json(s.children.front())}};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Primitives. All mutate the graph passed in; pipelines run them on copies.

/// duration <- round_half_up(duration * factor) for the given tasks. Gaps are
/// left alone.
inline void scale_durations(DependencyGraph& graph, const std::set<TaskId>& ids, Ratio factor) {
  if (factor.den == 0) detail::pipeline_error("scale factor has a zero denominator");
  for (TaskId id : ids) {
    Task& t = graph.task(id);
    t.duration = factor.apply(t.duration);
  }
}

inline void scale_durations(DependencyGraph& graph, const Selector& sel, Ratio factor) {
  scale_durations(graph, select(graph, sel), factor);
}

/// Early: right after the last ancestor on the lane. Late: right before the
/// first descendant. Scheduled: the lane becomes scheduler-ordered (it must
/// be new or already scheduler-ordered) and the task gets no lane edges.
enum class Placement { Early, Late, Scheduled };

namespace detail {

inline std::set<TaskId> closure(const DependencyGraph& g, const std::set<TaskId>& seeds, bool upward) {
  std::set<TaskId> seen(seeds.begin(), seeds.end());
  std::deque<TaskId> todo(seeds.begin(), seeds.end());
  while (!todo.empty()) {
    TaskId u = todo.front();
    todo.pop_front();
    for (TaskId v : upward ? g.parents(u) : g.children(u)) {
      if (seen.insert(v).second) todo.push_back(v);
    }
  }
  return seen;
}

/// Makes (a, b) a lane edge, replacing any edge of another kind on that pair.
inline void set_lane_edge(DependencyGraph& g, TaskId a, TaskId b, EdgeKind kind) {
  if (g.edge_kind(a, b) == kind) return;
  g.remove_edge(a, b);
  g.add_edge(a, b, kind);
}

inline void check_anchors(const DependencyGraph& g, const std::set<TaskId>& ids) {
  for (TaskId id : ids) {
    if (!g.contains(id)) throw Error(ErrorCode::UnknownAnchor, "anchor task " + std::to_string(id) + " does not exist");
  }
}

/// Core of insert_task. `soft_after` lists extra tasks the new task should
/// follow on its lane when that is possible without a cycle.
inline TaskId insert_task_impl(DependencyGraph& g, Task task, const std::set<TaskId>& after,
                               const std::set<TaskId>& before, Placement placement,
                               const std::set<TaskId>& soft_after) {
  check_anchors(g, after);
  check_anchors(g, before);
  auto ancestors = closure(g, after, true);
  auto descendants = closure(g, before, false);
  for (TaskId a : ancestors) {
    if (descendants.count(a)) {
      throw Error(ErrorCode::WouldCreateCycle, "task " + std::to_string(a) + " would have to run both before and after '" +
                                                   task.name + "'");
    }
  }

  if (placement == Placement::Scheduled) {
    if (g.lane(task.lane).size() > 1 && !g.is_scheduled_lane(task.lane)) {
      pipeline_error("lane " + task.lane.str() + " has a fixed order and cannot become scheduler-ordered");
    }
    g.mark_scheduled_lane(task.lane);
  }
  if (g.is_scheduled_lane(task.lane)) {
    task.id = g.next_id();
    if (!task.on_cpu()) task.gap = 0;
    TaskId id = g.add_task(std::move(task));
    for (TaskId a : after) g.add_edge(a, id, EdgeKind::Injected);
    for (TaskId b : before) g.add_edge(id, b, EdgeKind::Injected);
    return id;
  }

  const auto& order = g.lane(task.lane);
  std::size_t hard_lo = 0, soft_lo = 0, hi = order.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (ancestors.count(order[i])) hard_lo = i + 1;
    if (soft_after.count(order[i])) soft_lo = i + 1;
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (descendants.count(order[i])) {
      hi = i;
      break;
    }
  }
  if (hard_lo > hi) {
    throw Error(ErrorCode::WouldCreateCycle, "no position on lane " + task.lane.str() + " fits '" + task.name + "'");
  }
  std::size_t pos = placement == Placement::Late ? hi : std::max(hard_lo, std::min(std::max(soft_lo, hard_lo), hi));

  std::optional<TaskId> pred, succ;
  if (pos > 0) pred = order[pos - 1];
  if (pos < order.size()) succ = order[pos];

  task.id = g.next_id();
  if (!task.on_cpu()) task.gap = 0;
  EdgeKind lane_kind = lane_edge_kind(task.lane.cls);
  TaskId id = g.add_task_at(std::move(task), pos);
  if (pred && succ && g.edge_kind(*pred, *succ) == lane_kind) g.remove_edge(*pred, *succ);
  if (pred) set_lane_edge(g, *pred, id, lane_kind);
  if (succ) set_lane_edge(g, id, *succ, lane_kind);
  for (TaskId a : after) g.add_edge(a, id, EdgeKind::Injected);
  for (TaskId b : before) g.add_edge(id, b, EdgeKind::Injected);
  return id;
}

}  // namespace detail

/// Inserts `task` (its id is replaced by a fresh one) after every task in
/// `after` and before every task in `before`. Early placement puts it right
/// after its last ancestor on the lane; late placement right before its
/// first descendant there.
inline TaskId insert_task(DependencyGraph& graph, Task task, const std::set<TaskId>& after,
                          const std::set<TaskId>& before, Placement placement = Placement::Early) {
  return detail::insert_task_impl(graph, std::move(task), after, before, placement, {});
}

/// Median duration of CpuApi tasks whose name contains "Launch" (0 when there
/// are none).
inline TimeNs default_launch_cost(const DependencyGraph& graph) {
  std::vector<TimeNs> d;
  for (const auto& [id, t] : graph.tasks()) {
    if (t.kind == TaskKind::CpuApi && t.name.find("Launch") != std::string::npos) d.push_back(t.duration);
  }
  if (d.empty()) return 0;
  std::sort(d.begin(), d.end());
  std::size_t n = d.size();
  if (n % 2) return d[n / 2];
  return div_half_up(static_cast<unsigned __int128>(d[n / 2 - 1]) + d[n / 2], 2);
}

struct LaunchSpec {
  std::string name = "cudaLaunchKernel";
  std::optional<TimeNs> duration;  // default_launch_cost when absent
};

/// Inserts a GPU (or comm) task together with the CPU call that launches it.
/// The call goes on `cpu_lane` after the launchers of `after` and before the
/// launchers of `before`; the task follows the call and `after`, precedes
/// `before`, and is queued on its lane behind everything launched earlier.
/// Returns (launch id, task id).
inline std::pair<TaskId, TaskId> insert_gpu_with_launch(DependencyGraph& graph, Task kernel, const LaneId& cpu_lane,
                                                        const std::set<TaskId>& after, const std::set<TaskId>& before,
                                                        const LaunchSpec& launch = {},
                                                        Placement placement = Placement::Early) {
  detail::check_anchors(graph, after);
  detail::check_anchors(graph, before);
  if (cpu_lane.cls != LaneClass::CpuThread) detail::pipeline_error("launch lane must be a CPU thread");
  if (kernel.lane.cls == LaneClass::CpuThread) detail::pipeline_error("launched task must not be on a CPU thread");

  auto cpu_side = [&](const std::set<TaskId>& ids) {
    std::set<TaskId> out;
    for (TaskId id : ids) {
      if (graph.task(id).on_cpu()) {
        out.insert(id);
      } else if (auto l = detail::launcher_of(graph, id)) {
        out.insert(*l);
      }
    }
    return out;
  };
  std::set<TaskId> launch_after = cpu_side(after);
  auto launch_ancestors = detail::closure(graph, launch_after, true);
  std::set<TaskId> launch_before;
  for (TaskId b : cpu_side(before)) {
    if (!launch_ancestors.count(b)) launch_before.insert(b);
  }

  std::uint64_t corr = 1;
  for (const auto& [id, t] : graph.tasks()) {
    if (t.correlation) corr = std::max(corr, *t.correlation + 1);
  }

  Task call;
  call.kind = TaskKind::CpuApi;
  call.name = launch.name;
  call.lane = cpu_lane;
  call.duration = launch.duration.value_or(default_launch_cost(graph));
  call.correlation = corr;
  call.layer = kernel.layer;
  Placement call_placement = placement == Placement::Scheduled ? Placement::Early : placement;
  TaskId call_id = detail::insert_task_impl(graph, std::move(call), launch_after, launch_before, call_placement, {});

  // Queue behind tasks whose launch call precedes ours.
  auto call_ancestors = detail::closure(graph, {call_id}, true);
  std::set<TaskId> soft;
  for (TaskId id : graph.lane(kernel.lane)) {
    auto l = detail::launcher_of(graph, id);
    if (l && call_ancestors.count(*l)) soft.insert(id);
  }
  std::set<TaskId> kernel_after = after;
  kernel_after.insert(call_id);
  kernel.correlation = corr;
  TaskId kernel_id = detail::insert_task_impl(graph, std::move(kernel), kernel_after, before, placement, soft);
  return {call_id, kernel_id};
}

/// Removes a task. Every parent gets an edge to every child, the lane is
/// re-linked around it, and its gap disappears with it.
inline void remove_task(DependencyGraph& graph, TaskId id) {
  const Task& t = graph.task(id);
  const auto& order = graph.lane(t.lane);
  auto it = std::find(order.begin(), order.end(), id);
  std::optional<TaskId> pred, succ;
  if (it != order.begin()) pred = *(it - 1);
  if (it + 1 != order.end()) succ = *(it + 1);
  EdgeKind lane_kind = lane_edge_kind(t.lane.cls);
  std::vector<TaskId> parents(graph.parents(id).begin(), graph.parents(id).end());
  std::vector<TaskId> children(graph.children(id).begin(), graph.children(id).end());
  bool fixed_order = !graph.is_scheduled_lane(t.lane);
  graph.erase_task(id);
  if (fixed_order && pred && succ) detail::set_lane_edge(graph, *pred, *succ, lane_kind);
  for (TaskId p : parents) {
    for (TaskId c : children) graph.add_edge(p, c, EdgeKind::Injected);
  }
}

inline void remove_tasks(DependencyGraph& graph, const std::set<TaskId>& ids) {
  for (TaskId id : ids) remove_task(graph, id);
}

// ---------------------------------------------------------------------------
// Pipelines

struct PipelineStep {
  std::string op;  // scale | set | remove | insert | insert_gpu
  Selector selector;
  json params = json::object();

  friend bool operator==(const PipelineStep& a, const PipelineStep& b) {
    return a.op == b.op && a.selector == b.selector && a.params == b.params;
  }
};

struct TransformPipeline {
  std::vector<PipelineStep> steps;
  std::string schedule_policy = "default";

  friend bool operator==(const TransformPipeline&, const TransformPipeline&) = default;
};

namespace detail {

inline Ratio parse_ratio(const json& v, const std::string& what) {
  if (v.is_number_unsigned() || v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) pipeline_error(what + " must not be negative");
    return Ratio::of(v.get<std::uint64_t>(), 1);
  }
  if (v.is_number_float()) {
    if (!(v.get<double>() >= 0)) pipeline_error(what + " must not be negative");
    return Ratio::from_double(v.get<double>());
  }
  if (v.is_string()) {
    auto s = v.get<std::string>();
    auto slash = s.find('/');
    try {
      if (slash == std::string::npos) return Ratio::from_double(std::stold(s));
      std::uint64_t n = std::stoull(s.substr(0, slash));
      std::uint64_t d = std::stoull(s.substr(slash + 1));
      if (d == 0) pipeline_error(what + " has a zero denominator");
      return Ratio::of(n, d);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      pipeline_error(what + " is not a number or fraction: " + s);
    }
  }
  pipeline_error(what + " must be a number or \"num/den\"");
}

inline ordered_json ratio_to_json(Ratio r) {
  if (r.den == 1) return r.num;
  return std::to_string(r.num) + "/" + std::to_string(r.den);
}

/// Time given as "<field>_us" (microseconds) or "<field>_ns".
inline std::optional<TimeNs> param_time(const json& p, const std::string& field) {
  if (auto it = p.find(field + "_ns"); it != p.end()) {
    if (!it->is_number() || it->get<double>() < 0) pipeline_error(field + "_ns must be a non-negative number");
    return it->get<TimeNs>();
  }
  if (auto it = p.find(field + "_us"); it != p.end()) {
    if (!it->is_number() || it->get<double>() < 0) pipeline_error(field + "_us must be a non-negative number");
    return it->is_number_float() ? us_to_ns(it->get<double>()) : it->get<TimeNs>() * kNsPerUs;
  }
  return std::nullopt;
}

inline Task task_from_params(const json& j) {
  if (!j.is_object()) pipeline_error("insert needs a 'task' object");
  Task t;
  t.name = j.value("name", "inserted");
  auto kind = parse_task_kind(j.value("kind", "GpuKernel"));
  if (!kind) pipeline_error("unknown task kind " + j.value("kind", ""));
  t.kind = *kind;
  auto lane = LaneId::parse(j.value("lane", ""));
  if (!lane) pipeline_error("task '" + t.name + "' needs a lane");
  t.lane = *lane;
  if (!lane_accepts(t.lane.cls, t.kind)) pipeline_error("task '" + t.name + "' cannot run on lane " + t.lane.str());
  t.duration = param_time(j, "duration").value_or(0);
  t.gap = param_time(j, "gap").value_or(0);
  t.priority = j.value("priority", std::int64_t{0});
  if (j.contains("size_bytes")) t.size_bytes = j["size_bytes"].get<std::uint64_t>();
  if (j.contains("layer")) {
    auto phase = parse_phase(j.value("phase", "Forward"));
    if (!phase) pipeline_error("unknown phase");
    t.layer = LayerTag{j["layer"].get<std::string>(), *phase};
  }
  return t;
}

inline Placement parse_placement(const json& p) {
  std::string s = p.value("placement", "early");
  if (s == "early") return Placement::Early;
  if (s == "late") return Placement::Late;
  if (s == "scheduled") return Placement::Scheduled;
  pipeline_error("placement must be 'early', 'late' or 'scheduled'");
}

inline std::set<TaskId> anchor_set(const DependencyGraph& g, const json& p, const char* field) {
  auto it = p.find(field);
  if (it == p.end() || it->is_null()) return {};
  if (it->is_array()) {
    auto ids = it->get<std::set<TaskId>>();
    check_anchors(g, ids);
    return ids;
  }
  return select(g, selector_from_json(*it));
}

}  // namespace detail

/// Applies one step in place; returns the ids of tasks it created.
inline std::vector<TaskId> apply_step(DependencyGraph& graph, const PipelineStep& step) {
  using detail::pipeline_error;
  const json& p = step.params;
  if (step.op == "scale") {
    if (!p.contains("factor")) pipeline_error("scale needs 'factor'");
    scale_durations(graph, step.selector, detail::parse_ratio(p["factor"], "factor"));
    return {};
  }
  if (step.op == "set") {
    auto duration = detail::param_time(p, "duration");
    auto gap = detail::param_time(p, "gap");
    for (TaskId id : select(graph, step.selector)) {
      Task& t = graph.task(id);
      if (duration) t.duration = *duration;
      if (gap && t.on_cpu()) t.gap = *gap;
      if (p.contains("priority")) t.priority = p["priority"].get<std::int64_t>();
      if (p.contains("name")) t.name = p["name"].get<std::string>();
      if (p.contains("size_bytes")) t.size_bytes = p["size_bytes"].get<std::uint64_t>();
    }
    return {};
  }
  if (step.op == "remove") {
    remove_tasks(graph, select(graph, step.selector));
    return {};
  }
  if (step.op == "insert") {
    Task t = detail::task_from_params(p.value("task", json()));
    auto after = detail::anchor_set(graph, p, "after");
    auto before = detail::anchor_set(graph, p, "before");
    return {insert_task(graph, std::move(t), after, before, detail::parse_placement(p))};
  }
  if (step.op == "insert_gpu") {
    Task t = detail::task_from_params(p.value("task", json()));
    auto cpu_lane = LaneId::parse(p.value("cpu_lane", "cpu:0"));
    if (!cpu_lane) pipeline_error("bad cpu_lane");
    LaunchSpec launch;
    if (p.contains("launch")) {
      launch.name = p["launch"].value("name", launch.name);
      launch.duration = detail::param_time(p["launch"], "duration");
    }
    auto after = detail::anchor_set(graph, p, "after");
    auto before = detail::anchor_set(graph, p, "before");
    auto [l, k] = insert_gpu_with_launch(graph, std::move(t), *cpu_lane, after, before, launch,
                                         detail::parse_placement(p));
    return {l, k};
  }
  pipeline_error("unknown op '" + step.op + "'");
}

inline void check_graph_invariants(const DependencyGraph& g) {
  try {
    verify_acyclic(g);
  } catch (const Error& e) {
    throw Error(ErrorCode::AcyclicityViolated, e.detail());
  }
  check_lane_connectivity(g);
}

/// Applies every step in order to a copy of `graph`.
inline DependencyGraph apply_pipeline(const DependencyGraph& graph, const TransformPipeline& pipeline) {
  DependencyGraph out = graph;
  for (const auto& step : pipeline.steps) {
    apply_step(out, step);
    check_graph_invariants(out);
  }
  return out;
}

inline constexpr std::array<std::string_view, 5> kPipelineOps = {"scale", "set", "remove", "insert", "insert_gpu"};

inline TransformPipeline pipeline_from_json(const json& j) {
  using detail::pipeline_error;
  if (!j.is_object()) pipeline_error("pipeline must be an object");
  TransformPipeline p;
  for (const auto& sj : j.value("steps", json::array())) {
    PipelineStep s;
    if (!sj.is_object() || !sj.contains("op") || !sj["op"].is_string()) pipeline_error("step without a string 'op'");
    s.op = sj["op"].get<std::string>();
    if (std::find(kPipelineOps.begin(), kPipelineOps.end(), s.op) == kPipelineOps.end()) {
      pipeline_error("unknown op '" + s.op + "'");
    }
    s.selector = selector_from_json(sj.value("selector", json()));
    s.params = sj.value("params", json::object());
    p.steps.push_back(std::move(s));
  }
  if (auto it = j.find("schedule_policy"); it != j.end() && !it->is_null()) {
    p.schedule_policy = it->is_string() ? it->get<std::string>() : it->value("name", "default");
  }
  (void)policy_by_name(p.schedule_policy);
  return p;
}

inline ordered_json to_json(const TransformPipeline& p) {
  ordered_json steps = ordered_json::array();
  for (const auto& s : p.steps) {
    steps.push_back(ordered_json{{"op", s.op}, {"selector", to_json(s.selector)},
                                 {"params", ordered_json::parse(s.params.dump())}});
  }
  return ordered_json{{"steps", std::move(steps)}, {"schedule_policy", ordered_json{{"name", p.schedule_policy}}}};
}

/// Records steps while applying them to a scratch copy, so later steps can
/// refer to tasks created by earlier ones. Ids are deterministic, so the
/// recorded pipeline replays identically on the original graph.
class PipelineRecorder {
 public:
  explicit PipelineRecorder(const DependencyGraph& graph) : scratch_(graph) {}

  std::vector<TaskId> add(PipelineStep step) {
    auto created = apply_step(scratch_, step);
    pipeline_.steps.push_back(std::move(step));
    return created;
  }

  std::vector<TaskId> add(std::string op, Selector sel, json params = json::object()) {
    return add(PipelineStep{std::move(op), std::move(sel), std::move(params)});
  }

  const DependencyGraph& graph() const { return scratch_; }
  TransformPipeline& pipeline() { return pipeline_; }
  TransformPipeline take() { return std::move(pipeline_); }

 private:
  DependencyGraph scratch_;
  TransformPipeline pipeline_;
};

}  // namespace whatif
