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

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "whatif/core.hpp"
#include "whatif/trace.hpp"

namespace whatif {

enum class EdgeKind { LaneSeqCpu, LaneSeqGpu, LaunchCorrelation, SyncBlock, CommOrder, Injected };

inline std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::LaneSeqCpu: return "LaneSeqCpu";
    case EdgeKind::LaneSeqGpu: return "LaneSeqGpu";
    case EdgeKind::LaunchCorrelation: return "LaunchCorrelation";
    case EdgeKind::SyncBlock: return "SyncBlock";
    case EdgeKind::CommOrder: return "CommOrder";
    case EdgeKind::Injected: return "Injected";
  }
  return "?";
}

inline std::optional<EdgeKind> parse_edge_kind(std::string_view s) {
  for (auto k : {EdgeKind::LaneSeqCpu, EdgeKind::LaneSeqGpu, EdgeKind::LaunchCorrelation,
                 EdgeKind::SyncBlock, EdgeKind::CommOrder, EdgeKind::Injected}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// Edge kind that serializes consecutive tasks on a lane of class `cls`.
inline EdgeKind lane_edge_kind(LaneClass cls) {
  switch (cls) {
    case LaneClass::CpuThread: return EdgeKind::LaneSeqCpu;
    case LaneClass::GpuStream: return EdgeKind::LaneSeqGpu;
    case LaneClass::CommChannel: return EdgeKind::CommOrder;
  }
  return EdgeKind::Injected;
}

inline bool is_lane_edge(EdgeKind k) {
  return k == EdgeKind::LaneSeqCpu || k == EdgeKind::LaneSeqGpu || k == EdgeKind::CommOrder;
}

struct Task {
  TaskId id = 0;
  TaskKind kind = TaskKind::CpuOther;
  std::string name;
  LaneId lane;
  TimeNs duration = 0;
  TimeNs gap = 0;         // CPU tasks only
  TimeNs ready_time = 0;  // earliest start before any dependency is applied
  std::optional<std::uint64_t> correlation;
  std::optional<LayerTag> layer;
  std::int64_t priority = 0;
  std::optional<std::uint64_t> size_bytes;

  // Construction metadata: the original trace interval. Absent for tasks
  // created by transformations. Never read by the simulator.
  std::optional<TimeNs> trace_start;
  std::optional<TimeNs> trace_duration;

  bool on_cpu() const { return lane.cls == LaneClass::CpuThread; }
  bool on_gpu() const { return lane.cls == LaneClass::GpuStream; }
  bool on_comm() const { return lane.cls == LaneClass::CommChannel; }

  friend bool operator==(const Task&, const Task&) = default;
};

struct Edge {
  TaskId from = 0;
  TaskId to = 0;
  EdgeKind kind = EdgeKind::Injected;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Tasks plus typed edges plus the per-lane execution order.
///
/// Each ordered (from, to) pair carries at most one edge; adding a pair that
/// already exists keeps the original kind. `lane_order` lists every task of a
/// lane in sequence order.
class DependencyGraph {
 public:
  const std::map<TaskId, Task>& tasks() const { return tasks_; }
  std::size_t size() const { return tasks_.size(); }
  bool empty() const { return tasks_.empty(); }
  bool contains(TaskId id) const { return tasks_.count(id) > 0; }

  const Task& task(TaskId id) const {
    auto it = tasks_.find(id);
    if (it == tasks_.end()) throw Error(ErrorCode::UnknownTask, "no task " + std::to_string(id));
    return it->second;
  }
  Task& task(TaskId id) {
    auto it = tasks_.find(id);
    if (it == tasks_.end()) throw Error(ErrorCode::UnknownTask, "no task " + std::to_string(id));
    return it->second;
  }

  /// Smallest id strictly greater than every id ever used in this graph.
  TaskId next_id() const { return next_id_; }

  /// Adds a task at the end of its lane. Does not create lane edges.
  TaskId add_task(Task t) {
    if (tasks_.count(t.id)) throw Error(ErrorCode::SchemaViolation, "duplicate task id " + std::to_string(t.id));
    TaskId id = t.id;
    next_id_ = std::max(next_id_, id + 1);
    lanes_[t.lane].push_back(id);
    children_[id];
    parents_[id];
    tasks_.emplace(id, std::move(t));
    return id;
  }

  /// Adds a task at position `index` of its lane sequence. Does not create
  /// lane edges.
  TaskId add_task_at(Task t, std::size_t index) {
    LaneId lane = t.lane;
    TaskId id = add_task(std::move(t));
    auto& order = lanes_[lane];
    order.pop_back();
    index = std::min(index, order.size());
    order.insert(order.begin() + static_cast<std::ptrdiff_t>(index), id);
    return id;
  }

  /// Returns false when the pair already has an edge.
  bool add_edge(TaskId from, TaskId to, EdgeKind kind) {
    if (!contains(from) || !contains(to)) {
      throw Error(ErrorCode::UnknownTask, "edge endpoint missing: " + std::to_string(from) + "->" + std::to_string(to));
    }
    auto [it, fresh] = edges_.emplace(std::pair(from, to), kind);
    if (!fresh) return false;
    children_[from].insert(to);
    parents_[to].insert(from);
    return true;
  }

  bool remove_edge(TaskId from, TaskId to) {
    if (edges_.erase({from, to}) == 0) return false;
    children_[from].erase(to);
    parents_[to].erase(from);
    return true;
  }

  std::optional<EdgeKind> edge_kind(TaskId from, TaskId to) const {
    auto it = edges_.find({from, to});
    if (it == edges_.end()) return std::nullopt;
    return it->second;
  }

  /// Drops the node and every incident edge. Lane order entry is removed;
  /// no lane edges are re-linked.
  void erase_task(TaskId id) {
    const Task& t = task(id);
    for (TaskId c : children_[id]) {
      parents_[c].erase(id);
      edges_.erase({id, c});
    }
    for (TaskId p : parents_[id]) {
      children_[p].erase(id);
      edges_.erase({p, id});
    }
    auto lane_it = lanes_.find(t.lane);
    auto& order = lane_it->second;
    order.erase(std::find(order.begin(), order.end(), id));
    if (order.empty()) lanes_.erase(lane_it);
    children_.erase(id);
    parents_.erase(id);
    tasks_.erase(id);
  }

  const std::set<TaskId>& children(TaskId id) const { return adjacency(children_, id); }
  const std::set<TaskId>& parents(TaskId id) const { return adjacency(parents_, id); }

  const std::map<LaneId, std::vector<TaskId>>& lane_order() const { return lanes_; }
  const std::vector<TaskId>& lane(const LaneId& lane) const {
    static const std::vector<TaskId> kEmpty;
    auto it = lanes_.find(lane);
    return it == lanes_.end() ? kEmpty : it->second;
  }

  /// Scheduler-ordered lanes carry no lane-sequence edges: the simulator
  /// serializes their tasks through lane progress in dispatch order, so the
  /// schedule policy decides their order. A lane can only become one while
  /// it holds at most one task.
  bool is_scheduled_lane(const LaneId& lane) const { return scheduled_lanes_.count(lane) > 0; }
  const std::set<LaneId>& scheduled_lanes() const { return scheduled_lanes_; }
  void mark_scheduled_lane(const LaneId& lane) {
    if (is_scheduled_lane(lane)) return;
    if (this->lane(lane).size() > 1) {
      throw Error(ErrorCode::LaneViolation, "lane " + lane.str() + " already has a fixed task order");
    }
    scheduled_lanes_.insert(lane);
  }

  std::size_t edge_count() const { return edges_.size(); }
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edges_.size());
    for (const auto& [pair, kind] : edges_) out.push_back({pair.first, pair.second, kind});
    return out;
  }
  std::map<EdgeKind, std::size_t> edge_counts() const {
    std::map<EdgeKind, std::size_t> out;
    for (const auto& [pair, kind] : edges_) ++out[kind];
    return out;
  }

  friend bool operator==(const DependencyGraph& a, const DependencyGraph& b) {
    return a.tasks_ == b.tasks_ && a.edges_ == b.edges_ && a.lanes_ == b.lanes_ &&
           a.scheduled_lanes_ == b.scheduled_lanes_;
  }

 private:
  static const std::set<TaskId>& adjacency(const std::map<TaskId, std::set<TaskId>>& m, TaskId id) {
    auto it = m.find(id);
    if (it == m.end()) throw Error(ErrorCode::UnknownTask, "no task " + std::to_string(id));
    return it->second;
  }

  std::map<TaskId, Task> tasks_;
  std::map<std::pair<TaskId, TaskId>, EdgeKind> edges_;
  std::map<TaskId, std::set<TaskId>> children_;
  std::map<TaskId, std::set<TaskId>> parents_;
  std::map<LaneId, std::vector<TaskId>> lanes_;
  std::set<LaneId> scheduled_lanes_;
  TaskId next_id_ = 0;
};

/// Kahn's algorithm, smallest ready id first. Throws CycleDetected naming the
/// ids of one cycle.
inline std::vector<TaskId> verify_acyclic(const DependencyGraph& g) {
  std::map<TaskId, std::size_t> indegree;
  std::set<TaskId> ready;
  for (const auto& [id, t] : g.tasks()) {
    indegree[id] = g.parents(id).size();
    if (indegree[id] == 0) ready.insert(id);
  }
  std::vector<TaskId> order;
  order.reserve(g.size());
  while (!ready.empty()) {
    TaskId u = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(u);
    for (TaskId c : g.children(u)) {
      if (--indegree[c] == 0) ready.insert(c);
    }
  }
  if (order.size() == g.size()) return order;

  // Walk parent links inside the unresolved remainder until a node repeats.
  TaskId cur = 0;
  for (const auto& [id, deg] : indegree) {
    if (deg > 0) {
      cur = id;
      break;
    }
  }
  std::vector<TaskId> path;
  std::map<TaskId, std::size_t> seen;
  while (!seen.count(cur)) {
    seen[cur] = path.size();
    path.push_back(cur);
    for (TaskId p : g.parents(cur)) {
      if (indegree[p] > 0) {
        cur = p;
        break;
      }
    }
  }
  std::vector<TaskId> cycle(path.begin() + static_cast<std::ptrdiff_t>(seen[cur]), path.end());
  std::reverse(cycle.begin(), cycle.end());
  std::string ids;
  for (TaskId id : cycle) ids += (ids.empty() ? "" : " -> ") + std::to_string(id);
  throw Error(ErrorCode::CycleDetected, "cycle: " + ids);
}

/// Consecutive tasks of every fixed-order lane must be joined by a lane edge.
inline void check_lane_connectivity(const DependencyGraph& g) {
  for (const auto& [lane, order] : g.lane_order()) {
    if (g.is_scheduled_lane(lane)) continue;
    for (std::size_t i = 1; i < order.size(); ++i) {
      auto kind = g.edge_kind(order[i - 1], order[i]);
      if (!kind || !(is_lane_edge(*kind))) {
        throw Error(ErrorCode::LaneViolation, "lane " + lane.str() + " broken between " +
                                                       std::to_string(order[i - 1]) + " and " +
                                                       std::to_string(order[i]));
      }
    }
  }
}

inline ordered_json task_to_json(const Task& t) {
  ordered_json j{{"id", t.id},
                 {"kind", to_string(t.kind)},
                 {"name", t.name},
                 {"lane", t.lane.str()},
                 {"duration_ns", t.duration},
                 {"gap_ns", t.gap},
                 {"priority", t.priority}};
  j["correlation"] = t.correlation ? ordered_json(*t.correlation) : ordered_json(nullptr);
  j["layer"] = t.layer ? ordered_json(t.layer->layer) : ordered_json(nullptr);
  j["phase"] = t.layer ? ordered_json(to_string(t.layer->phase)) : ordered_json(nullptr);
  j["size_bytes"] = t.size_bytes ? ordered_json(*t.size_bytes) : ordered_json(nullptr);
  return j;
}

/// Graph export document: tasks, typed edges and lane sequences.
inline ordered_json graph_to_json(const DependencyGraph& g) {
  ordered_json tasks = ordered_json::array();
  for (const auto& [id, t] : g.tasks()) tasks.push_back(task_to_json(t));
  ordered_json edges = ordered_json::array();
  for (const auto& e : g.edges()) edges.push_back(ordered_json{{"from", e.from}, {"to", e.to}, {"kind", to_string(e.kind)}});
  ordered_json lanes = ordered_json::object();
  for (const auto& [lane, order] : g.lane_order()) lanes[lane.str()] = order;
  ordered_json scheduled = ordered_json::array();
  for (const auto& lane : g.scheduled_lanes()) scheduled.push_back(lane.str());
  return ordered_json{{"tasks", std::move(tasks)},
                      {"edges", std::move(edges)},
                      {"lanes", std::move(lanes)},
                      {"scheduled_lanes", std::move(scheduled)}};
}

}  // namespace whatif
