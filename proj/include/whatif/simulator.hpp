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

// Frontier-driven list scheduling over a dependency graph.
//
// Each step pops one ready task u chosen by the schedule policy, starts it at
// max(progress of its lane, u's ready time), advances the lane to
// start + duration + gap, and pushes start + duration + gap into every
// child's ready time. A child becomes ready once all its parents ran.

#include <concepts>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "whatif/graph.hpp"

namespace whatif {

/// Read-only view of a simulation in progress, handed to schedule policies.
class SimulationState {
 public:
  explicit SimulationState(const DependencyGraph& graph) : graph_(&graph) {
    std::size_t n = graph.size();
    ids_.reserve(n);
    lane_of_.reserve(n);
    remaining_.reserve(n);
    ready_.reserve(n);
    std::map<LaneId, std::size_t> lane_index;
    for (const auto& [id, t] : graph.tasks()) {
      index_.emplace(id, ids_.size());
      ids_.push_back(id);
      auto [it, fresh] = lane_index.emplace(t.lane, lanes_.size());
      if (fresh) lanes_.push_back(t.lane);
      lane_of_.push_back(it->second);
      remaining_.push_back(graph.parents(id).size());
      ready_.push_back(t.ready_time);
      if (remaining_.back() == 0) frontier_.insert(id);
    }
    progress_.assign(lanes_.size(), 0);
  }

  const DependencyGraph& graph() const { return *graph_; }
  const Task& task(TaskId id) const { return graph_->task(id); }

  /// Ready tasks, ascending id.
  const std::set<TaskId>& frontier() const { return frontier_; }

  TimeNs ready_time(TaskId id) const { return ready_[index_.at(id)]; }
  std::size_t remaining_parents(TaskId id) const { return remaining_[index_.at(id)]; }

  TimeNs lane_progress(const LaneId& lane) const {
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
      if (lanes_[i] == lane) return progress_[i];
    }
    return 0;
  }

  /// max(lane progress, ready time): when `id` would start if chosen now.
  TimeNs effective_start(TaskId id) const {
    std::size_t i = index_.at(id);
    return std::max(progress_[lane_of_[i]], ready_[i]);
  }

 private:
  friend struct SimulationEngine;

  const DependencyGraph* graph_;
  std::vector<TaskId> ids_;
  std::unordered_map<TaskId, std::size_t> index_;
  std::vector<LaneId> lanes_;
  std::vector<std::size_t> lane_of_;
  std::vector<std::size_t> remaining_;
  std::vector<TimeNs> ready_;
  std::vector<TimeNs> progress_;
  std::set<TaskId> frontier_;
};

template <typename P>
concept SchedulePolicy = requires(const P& policy, const SimulationState& state) {
  { policy.choose(state) } -> std::convertible_to<TaskId>;
  { policy.name() } -> std::convertible_to<std::string_view>;
};

/// Earliest effective start; ties go to the smallest id.
struct DefaultSchedule {
  std::string_view name() const { return "default"; }

  TaskId choose(const SimulationState& state) const {
    TaskId best = 0;
    TimeNs best_time = 0;
    bool first = true;
    for (TaskId id : state.frontier()) {
      TimeNs t = state.effective_start(id);
      if (first || t < best_time) {
        best = id;
        best_time = t;
        first = false;
      }
    }
    return best;
  }
};

/// Earliest effective start; when the current pick and a tied candidate are
/// both communication tasks, the higher priority wins. Candidates are
/// visited in id order, so other ties go to the smallest id.
struct PrioritySchedule {
  std::string_view name() const { return "priority"; }

  TaskId choose(const SimulationState& state) const {
    const auto& frontier = state.frontier();
    TaskId earliest = *frontier.begin();
    TimeNs time = state.effective_start(earliest);
    for (TaskId id : frontier) {
      TimeNs this_time = state.effective_start(id);
      if (this_time < time) {
        time = this_time;
        earliest = id;
      } else if (this_time == time && id != earliest) {
        const Task& cand = state.task(id);
        const Task& cur = state.task(earliest);
        if (cand.kind == TaskKind::Comm && cur.kind == TaskKind::Comm && cand.priority > cur.priority) {
          earliest = id;
        }
      }
    }
    return earliest;
  }
};

/// Earliest effective start; ties go to the higher priority regardless of
/// task kind, then to the smallest id. Used to hold back tasks tagged with a
/// negative priority (e.g. memory prefetches) whenever other work is ready
/// at the same instant.
struct DeferringSchedule {
  std::string_view name() const { return "deferring"; }

  TaskId choose(const SimulationState& state) const {
    TaskId best = 0;
    TimeNs best_time = 0;
    std::int64_t best_prio = 0;
    bool first = true;
    for (TaskId id : state.frontier()) {
      TimeNs t = state.effective_start(id);
      std::int64_t prio = state.task(id).priority;
      if (first || t < best_time || (t == best_time && prio > best_prio)) {
        best = id;
        best_time = t;
        best_prio = prio;
        first = false;
      }
    }
    return best;
  }
};

/// Type-erased policy, used where the policy is chosen at run time.
class AnyPolicy {
 public:
  template <SchedulePolicy P>
  AnyPolicy(P policy)  // NOLINT(google-explicit-constructor)
      : name_(policy.name()),
        choose_([p = std::move(policy)](const SimulationState& s) { return static_cast<TaskId>(p.choose(s)); }) {}

  std::string_view name() const { return name_; }
  TaskId choose(const SimulationState& state) const { return choose_(state); }

 private:
  std::string name_;
  std::function<TaskId(const SimulationState&)> choose_;
};

/// Resolves a policy name ("default", "priority", "deferring"; "fifo" and
/// "vdnn" are accepted aliases).
inline AnyPolicy policy_by_name(std::string_view name) {
  if (name.empty() || name == "default" || name == "fifo") return DefaultSchedule{};
  if (name == "priority" || name == "p3") return PrioritySchedule{};
  if (name == "deferring" || name == "vdnn") return DeferringSchedule{};
  throw Error(ErrorCode::InvalidPipeline, "unknown schedule policy '" + std::string(name) + "'");
}

struct SimulationResult {
  std::map<TaskId, TimeNs> start_of;
  TimeNs makespan = 0;
  std::map<LaneId, TimeNs> lane_busy;
  std::vector<std::pair<TaskId, TimeNs>> schedule_trace;

  friend bool operator==(const SimulationResult&, const SimulationResult&) = default;
};

struct SimulationEngine {
  template <SchedulePolicy Policy>
  static SimulationResult run(const DependencyGraph& graph, const Policy& policy) {
    SimulationState state(graph);
    SimulationResult result;
    result.schedule_trace.reserve(graph.size());

    while (!state.frontier_.empty()) {
      TaskId u = policy.choose(state);
      auto fit = state.frontier_.find(u);
      if (fit == state.frontier_.end()) {
        throw std::logic_error("schedule policy chose task " + std::to_string(u) + " outside the frontier");
      }
      state.frontier_.erase(fit);

      const Task& task = graph.task(u);
      std::size_t ui = state.index_.at(u);
      std::size_t lane = state.lane_of_[ui];
      TimeNs start = std::max(state.progress_[lane], state.ready_[ui]);
      TimeNs release = start + task.duration + task.gap;
      state.progress_[lane] = release;

      for (TaskId c : graph.children(u)) {
        std::size_t ci = state.index_.at(c);
        state.ready_[ci] = std::max(state.ready_[ci], release);
        if (--state.remaining_[ci] == 0) state.frontier_.insert(c);
      }

      result.start_of.emplace(u, start);
      result.schedule_trace.emplace_back(u, start);
      result.makespan = std::max(result.makespan, start + task.duration);
      result.lane_busy[task.lane] += task.duration;
    }

    if (result.start_of.size() != graph.size()) {
      throw Error(ErrorCode::Deadlock, std::to_string(graph.size() - result.start_of.size()) +
                                           " tasks never became ready");
    }
    return result;
  }
};

/// Simulates `graph` under `policy`. The graph is not modified.
template <SchedulePolicy Policy = DefaultSchedule>
SimulationResult simulate(const DependencyGraph& graph, const Policy& policy = {}) {
  return SimulationEngine::run(graph, policy);
}

/// Signed relative improvement (baseline - variant) / baseline.
inline double speedup(const SimulationResult& baseline, const SimulationResult& variant) {
  if (baseline.makespan == 0) throw Error(ErrorCode::ZeroBaseline, "baseline makespan is zero");
  return (static_cast<double>(baseline.makespan) - static_cast<double>(variant.makespan)) /
         static_cast<double>(baseline.makespan);
}

inline ordered_json result_to_json(const SimulationResult& r) {
  ordered_json starts = ordered_json::object();
  for (const auto& [id, t] : r.start_of) starts[std::to_string(id)] = t;
  ordered_json busy = ordered_json::object();
  for (const auto& [lane, t] : r.lane_busy) busy[lane.str()] = t;
  return ordered_json{{"makespan_ns", r.makespan}, {"starts_ns", std::move(starts)}, {"lane_busy_ns", std::move(busy)}};
}

}  // namespace whatif
