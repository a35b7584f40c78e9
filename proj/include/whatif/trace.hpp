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

// Trace document schema: parsing, validation and printing.
//
// Documents are JSON objects. Times are written in (fractional) microseconds
// and stored as integer nanoseconds, rounded half-up. Unknown fields are
// ignored.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "whatif/core.hpp"

namespace whatif {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct TraceEvent {
  TaskId id = 0;
  TaskKind kind = TaskKind::CpuOther;
  std::string name;
  LaneId lane;
  TimeNs start = 0;
  TimeNs duration = 0;
  std::optional<std::uint64_t> correlation;
  std::optional<std::uint64_t> size_bytes;
  // Sync events only: awaited GPU stream, absent means every stream.
  std::optional<LaneId> sync_target;

  TimeNs end() const { return start + duration; }

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct LayerMarker {
  std::string layer;
  Phase phase = Phase::Forward;
  LaneId cpu_lane;
  TimeNs start = 0;
  TimeNs end = 0;

  friend bool operator==(const LayerMarker&, const LayerMarker&) = default;
};

struct GradientBucketMap {
  std::map<std::string, std::uint64_t> bucket_of_layer;
  std::map<std::uint64_t, std::uint64_t> bucket_size_bytes;

  friend bool operator==(const GradientBucketMap&, const GradientBucketMap&) = default;
};

struct TraceDocument {
  int schema_version = 1;
  std::vector<TraceEvent> events;
  std::vector<LayerMarker> layer_markers;
  std::optional<GradientBucketMap> gradient_buckets;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const TraceDocument&, const TraceDocument&) = default;
};

/// True when a GpuMemcpy event is a device-to-host copy that blocks its
/// launching CPU call.
inline bool is_blocking_dtoh(const TraceEvent& e) {
  return e.kind == TaskKind::GpuMemcpy && e.name.rfind("memcpy_dtoh", 0) == 0;
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& msg) {
  throw Error(ErrorCode::SchemaViolation, msg);
}

inline const json& require(const json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end()) schema_error(where + ": missing field '" + field + "'");
  return *it;
}

inline std::string require_string(const json& obj, const char* field, const std::string& where) {
  const auto& v = require(obj, field, where);
  if (!v.is_string()) schema_error(where + ": field '" + field + "' must be a string");
  return v.get<std::string>();
}

inline std::uint64_t as_uint(const json& v, const std::string& what) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    auto i = v.get<std::int64_t>();
    if (i < 0) schema_error(what + " must be non-negative");
    return static_cast<std::uint64_t>(i);
  }
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d < 0 || std::floor(d) != d) schema_error(what + " must be a non-negative integer");
    return static_cast<std::uint64_t>(d);
  }
  schema_error(what + " must be a number");
}

/// Parses a microsecond quantity into nanoseconds (half-up).
inline TimeNs as_time_us(const json& v, const std::string& what) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>() * kNsPerUs;
  if (v.is_number_integer()) {
    auto i = v.get<std::int64_t>();
    if (i < 0) schema_error(what + " must be >= 0");
    return static_cast<TimeNs>(i) * kNsPerUs;
  }
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (!(d >= 0) || !std::isfinite(d)) schema_error(what + " must be >= 0");
    return us_to_ns(d);
  }
  schema_error(what + " must be a number");
}

inline LaneId as_lane(const json& v, const std::string& what) {
  if (!v.is_string()) schema_error(what + " must be a lane string");
  auto lane = LaneId::parse(v.get<std::string>());
  if (!lane) schema_error(what + ": bad lane '" + v.get<std::string>() + "'");
  return *lane;
}

/// Microseconds as the shortest JSON number that parses back to the same ns.
inline json time_to_json(TimeNs ns) {
  if (ns % kNsPerUs == 0) return json(ns / kNsPerUs);
  return json(static_cast<double>(ns) / 1000.0);
}

inline ordered_json time_to_ojson(TimeNs ns) {
  if (ns % kNsPerUs == 0) return ordered_json(ns / kNsPerUs);
  return ordered_json(static_cast<double>(ns) / 1000.0);
}

}  // namespace detail

/// Checks every TraceDocument invariant. Throws SchemaViolation or
/// OverlapViolation.
inline void validate_trace(const TraceDocument& doc) {
  using detail::schema_error;
  if (doc.schema_version != 1) schema_error("schema_version must be 1");

  std::set<TaskId> ids;
  std::map<std::uint64_t, TaskId> launch_by_corr;
  std::map<LaneId, std::vector<const TraceEvent*>> by_lane;
  for (const auto& e : doc.events) {
    std::string where = "event " + std::to_string(e.id);
    if (!ids.insert(e.id).second) schema_error("duplicate event id " + std::to_string(e.id));
    if (!lane_accepts(e.lane.cls, e.kind)) {
      schema_error(where + ": kind " + std::string(to_string(e.kind)) + " cannot run on lane " +
                   e.lane.str());
    }
    if (is_gpu_kind(e.kind) && !e.correlation) schema_error(where + ": GPU event needs correlation");
    if (e.sync_target) {
      if (e.kind != TaskKind::Sync) schema_error(where + ": sync_target on non-Sync event");
      if (e.sync_target->cls != LaneClass::GpuStream) schema_error(where + ": sync_target must be a GPU stream");
    }
    if (e.lane.cls == LaneClass::CpuThread && e.correlation) {
      auto [it, fresh] = launch_by_corr.emplace(*e.correlation, e.id);
      if (!fresh) {
        schema_error("events " + std::to_string(it->second) + " and " + std::to_string(e.id) +
                     " both launch correlation " + std::to_string(*e.correlation));
      }
    }
    by_lane[e.lane].push_back(&e);
  }

  for (auto& [lane, events] : by_lane) {
    std::sort(events.begin(), events.end(), [](const TraceEvent* a, const TraceEvent* b) {
      return std::pair(a->start, a->end()) < std::pair(b->start, b->end());
    });
    const TraceEvent* reach = nullptr;  // event with the furthest end so far
    for (const auto* e : events) {
      if (reach && reach->end() > e->start && e->end() > reach->start) {
        throw Error(ErrorCode::OverlapViolation,
                    "events " + std::to_string(reach->id) + " and " + std::to_string(e->id) +
                        " overlap on lane " + lane.str());
      }
      if (!reach || e->end() > reach->end()) reach = e;
    }
  }

  std::map<std::tuple<std::string, Phase, LaneId>, std::vector<const LayerMarker*>> markers;
  for (const auto& m : doc.layer_markers) {
    if (m.cpu_lane.cls != LaneClass::CpuThread) schema_error("marker " + m.layer + ": lane must be a CPU thread");
    if (!(m.start < m.end)) schema_error("marker " + m.layer + ": start must precede end");
    markers[{m.layer, m.phase, m.cpu_lane}].push_back(&m);
  }
  for (auto& [key, list] : markers) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i - 1]->end > list[i]->start) schema_error("overlapping markers for layer " + std::get<0>(key));
    }
  }

  if (doc.gradient_buckets) {
    for (const auto& [layer, bucket] : doc.gradient_buckets->bucket_of_layer) {
      if (!doc.gradient_buckets->bucket_size_bytes.count(bucket)) {
        schema_error("layer " + layer + " references unknown bucket " + std::to_string(bucket));
      }
    }
    for (const auto& [bucket, bytes] : doc.gradient_buckets->bucket_size_bytes) {
      if (bytes == 0) schema_error("bucket " + std::to_string(bucket) + " has zero size");
    }
  }
}

inline GradientBucketMap parse_gradient_buckets(const json& j) {
  using detail::schema_error;
  if (!j.is_object()) schema_error("gradient_buckets must be an object");
  GradientBucketMap out;
  const auto& of_layer = detail::require(j, "bucket_of_layer", "gradient_buckets");
  const auto& sizes = detail::require(j, "bucket_size_bytes", "gradient_buckets");
  if (!of_layer.is_object()) schema_error("bucket_of_layer must be an object");
  for (const auto& [layer, b] : of_layer.items()) out.bucket_of_layer[layer] = detail::as_uint(b, "bucket index");
  if (sizes.is_object()) {
    for (const auto& [key, v] : sizes.items()) {
      std::uint64_t idx = 0;
      try {
        std::size_t pos = 0;
        idx = std::stoull(key, &pos);
        if (pos != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        schema_error("bucket_size_bytes key '" + key + "' is not an index");
      }
      out.bucket_size_bytes[idx] = detail::as_uint(v, "bucket size");
    }
  } else if (sizes.is_array()) {
    for (std::size_t i = 0; i < sizes.size(); ++i) out.bucket_size_bytes[i] = detail::as_uint(sizes[i], "bucket size");
  } else {
    schema_error("bucket_size_bytes must be an object or array");
  }
  return out;
}

inline ordered_json to_json(const GradientBucketMap& b) {
  ordered_json of_layer = ordered_json::object();
  for (const auto& [layer, idx] : b.bucket_of_layer) of_layer[layer] = idx;
  ordered_json sizes = ordered_json::object();
  for (const auto& [idx, bytes] : b.bucket_size_bytes) sizes[std::to_string(idx)] = bytes;
  return ordered_json{{"bucket_of_layer", of_layer}, {"bucket_size_bytes", sizes}};
}

/// Builds a TraceDocument from an already-parsed JSON value and validates it.
inline TraceDocument trace_from_json(const json& root) {
  using detail::schema_error;
  if (!root.is_object()) schema_error("trace document must be an object");
  TraceDocument doc;
  const auto& version = detail::require(root, "schema_version", "document");
  doc.schema_version = static_cast<int>(detail::as_uint(version, "schema_version"));
  std::string unit = detail::require_string(root, "time_unit", "document");
  if (unit != "us" && unit != "microseconds") schema_error("time_unit must be 'us'");

  const auto& events = detail::require(root, "events", "document");
  if (!events.is_array()) schema_error("events must be an array");
  doc.events.reserve(events.size());
  for (const auto& ej : events) {
    if (!ej.is_object()) schema_error("event must be an object");
    TraceEvent e;
    e.id = detail::as_uint(detail::require(ej, "id", "event"), "event id");
    std::string where = "event " + std::to_string(e.id);
    auto kind = parse_task_kind(detail::require_string(ej, "kind", where));
    if (!kind) schema_error(where + ": unknown kind '" + ej["kind"].get<std::string>() + "'");
    e.kind = *kind;
    e.name = detail::require_string(ej, "name", where);
    e.lane = detail::as_lane(detail::require(ej, "lane", where), where + " lane");
    e.start = detail::as_time_us(detail::require(ej, "start", where), where + " start");
    e.duration = detail::as_time_us(detail::require(ej, "duration", where), where + " duration");
    if (auto it = ej.find("correlation"); it != ej.end() && !it->is_null()) {
      e.correlation = detail::as_uint(*it, where + " correlation");
    }
    if (auto it = ej.find("size_bytes"); it != ej.end() && !it->is_null()) {
      e.size_bytes = detail::as_uint(*it, where + " size_bytes");
    }
    if (auto it = ej.find("sync_target"); it != ej.end() && !it->is_null()) {
      e.sync_target = detail::as_lane(*it, where + " sync_target");
    }
    doc.events.push_back(std::move(e));
  }

  if (auto it = root.find("layer_markers"); it != root.end() && !it->is_null()) {
    if (!it->is_array()) schema_error("layer_markers must be an array");
    for (const auto& mj : *it) {
      LayerMarker m;
      m.layer = detail::require_string(mj, "layer", "marker");
      auto phase = parse_phase(detail::require_string(mj, "phase", "marker " + m.layer));
      if (!phase) schema_error("marker " + m.layer + ": unknown phase");
      m.phase = *phase;
      const char* lane_field = mj.contains("cpu_lane") ? "cpu_lane" : "lane";
      m.cpu_lane = detail::as_lane(detail::require(mj, lane_field, "marker " + m.layer), "marker lane");
      m.start = detail::as_time_us(detail::require(mj, "start", "marker " + m.layer), "marker start");
      m.end = detail::as_time_us(detail::require(mj, "end", "marker " + m.layer), "marker end");
      doc.layer_markers.push_back(std::move(m));
    }
  }
  if (auto it = root.find("gradient_buckets"); it != root.end() && !it->is_null()) {
    doc.gradient_buckets = parse_gradient_buckets(*it);
  }
  if (auto it = root.find("metadata"); it != root.end() && !it->is_null()) {
    if (!it->is_object()) schema_error("metadata must be an object");
    for (const auto& [k, v] : it->items()) {
      doc.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  validate_trace(doc);
  return doc;
}

inline TraceDocument parse_trace(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, e.what());
  }
  return trace_from_json(root);
}

inline ordered_json to_json(const TraceDocument& doc) {
  ordered_json events = ordered_json::array();
  for (const auto& e : doc.events) {
    ordered_json ej{{"id", e.id},
                    {"kind", to_string(e.kind)},
                    {"name", e.name},
                    {"lane", e.lane.str()},
                    {"start", detail::time_to_ojson(e.start)},
                    {"duration", detail::time_to_ojson(e.duration)}};
    if (e.correlation) ej["correlation"] = *e.correlation;
    if (e.size_bytes) ej["size_bytes"] = *e.size_bytes;
    if (e.sync_target) ej["sync_target"] = e.sync_target->str();
    events.push_back(std::move(ej));
  }
  ordered_json markers = ordered_json::array();
  for (const auto& m : doc.layer_markers) {
    markers.push_back(ordered_json{{"layer", m.layer},
                                   {"phase", to_string(m.phase)},
                                   {"cpu_lane", m.cpu_lane.str()},
                                   {"start", detail::time_to_ojson(m.start)},
                                   {"end", detail::time_to_ojson(m.end)}});
  }
  ordered_json out{{"schema_version", doc.schema_version},
                   {"time_unit", "us"},
                   {"events", std::move(events)},
                   {"layer_markers", std::move(markers)}};
  if (doc.gradient_buckets) out["gradient_buckets"] = to_json(*doc.gradient_buckets);
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : doc.metadata) meta[k] = v;
  out["metadata"] = std::move(meta);
  return out;
}

inline std::string print_trace(const TraceDocument& doc, int indent = -1) {
  return to_json(doc).dump(indent);
}

}  // namespace whatif
