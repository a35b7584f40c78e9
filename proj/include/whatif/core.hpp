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

// Vocabulary shared by every module: time, task kinds, lanes, phases and the
// structured error type.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace whatif {

/// Integer nanoseconds. All simulation arithmetic happens in this unit.
using TimeNs = std::uint64_t;
using TaskId = std::uint64_t;

inline constexpr TimeNs kNsPerUs = 1000;

/// Rounds a non-negative real number of nanoseconds half-up.
inline TimeNs round_half_up(long double ns) {
  if (!(ns > 0)) return 0;
  return static_cast<TimeNs>(std::floor(ns + 0.5L));
}

/// Microseconds (possibly fractional) to nanoseconds, half-up.
inline TimeNs us_to_ns(long double us) { return round_half_up(us * 1000.0L); }

inline double ns_to_us(TimeNs ns) { return static_cast<double>(ns) / 1000.0; }

/// num / den rounded half-up, exact for any 64-bit operands.
inline TimeNs div_half_up(unsigned __int128 num, unsigned __int128 den) {
  return static_cast<TimeNs>((2 * num + den) / (2 * den));
}

/// Non-negative rational factor. Decimal inputs are captured to 1e-12.
struct Ratio {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  static Ratio of(std::uint64_t n, std::uint64_t d) {
    std::uint64_t g = std::gcd(n, d);
    if (g == 0) g = 1;
    return {n / g, d / g};
  }
  static Ratio from_double(long double x) {
    constexpr std::uint64_t kScale = 1000000000000ULL;
    return of(static_cast<std::uint64_t>(std::floor(x * kScale + 0.5L)), kScale);
  }

  /// round(t * num / den), half-up.
  TimeNs apply(TimeNs t) const { return div_half_up(static_cast<unsigned __int128>(t) * num, den); }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool is_one() const { return num == den; }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

// ---------------------------------------------------------------------------
// Errors

enum class ErrorCode {
  MalformedDocument,
  SchemaViolation,
  OverlapViolation,
  InvalidSpec,
  MismatchedInput,
  OrphanKernel,
  CycleDetected,
  AmbiguousMarker,
  InvalidGroup,
  MissingLayer,
  NoWeightUpdate,
  Deadlock,
  ZeroBaseline,
  WouldCreateCycle,
  UnknownAnchor,
  UnknownTask,
  AcyclicityViolated,
  LaneViolation,
  InvalidPipeline,
  InvalidScenario,
  MissingLayerGradients,
  BadFactorization,
  MissingConvPairs,
  BadRatio,
  IoError,
  UsageError,
};

inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::OverlapViolation: return "OverlapViolation";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MismatchedInput: return "MismatchedInput";
    case ErrorCode::OrphanKernel: return "OrphanKernel";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::AmbiguousMarker: return "AmbiguousMarker";
    case ErrorCode::InvalidGroup: return "InvalidGroup";
    case ErrorCode::MissingLayer: return "MissingLayer";
    case ErrorCode::NoWeightUpdate: return "NoWeightUpdate";
    case ErrorCode::Deadlock: return "Deadlock";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::WouldCreateCycle: return "WouldCreateCycle";
    case ErrorCode::UnknownAnchor: return "UnknownAnchor";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::AcyclicityViolated: return "AcyclicityViolated";
    case ErrorCode::LaneViolation: return "LaneViolation";
    case ErrorCode::InvalidPipeline: return "InvalidPipeline";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::MissingLayerGradients: return "MissingLayerGradients";
    case ErrorCode::BadFactorization: return "BadFactorization";
    case ErrorCode::MissingConvPairs: return "MissingConvPairs";
    case ErrorCode::BadRatio: return "BadRatio";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// ---------------------------------------------------------------------------
// Task kinds

enum class TaskKind { CpuApi, CpuOther, GpuKernel, GpuMemcpy, DataLoad, Comm, Sync };

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::CpuApi: return "CpuApi";
    case TaskKind::CpuOther: return "CpuOther";
    case TaskKind::GpuKernel: return "GpuKernel";
    case TaskKind::GpuMemcpy: return "GpuMemcpy";
    case TaskKind::DataLoad: return "DataLoad";
    case TaskKind::Comm: return "Comm";
    case TaskKind::Sync: return "Sync";
  }
  return "?";
}

inline std::optional<TaskKind> parse_task_kind(std::string_view s) {
  for (auto k : {TaskKind::CpuApi, TaskKind::CpuOther, TaskKind::GpuKernel, TaskKind::GpuMemcpy,
                 TaskKind::DataLoad, TaskKind::Comm, TaskKind::Sync}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline bool is_gpu_kind(TaskKind k) { return k == TaskKind::GpuKernel || k == TaskKind::GpuMemcpy; }

// ---------------------------------------------------------------------------
// Lanes

enum class LaneClass { CpuThread, GpuStream, CommChannel };

inline std::string_view lane_prefix(LaneClass c) {
  switch (c) {
    case LaneClass::CpuThread: return "cpu";
    case LaneClass::GpuStream: return "gpu";
    case LaneClass::CommChannel: return "comm";
  }
  return "?";
}

inline std::string_view to_string(LaneClass c) {
  switch (c) {
    case LaneClass::CpuThread: return "CpuThread";
    case LaneClass::GpuStream: return "GpuStream";
    case LaneClass::CommChannel: return "CommChannel";
  }
  return "?";
}

inline std::optional<LaneClass> parse_lane_class(std::string_view s) {
  for (auto c : {LaneClass::CpuThread, LaneClass::GpuStream, LaneClass::CommChannel}) {
    if (to_string(c) == s || lane_prefix(c) == s) return c;
  }
  return std::nullopt;
}

/// An execution thread: CPU thread, GPU stream or communication channel.
/// Canonical text form is "<cpu|gpu|comm>:<key>", e.g. "gpu:0:7".
struct LaneId {
  LaneClass cls = LaneClass::CpuThread;
  std::string key;

  static std::optional<LaneId> parse(std::string_view text) {
    auto colon = text.find(':');
    if (colon == std::string_view::npos || colon + 1 >= text.size()) return std::nullopt;
    auto prefix = text.substr(0, colon);
    for (auto c : {LaneClass::CpuThread, LaneClass::GpuStream, LaneClass::CommChannel}) {
      if (lane_prefix(c) == prefix) return LaneId{c, std::string(text.substr(colon + 1))};
    }
    return std::nullopt;
  }

  static LaneId cpu(std::string key) { return {LaneClass::CpuThread, std::move(key)}; }
  static LaneId gpu(std::string key) { return {LaneClass::GpuStream, std::move(key)}; }
  static LaneId comm(std::string key) { return {LaneClass::CommChannel, std::move(key)}; }

  std::string str() const { return std::string(lane_prefix(cls)) + ":" + key; }

  friend auto operator<=>(const LaneId&, const LaneId&) = default;
  friend bool operator==(const LaneId&, const LaneId&) = default;
};

inline bool lane_accepts(LaneClass cls, TaskKind kind) {
  switch (kind) {
    case TaskKind::CpuApi:
    case TaskKind::CpuOther:
    case TaskKind::DataLoad:
    case TaskKind::Sync: return cls == LaneClass::CpuThread;
    case TaskKind::GpuKernel:
    case TaskKind::GpuMemcpy: return cls == LaneClass::GpuStream;
    case TaskKind::Comm: return cls == LaneClass::CommChannel;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Training phases

enum class Phase { Forward, Backward, WeightUpdate };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Forward: return "Forward";
    case Phase::Backward: return "Backward";
    case Phase::WeightUpdate: return "WeightUpdate";
  }
  return "?";
}

inline std::optional<Phase> parse_phase(std::string_view s) {
  for (auto p : {Phase::Forward, Phase::Backward, Phase::WeightUpdate}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

struct LayerTag {
  std::string layer;
  Phase phase = Phase::Forward;

  friend auto operator<=>(const LayerTag&, const LayerTag&) = default;
  friend bool operator==(const LayerTag&, const LayerTag&) = default;
};

/// Case-insensitive substring test used by name and layer keyword matching.
inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return true;
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [](char a, char b) {
                          return std::tolower(static_cast<unsigned char>(a)) ==
                                 std::tolower(static_cast<unsigned char>(b));
                        });
  return it != haystack.end();
}

}  // namespace whatif
