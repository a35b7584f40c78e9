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
#include "whatif/synthetic.hpp"
#include "whatif/trace.hpp"

namespace whatif {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::UsageError;
}

constexpr const char* kTwoEvents = R"({
  "schema_version": 1, "time_unit": "us",
  "events": [
    {"id": 0, "kind": "CpuApi", "name": "cudaLaunchKernel", "lane": "cpu:0", "start": 0, "duration": 1, "correlation": 7},
    {"id": 1, "kind": "GpuKernel", "name": "sgemm_128", "lane": "gpu:0:7", "start": 12.5, "duration": 10, "correlation": 7}
  ],
  "layer_markers": [{"layer": "conv1", "phase": "Forward", "cpu_lane": "cpu:0", "start": 0, "end": 5}],
  "metadata": {"model": "toy"}
})";

TEST(LaneId, ParsePrintIdentity) {
  for (const char* s : {"cpu:0", "gpu:0:7", "comm:collective", "comm:send", "comm:recv", "comm:channel:3"}) {
    auto lane = LaneId::parse(s);
    ASSERT_TRUE(lane) << s;
    EXPECT_EQ(lane->str(), s);
  }
  EXPECT_FALSE(LaneId::parse("tpu:0"));
  EXPECT_FALSE(LaneId::parse("gpu"));
}

TEST(ParseTrace, EmptyEventList) {
  auto doc = parse_trace(R"({"schema_version":1,"time_unit":"us","events":[]})");
  EXPECT_TRUE(doc.events.empty());
}

TEST(ParseTrace, HalfUpMicroseconds) {
  auto doc = parse_trace(kTwoEvents);
  ASSERT_EQ(doc.events.size(), 2u);
  EXPECT_EQ(doc.events[1].start, 12500u);
  EXPECT_EQ(doc.events[1].duration, 10000u);
  EXPECT_EQ(doc.events[1].lane.str(), "gpu:0:7");
  EXPECT_EQ(doc.layer_markers.at(0).end, 5000u);
  EXPECT_EQ(doc.metadata.at("model"), "toy");

  auto half = parse_trace(R"({"schema_version":1,"time_unit":"us","events":[
    {"id":0,"kind":"CpuOther","name":"a","lane":"cpu:0","start":0.0005,"duration":0.0004}]})");
  EXPECT_EQ(half.events[0].start, 1u);
  EXPECT_EQ(half.events[0].duration, 0u);
}

TEST(ParseTrace, OverlapNamesBothEvents) {
  try {
    parse_trace(R"({"schema_version":1,"time_unit":"us","events":[
      {"id":3,"kind":"GpuKernel","name":"k1","lane":"gpu:0:7","start":0,"duration":10,"correlation":1},
      {"id":9,"kind":"GpuKernel","name":"k2","lane":"gpu:0:7","start":5,"duration":10,"correlation":2}]})");
    FAIL() << "expected OverlapViolation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OverlapViolation);
    std::string what = e.what();
    EXPECT_NE(what.find('3'), std::string::npos);
    EXPECT_NE(what.find('9'), std::string::npos);
  }
}

TEST(ParseTrace, Errors) {
  EXPECT_EQ(code_of([] { parse_trace("{not json"); }), ErrorCode::MalformedDocument);
  EXPECT_EQ(code_of([] { parse_trace(R"({"schema_version":2,"time_unit":"us","events":[]})"); }),
            ErrorCode::SchemaViolation);
  EXPECT_EQ(code_of([] { parse_trace(R"({"schema_version":1,"time_unit":"us"})"); }), ErrorCode::SchemaViolation);
  EXPECT_EQ(code_of([] {
              parse_trace(R"({"schema_version":1,"time_unit":"us","events":[
                {"id":0,"kind":"Bogus","name":"a","lane":"cpu:0","start":0,"duration":1}]})");
            }),
            ErrorCode::SchemaViolation);
  EXPECT_EQ(code_of([] {
              parse_trace(R"({"schema_version":1,"time_unit":"us","events":[
                {"id":0,"kind":"CpuOther","name":"a","lane":"cpu:0","start":-1,"duration":1}]})");
            }),
            ErrorCode::SchemaViolation);
  // Kernel without correlation.
  EXPECT_EQ(code_of([] {
              parse_trace(R"({"schema_version":1,"time_unit":"us","events":[
                {"id":0,"kind":"GpuKernel","name":"k","lane":"gpu:0:7","start":0,"duration":1}]})");
            }),
            ErrorCode::SchemaViolation);
  // Duplicate ids.
  EXPECT_EQ(code_of([] {
              parse_trace(R"({"schema_version":1,"time_unit":"us","events":[
                {"id":0,"kind":"CpuOther","name":"a","lane":"cpu:0","start":0,"duration":1},
                {"id":0,"kind":"CpuOther","name":"b","lane":"cpu:1","start":0,"duration":1}]})");
            }),
            ErrorCode::SchemaViolation);
  // Kind on the wrong lane class.
  EXPECT_EQ(code_of([] {
              parse_trace(R"({"schema_version":1,"time_unit":"us","events":[
                {"id":0,"kind":"Sync","name":"s","lane":"gpu:0:7","start":0,"duration":1}]})");
            }),
            ErrorCode::SchemaViolation);
  // Overlapping markers for one (layer, phase, lane).
  EXPECT_EQ(code_of([] {
              parse_trace(R"({"schema_version":1,"time_unit":"us","events":[],"layer_markers":[
                {"layer":"a","phase":"Forward","cpu_lane":"cpu:0","start":0,"end":10},
                {"layer":"a","phase":"Forward","cpu_lane":"cpu:0","start":5,"end":15}]})");
            }),
            ErrorCode::SchemaViolation);
  // Bucket index without a size.
  EXPECT_EQ(code_of([] {
              parse_trace(R"({"schema_version":1,"time_unit":"us","events":[],
                "gradient_buckets":{"bucket_of_layer":{"fc":0},"bucket_size_bytes":{}}})");
            }),
            ErrorCode::SchemaViolation);
}

TEST(ParseTrace, UnknownFieldsIgnored) {
  auto doc = parse_trace(R"({"schema_version":1,"time_unit":"us","extra":[1,2],"events":[
    {"id":0,"kind":"CpuOther","name":"a","lane":"cpu:0","start":0,"duration":1,"color":"red"}]})");
  EXPECT_EQ(doc.events.size(), 1u);
}

TEST(ParseTrace, RoundTrip) {
  auto doc = parse_trace(kTwoEvents);
  EXPECT_EQ(parse_trace(print_trace(doc)), doc);

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto spec = testing_support::random_spec(seed, 60);
    auto gen = generate_synthetic_trace(spec, seed);
    EXPECT_EQ(parse_trace(print_trace(gen.trace, 2)), gen.trace) << "seed " << seed;
  }
}

SyntheticSpec spec_from(const char* text) { return synthetic_spec_from_json(json::parse(text)); }

TEST(Synthetic, SequentialSumWithGap) {
  auto spec = spec_from(R"({"lanes":[{"lane":"cpu:0","tasks":[
    {"name":"A","kind":"CpuOther","duration":10,"gap":2},{"name":"B","kind":"CpuOther","duration":5}]}]})");
  auto out = generate_synthetic_trace(spec, 1);
  EXPECT_EQ(out.makespan, 17000u);
  EXPECT_EQ(out.trace.events.at(1).start, 12000u);
}

TEST(Synthetic, LaunchThenKernel) {
  auto spec = spec_from(R"({"lanes":[
      {"lane":"cpu:0","tasks":[{"name":"L","kind":"CpuApi","duration":1}]},
      {"lane":"gpu:0:7","tasks":[{"name":"K","kind":"GpuKernel","duration":10}]}],
    "launches":[{"launch":"L","task":"K"}]})");
  auto out = generate_synthetic_trace(spec, 1);
  EXPECT_EQ(out.makespan, 11000u);
  EXPECT_EQ(out.makespan, testing_support::longest_path_from_trace(out.trace));
}

TEST(Synthetic, DeterministicWithoutJitter) {
  auto spec = testing_support::random_spec(5, 80, /*jitter=*/false);
  auto a = generate_synthetic_trace(spec, 1);
  auto b = generate_synthetic_trace(spec, 999);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.makespan, b.makespan);
}

TEST(Synthetic, PureInSpecAndSeed) {
  auto spec = testing_support::random_spec(6, 80, /*jitter=*/true);
  EXPECT_EQ(generate_synthetic_trace(spec, 3).trace, generate_synthetic_trace(spec, 3).trace);
  EXPECT_NE(generate_synthetic_trace(spec, 3).trace, generate_synthetic_trace(spec, 4).trace);
}

TEST(Synthetic, Errors) {
  EXPECT_EQ(code_of([] {
              spec_from(R"({"lanes":[{"lane":"cpu:0","tasks":[{"name":"A","kind":"CpuOther","duration":-1}]}]})");
            }),
            ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] {
              generate_synthetic_trace(spec_from(R"({"lanes":[
                {"lane":"cpu:0","tasks":[{"name":"L","kind":"CpuApi","duration":1}]}],
                "launches":[{"launch":"L","task":"nowhere"}]})"),
                                       0);
            }),
            ErrorCode::InvalidSpec);
  EXPECT_EQ(code_of([] {
              generate_synthetic_trace(spec_from(R"({"lanes":[
                {"lane":"gpu:0:7","tasks":[{"name":"K","kind":"GpuKernel","duration":1}]}]})"),
                                       0);
            }),
            ErrorCode::InvalidSpec);
}

TEST(Synthetic, SpecJsonRoundTrip) {
  auto spec = testing_support::random_spec(9, 40, true);
  auto again = synthetic_spec_from_json(json::parse(to_json(spec).dump()));
  EXPECT_EQ(generate_synthetic_trace(spec, 2).trace, generate_synthetic_trace(again, 2).trace);
}

// Small generated traces: the generator's makespan matches an independent
// exhaustive longest-path walk over the edges implied by the trace.
TEST(Synthetic, MakespanMatchesExhaustiveOracle) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto spec = testing_support::random_spec(seed, 12, seed % 2 == 0);
    auto out = generate_synthetic_trace(spec, seed);
    ASSERT_LE(out.trace.events.size(), 12u);
    EXPECT_EQ(out.makespan, testing_support::exhaustive_longest_path_from_trace(out.trace)) << "seed " << seed;
  }
}

}  // namespace
}  // namespace whatif
