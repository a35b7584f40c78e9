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

// The `whatif` command line: build, simulate, whatif, sweep, gen, export,
// scenarios, serve. Human-readable tables by default (times in us), JSON
// documents with --json (times in ns).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "whatif/service.hpp"
#include "whatif/synthetic.hpp"

namespace whatif {

namespace cli {

struct Config {
  std::string subcommand;
  std::string input;          // trace or synthetic spec path
  std::string scenario_name;  // positional scenario
  std::string scenario_file;  // --scenario
  std::vector<std::string> params;  // --param k=v
  std::string out;            // --out
  bool json_output = false;
  bool strict = false;
  std::uint64_t seed = 0;
  std::string vary;                 // sweep parameter path
  std::vector<std::string> values;  // sweep values
  std::string policy;               // simulate --policy
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string trace_dir;
  std::size_t capacity = 16;
  std::string cors_origin = "*";
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
}

inline json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedDocument, path + ": " + e.what());
  }
}

/// Nanoseconds as microseconds with all three decimals.
inline std::string us(TimeNs ns) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%llu.%03llu", static_cast<unsigned long long>(ns / 1000),
                static_cast<unsigned long long>(ns % 1000));
  return buf;
}

inline std::string signed_us(std::int64_t ns) {
  return (ns < 0 ? "-" : "+") + us(static_cast<TimeNs>(ns < 0 ? -ns : ns));
}

inline std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f%%", x * 100);
  return buf;
}

/// `v` as JSON when it parses, otherwise as a string ("1/3" stays a ratio).
inline json param_value(const std::string& v) {
  try {
    return json::parse(v);
  } catch (const json::parse_error&) {
    return v;
  }
}

/// Sets `path` (dot-separated) inside `obj`.
inline void set_path(json& obj, const std::string& path, json value) {
  json* cur = &obj;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  if (keys.empty() || std::any_of(keys.begin(), keys.end(), [](const std::string& k) { return k.empty(); })) {
    throw Error(ErrorCode::UsageError, "bad parameter name '" + path + "'");
  }
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    json& next = (*cur)[keys[i]];
    if (!next.is_object()) next = json::object();
    cur = &next;
  }
  (*cur)[keys.back()] = std::move(value);
}

inline void apply_params(json& params, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    auto eq = a.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::UsageError, "--param expects k=v, got '" + a + "'");
    set_path(params, a.substr(0, eq), param_value(a.substr(eq + 1)));
  }
}

/// The request document from a positional name or --scenario FILE, with
/// --param overrides applied. Empty when neither is given.
inline std::optional<json> scenario_request(const Config& c) {
  if (!c.scenario_name.empty() && !c.scenario_file.empty()) {
    throw Error(ErrorCode::UsageError, "give a scenario name or --scenario FILE, not both");
  }
  json req;
  if (!c.scenario_file.empty()) {
    req = read_json(c.scenario_file);
  } else if (!c.scenario_name.empty()) {
    req = json{{"scenario", c.scenario_name}, {"params", json::object()}};
  } else {
    if (!c.params.empty()) throw Error(ErrorCode::UsageError, "--param needs a scenario");
    return std::nullopt;
  }
  if (!c.params.empty()) {
    if (req.is_object() && req.contains("steps")) throw Error(ErrorCode::UsageError, "--param does not apply to a raw pipeline");
    if (!req.is_object()) throw Error(ErrorCode::InvalidScenario, "scenario document must be an object");
    if (!req.contains("params") || !req["params"].is_object()) req["params"] = json::object();
    apply_params(req["params"], c.params);
  }
  return req;
}

struct Loaded {
  TraceDocument trace;
  DependencyGraph graph;
  ScenarioContext context() const { return {graph, trace.gradient_buckets}; }
};

inline Loaded load(const Config& c, std::ostream& err) {
  Loaded l;
  l.trace = parse_trace(read_file(c.input));
  BuildOptions opt;
  opt.strict = c.strict;
  opt.on_warning = [&err](const std::string& msg) { err << "warning: " << msg << "\n"; };
  l.graph = build_layered_graph(l.trace, opt);
  return l;
}

inline void emit(const Config& c, std::ostream& out, const std::string& text) {
  if (c.out.empty()) {
    out << text;
  } else {
    write_file(c.out, text);
  }
}

inline void breakdown_table(std::ostream& out, const BreakdownReport& b) {
  out << "  cpu_only   " << us(b.cpu_only) << " us\n"
      << "  gpu_only   " << us(b.gpu_only) << " us\n"
      << "  parallel   " << us(b.parallel) << " us\n"
      << "  idle       " << us(b.idle) << " us\n";
}

// ---------------------------------------------------------------------------

inline int cmd_build(const Config& c, std::ostream& out, std::ostream& err) {
  Loaded l = load(c, err);
  ordered_json stats = ordered_json{{"tasks", l.graph.size()}, {"edges", l.graph.edge_count()}};
  ordered_json by_kind = ordered_json::object();
  for (const auto& [kind, n] : l.graph.edge_counts()) by_kind[std::string(to_string(kind))] = n;
  stats["edge_counts"] = by_kind;
  stats["lanes"] = l.graph.lane_order().size();
  if (!c.out.empty()) write_file(c.out, graph_to_json(l.graph).dump(2) + "\n");
  if (c.json_output) {
    ordered_json doc{{"stats", stats}};
    if (c.out.empty()) doc["graph"] = graph_to_json(l.graph);
    out << doc.dump(2) << "\n";
    return 0;
  }
  out << "tasks  " << l.graph.size() << "\n"
      << "lanes  " << l.graph.lane_order().size() << "\n"
      << "edges  " << l.graph.edge_count() << "\n";
  for (const auto& [kind, n] : l.graph.edge_counts()) out << "  " << to_string(kind) << "  " << n << "\n";
  return 0;
}

inline int cmd_simulate(const Config& c, std::ostream& out, std::ostream& err) {
  Loaded l = load(c, err);
  auto r = simulate(l.graph, policy_by_name(c.policy));
  auto b = compute_breakdown(r, l.graph);
  if (c.json_output || !c.out.empty()) {
    ordered_json doc = result_to_json(r);
    doc["breakdown"] = to_json(b);
    if (!c.out.empty()) write_file(c.out, doc.dump(2) + "\n");
    if (c.json_output) {
      ordered_json summary{{"makespan_ns", r.makespan}, {"tasks", l.graph.size()}, {"breakdown", to_json(b)}};
      ordered_json busy = ordered_json::object();
      for (const auto& [lane, t] : r.lane_busy) busy[lane.str()] = t;
      summary["lane_busy_ns"] = busy;
      out << summary.dump(2) << "\n";
      return 0;
    }
  }
  out << "makespan   " << us(r.makespan) << " us\n";
  breakdown_table(out, b);
  return 0;
}

inline int cmd_whatif(const Config& c, std::ostream& out, std::ostream& err) {
  auto req = scenario_request(c);
  if (!req) throw Error(ErrorCode::UsageError, "whatif needs a scenario name or --scenario FILE");
  Loaded l = load(c, err);
  auto rep = evaluate_pipeline(l.graph, pipeline_for_request(l.context(), *req));
  if (!c.out.empty()) write_file(c.out, to_json(rep).dump(2) + "\n");
  if (c.json_output) {
    out << to_json(rep).dump(2) << "\n";
    return 0;
  }
  const auto& a = rep.baseline_breakdown;
  const auto& b = rep.predicted_breakdown;
  auto d = [](TimeNs x, TimeNs y) { return static_cast<std::int64_t>(y) - static_cast<std::int64_t>(x); };
  out << "baseline   " << us(rep.baseline.makespan) << " us\n"
      << "predicted  " << us(rep.predicted.makespan) << " us\n"
      << "speedup    " << percent(rep.speedup) << "\n"
      << "breakdown  baseline -> predicted (delta), us\n"
      << "  cpu_only   " << us(a.cpu_only) << " -> " << us(b.cpu_only) << " (" << signed_us(d(a.cpu_only, b.cpu_only)) << ")\n"
      << "  gpu_only   " << us(a.gpu_only) << " -> " << us(b.gpu_only) << " (" << signed_us(d(a.gpu_only, b.gpu_only)) << ")\n"
      << "  parallel   " << us(a.parallel) << " -> " << us(b.parallel) << " (" << signed_us(d(a.parallel, b.parallel)) << ")\n"
      << "  idle       " << us(a.idle) << " -> " << us(b.idle) << " (" << signed_us(d(a.idle, b.idle)) << ")\n";
  return 0;
}

inline int cmd_sweep(const Config& c, std::ostream& out, std::ostream& err) {
  auto req = scenario_request(c);
  if (!req) throw Error(ErrorCode::UsageError, "sweep needs a scenario name or --scenario FILE");
  if (req->contains("steps")) throw Error(ErrorCode::UsageError, "sweep varies scenario parameters, not raw pipelines");
  if (c.vary.empty() || c.values.empty()) throw Error(ErrorCode::UsageError, "sweep needs --vary NAME and --values LIST");
  Loaded l = load(c, err);
  auto baseline = simulate(l.graph);
  ordered_json rows = ordered_json::array();
  std::ostringstream table;
  table << c.vary << "  makespan_us  speedup\n";
  for (const auto& v : c.values) {
    json r = *req;
    if (!r.contains("params") || !r["params"].is_object()) r["params"] = json::object();
    set_path(r["params"], c.vary, param_value(v));
    auto rep = evaluate_pipeline(l.graph, pipeline_for_request(l.context(), r), baseline);
    rows.push_back(ordered_json{{"value", ordered_json::parse(param_value(v).dump())},
                                {"makespan_ns", rep.predicted.makespan},
                                {"speedup", rep.speedup}});
    table << v << "  " << us(rep.predicted.makespan) << "  " << percent(rep.speedup) << "\n";
  }
  ordered_json doc{{"parameter", c.vary}, {"baseline_makespan_ns", baseline.makespan}, {"points", rows}};
  if (!c.out.empty()) write_file(c.out, doc.dump(2) + "\n");
  if (c.json_output) {
    out << doc.dump(2) << "\n";
  } else {
    out << "baseline  " << us(baseline.makespan) << " us\n" << table.str();
  }
  return 0;
}

inline int cmd_gen(const Config& c, std::ostream& out, std::ostream&) {
  if (c.out.empty()) throw Error(ErrorCode::UsageError, "gen needs --out FILE for the trace");
  auto spec = synthetic_spec_from_json(read_json(c.input));
  auto gen = generate_synthetic_trace(spec, c.seed);
  write_file(c.out, print_trace(gen.trace) + "\n");
  if (c.json_output) {
    out << ordered_json{{"trace", c.out}, {"events", gen.trace.events.size()}, {"expected_makespan_ns", gen.makespan}}.dump(2)
        << "\n";
  } else {
    out << "wrote " << gen.trace.events.size() << " events to " << c.out << "\n"
        << "expected makespan  " << us(gen.makespan) << " us\n";
  }
  return 0;
}

inline int cmd_export(const Config& c, std::ostream& out, std::ostream& err) {
  Loaded l = load(c, err);
  auto req = scenario_request(c);
  std::string doc;
  if (req) {
    auto rep = evaluate_pipeline(l.graph, pipeline_for_request(l.context(), *req));
    doc = export_chrome_trace(rep.predicted, rep.graph);
  } else {
    doc = export_chrome_trace(simulate(l.graph), l.graph);
  }
  emit(c, out, doc + "\n");
  return 0;
}

inline int cmd_scenarios(const Config& c, std::ostream& out, std::ostream&) {
  if (c.json_output) {
    out << registry_to_json().dump(2) << "\n";
    return 0;
  }
  for (const auto& s : registry()) {
    out << s.name << "  " << s.description << "\n";
    for (const auto& p : s.params) {
      out << "    " << p.name << " (" << p.type << ", default " << p.default_value.dump() << ")  " << p.description
          << "\n";
    }
  }
  return 0;
}

inline int cmd_serve(const Config& c, std::ostream& out, std::ostream& err) {
  Service service(c.capacity);
  if (!c.trace_dir.empty()) {
    BuildOptions opt;
    opt.strict = c.strict;
    opt.on_warning = [&err](const std::string& msg) { err << "warning: " << msg << "\n"; };
    for (const auto& id : preload_traces(service, c.trace_dir, opt)) out << "session " << id << "\n";
  }
  httplib::Server server;
  bind_routes(server, service, c.cors_origin);
  int port = c.port;
  if (port == 0) {
    port = server.bind_to_any_port(c.host);
  } else if (!server.bind_to_port(c.host, port)) {
    throw Error(ErrorCode::IoError, "cannot listen on " + c.host + ":" + std::to_string(port));
  }
  out << "listening on http://" << c.host << ":" << port << std::endl;
  server.listen_after_bind();
  return 0;
}

inline void print_error(const Config& c, std::ostream& out, std::ostream& err, std::string_view name,
                        const std::string& detail) {
  if (c.json_output) {
    out << ordered_json{{"error", name}, {"detail", detail}}.dump() << "\n";
  }
  err << "error: " << name << ": " << detail << "\n";
}

}  // namespace cli

/// Runs one invocation. Returns the process exit code: 0 on success, 1 on a
/// domain error, 2 on a usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  cli::Config c;
  CLI::App app{"Trace-driven what-if simulator for DNN training iterations", "whatif"};
  app.require_subcommand(1);

  auto common = [&c](CLI::App* sub, bool trace) {
    if (trace) {
      sub->add_option("trace", c.input, "trace document")->required();
      sub->add_flag("--strict", c.strict, "orphan kernels are errors");
    }
    sub->add_flag("--json", c.json_output, "print a JSON document");
    sub->add_option("--out", c.out, "output file");
  };
  auto scenario_opts = [&c](CLI::App* sub) {
    sub->add_option("name", c.scenario_name, "built-in scenario name");
    sub->add_option("--scenario", c.scenario_file, "scenario or pipeline document");
    sub->add_option("--param", c.params, "scenario parameter k=v (dots address nested keys)");
  };

  auto* build = app.add_subcommand("build", "build the dependency graph and print its statistics");
  common(build, true);
  auto* sim = app.add_subcommand("simulate", "simulate the trace as recorded");
  common(sim, true);
  sim->add_option("--policy", c.policy, "default, priority or deferring");
  auto* whatif = app.add_subcommand("whatif", "predict the effect of a scenario");
  common(whatif, true);
  scenario_opts(whatif);
  auto* sweep = app.add_subcommand("sweep", "predict a scenario over several values of one parameter");
  common(sweep, true);
  scenario_opts(sweep);
  sweep->add_option("--vary", c.vary, "parameter to vary")->required();
  sweep->add_option("--values", c.values, "comma-separated values")->delimiter(',')->required();
  auto* gen = app.add_subcommand("gen", "generate a synthetic trace from a spec");
  gen->add_option("spec", c.input, "synthetic spec document")->required();
  gen->add_option("--seed", c.seed, "seed for randomized durations");
  common(gen, false);
  auto* exp = app.add_subcommand("export", "write a Chrome trace of the simulated schedule");
  common(exp, true);
  scenario_opts(exp);
  auto* list = app.add_subcommand("scenarios", "list built-in scenarios and their parameters");
  list->add_flag("--json", c.json_output, "print a JSON document");
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--host", c.host, "bind address");
  serve->add_option("--port", c.port, "port; 0 picks a free one");
  serve->add_option("--traces", c.trace_dir, "directory of traces to preload");
  serve->add_option("--capacity", c.capacity, "sessions kept in memory");
  serve->add_option("--cors-origin", c.cors_origin, "Access-Control-Allow-Origin value");
  serve->add_flag("--strict", c.strict, "orphan kernels are errors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    cli::print_error(c, out, err, error_name(ErrorCode::UsageError), e.what());
    return 2;
  }

  try {
    if (build->parsed()) return cli::cmd_build(c, out, err);
    if (sim->parsed()) return cli::cmd_simulate(c, out, err);
    if (whatif->parsed()) return cli::cmd_whatif(c, out, err);
    if (sweep->parsed()) return cli::cmd_sweep(c, out, err);
    if (gen->parsed()) return cli::cmd_gen(c, out, err);
    if (exp->parsed()) return cli::cmd_export(c, out, err);
    if (list->parsed()) return cli::cmd_scenarios(c, out, err);
    if (serve->parsed()) return cli::cmd_serve(c, out, err);
  } catch (const Error& e) {
    cli::print_error(c, out, err, e.name(), e.detail());
    return e.code() == ErrorCode::UsageError ? 2 : 1;
  }
  return 2;
}

}  // namespace whatif
