#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netdep/agent.hpp"
#include "netdep/graph.hpp"
#include "netdep/scenario.hpp"

namespace netdep {

struct MetricsReport {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    uint64_t discovered_edges = 0;
    uint64_t ground_truth_edges = 0;
    uint64_t time_to_completion = 0;
    uint64_t unpaired_events = 0;
    std::vector<std::pair<std::string, std::string>> undiscoverable;
};

// precision = |found ∩ truth| / |found| (NaN for an empty found set),
// recall = |found ∩ truth| / |truth|, f1 = 2pr/(p+r) with 0/0 -> NaN.
MetricsReport compute_metrics(const std::vector<std::pair<std::string, std::string>>& found,
                              const std::vector<std::pair<std::string, std::string>>& truth);

std::string metrics_to_json(const MetricsReport& m, const std::string& scenario,
                            const std::string& agent, uint64_t seed);

struct RunOptions {
    std::optional<AgentKind> agent;
    std::optional<uint64_t> seed;
    std::optional<std::vector<std::string>> agent_hosts;
};

struct RunResult {
    Scenario scenario;  // with overrides applied
    DependencyGraph raw_graph;  // as collected
    DependencyGraph graph;      // forwarder-abstracted scoring view
    MetricsReport metrics;
    Collector::Diagnostics diagnostics;
    std::set<ProcessRef> forwarders;
    std::map<ProcessId, RippleAgent::Origin> targets;  // union over agents
    std::map<std::string, ProcessRef> service_refs;
    std::vector<ProcessId> bootstrap_pids;
    std::vector<AppEvent> app_trace;
    std::vector<MsgEvent> msg_trace;
    std::vector<std::string> wire_trace_lines;
    uint64_t wire_hash = 0;
    uint64_t final_tick = 0;
};

// Builds the world, attaches agents per scenario, drives the workload to
// completion, collects the graph (applying forwarder abstraction when the
// network introduces forwarders) and scores it against ground truth.
RunResult run_scenario(const Scenario& s, const RunOptions& opts = {});

struct MatrixCell {
    std::string scenario;
    AgentKind agent{};
    MetricsReport metrics;
};

// Runs every scenario against all three agents, optionally in parallel;
// results are ordered by (scenario, agent) regardless of worker timing.
std::vector<MatrixCell> run_matrix(const std::vector<Scenario>& scenarios, int jobs = 1);

std::string matrix_table(const std::vector<MatrixCell>& cells);
std::string matrix_json(const std::vector<MatrixCell>& cells);

}  // namespace netdep
