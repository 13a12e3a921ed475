#pragma once

#include <optional>
#include <string>
#include <vector>

#include "netdep/benchmark.hpp"
#include "netdep/topology.hpp"

namespace netdep {

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class AgentKind { none, ripple, fivetuple, conntrack };
std::string to_string(AgentKind a);
AgentKind agent_from_string(const std::string& s);

enum class WorkloadMode { request_response, one_way };

struct ScenarioService {
    std::string name;
    int host = -1;           // template placement
    uint16_t port = 0;
    std::string node;        // explicit-topology placement
    std::string advertise;   // explicit-topology dial address "ip:port"
};

struct WorkloadEntry {
    std::string from, to;
    uint64_t start = 1;
    uint64_t period = 50;
    uint64_t count = 1;
};

struct Scenario {
    std::string name;
    uint64_t seed = 1;

    // one of:
    std::optional<NetTemplate> net_template;
    int hosts = 0;
    std::optional<ExplicitTopology> explicit_topology;

    std::vector<ScenarioService> services;
    std::vector<std::pair<std::string, std::string>> ground_truth;
    std::vector<WorkloadEntry> workload;
    std::vector<std::string> bootstrap;
    AgentKind agent = AgentKind::ripple;
    WorkloadMode mode = WorkloadMode::request_response;

    // options
    std::vector<std::string> agent_hosts;      // empty: all machines
    std::vector<std::string> strip_options_at; // node names with the stripping flag
    uint64_t payload_bytes = 0;                // pad payloads up to this size

    void validate() const;  // throws ScenarioError
};

Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& s);
Scenario load_scenario_file(const std::string& path);

// Emits the benchmark graph as a runnable scenario: services placed
// round-robin over `hosts` (default one host per service), every dependency
// driven by a periodic request schedule with a seed-derived start offset.
Scenario generate_scenario(BenchmarkKind kind, NetTemplate net, int hosts = 0,
                           uint64_t seed = 1);

}  // namespace netdep
