#include "netdep/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "netdep/baseline.hpp"
#include "netdep/rng.hpp"
#include "netdep/topology.hpp"

namespace netdep {

using ordered_json = nlohmann::ordered_json;

MetricsReport compute_metrics(const std::vector<std::pair<std::string, std::string>>& found,
                              const std::vector<std::pair<std::string, std::string>>& truth) {
    std::set<std::pair<std::string, std::string>> f(found.begin(), found.end());
    std::set<std::pair<std::string, std::string>> t(truth.begin(), truth.end());
    size_t correct = 0;
    for (const auto& e : f) correct += t.count(e);

    MetricsReport m;
    m.discovered_edges = f.size();
    m.ground_truth_edges = t.size();
    m.precision = f.empty() ? std::nan("") : double(correct) / double(f.size());
    m.recall = t.empty() ? std::nan("") : double(correct) / double(t.size());
    if (std::isnan(m.precision) || std::isnan(m.recall) || m.precision + m.recall == 0.0) {
        m.f1 = std::nan("");
    } else {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

namespace {

ordered_json json_number_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

std::vector<uint8_t> padded_payload(std::string base, uint64_t min_len) {
    while (base.size() < min_len) base.push_back('.');
    return std::vector<uint8_t>(base.begin(), base.end());
}

struct EdgeDriver {
    SocketId sock = kNoSocket;
    bool connecting = false;
    bool established = false;
    bool dead = false;
    std::vector<std::vector<uint8_t>> queued;
};

}  // namespace

std::string metrics_to_json(const MetricsReport& m, const std::string& scenario,
                            const std::string& agent, uint64_t seed) {
    ordered_json j;
    j["scenario"] = scenario;
    j["agent"] = agent;
    j["seed"] = seed;
    j["precision"] = json_number_or_null(m.precision);
    j["recall"] = json_number_or_null(m.recall);
    j["f1"] = json_number_or_null(m.f1);
    j["discovered_edges"] = m.discovered_edges;
    j["ground_truth_edges"] = m.ground_truth_edges;
    j["time_to_completion"] = m.time_to_completion;
    j["unpaired_events"] = m.unpaired_events;
    ordered_json und = ordered_json::array();
    for (const auto& [a, b] : m.undiscoverable) und.push_back({a, b});
    j["undiscoverable"] = std::move(und);
    return j.dump(2) + "\n";
}

RunResult run_scenario(const Scenario& input, const RunOptions& opts) {
    Scenario s = input;
    if (opts.agent) s.agent = *opts.agent;
    if (opts.seed) s.seed = *opts.seed;
    if (opts.agent_hosts) s.agent_hosts = *opts.agent_hosts;
    s.validate();

    World world(s.seed);
    Collector collector;

    // --- network -----------------------------------------------------------
    std::optional<Deployment> deployment;
    std::map<std::string, DialAddress> advertised;  // explicit topologies
    if (s.net_template) {
        std::vector<ServiceSpec> specs;
        for (const ScenarioService& svc : s.services)
            specs.push_back(ServiceSpec{svc.name, svc.host, svc.port});
        deployment = build_deployment(world, *s.net_template, s.hosts, specs);
    } else {
        build_topology(world, *s.explicit_topology);
        for (const ScenarioService& svc : s.services) {
            size_t colon = svc.advertise.rfind(':');
            if (colon == std::string::npos)
                throw ScenarioError("bad advertise address for " + svc.name);
            advertised[svc.name] = DialAddress{
                IpAddr::parse(svc.advertise.substr(0, colon)),
                uint16_t(std::stoi(svc.advertise.substr(colon + 1)))};
        }
    }
    for (const std::string& n : s.strip_options_at) {
        world.node(world.node_by_name(n)).strip_unknown_options = true;
    }

    // --- processes ----------------------------------------------------------
    RunResult result;
    std::map<std::string, ProcessId> service_pid;
    for (const ScenarioService& svc : s.services) {
        NodeId node;
        std::string cgroup;
        uint16_t bind_port;
        if (deployment) {
            const ServicePlacement& p = deployment->services.at(svc.name);
            node = p.node;
            cgroup = p.cgroup;
            bind_port = p.bind_port;
        } else {
            node = world.node_by_name(svc.node);
            cgroup = "system.slice";
            bind_port = svc.port;
        }
        ProcessId pid = spawn_process(world, node, svc.name, cgroup);
        service_pid[svc.name] = pid;
        result.service_refs[svc.name] = world.processes[pid].ref;
        listen_on(world, pid, IpAddr::v4(0, 0, 0, 0), bind_port);

        if (s.mode == WorkloadMode::request_response) {
            std::string svc_name = svc.name;
            uint64_t pad = s.payload_bytes;
            world.processes[pid].on_data = [svc_name, pad](World& w, ProcessId, SocketId sid,
                                                           std::span<const uint8_t>) {
                const Socket& sock = w.sockets.at(sid);
                if (sock.initiator) return;  // response arriving back at a client
                send_on(w, sid, padded_payload("r:" + svc_name, pad));
            };
        }
    }

    if (deployment) {
        for (const ForwarderPlan& f : deployment->forwarders) {
            ProcessId pid =
                spawn_forwarder(world, f.node, f.listen_port, f.target_ip, f.target_port);
            result.forwarders.insert(world.processes[pid].ref);
        }
    }

    // --- agents --------------------------------------------------------------
    std::vector<std::string> machines;
    if (deployment) {
        machines = deployment->machines;
    } else {
        std::set<std::string> ms;
        for (const auto& [name, pid] : service_pid) ms.insert(world.processes[pid].ref.machine);
        machines.assign(ms.begin(), ms.end());
    }
    auto machine_enabled = [&](const std::string& m) {
        if (s.agent_hosts.empty()) return true;
        return std::find(s.agent_hosts.begin(), s.agent_hosts.end(), m) != s.agent_hosts.end();
    };

    std::vector<std::unique_ptr<RippleAgent>> agents;
    std::vector<std::unique_ptr<PassiveObserver>> observers;
    std::map<std::string, RippleAgent*> agent_by_machine;
    if (s.agent == AgentKind::ripple) {
        std::set<uint64_t> nonces;
        for (const std::string& m : machines) {
            if (!machine_enabled(m)) continue;
            uint64_t nonce = fnv1a64(m) ^ (s.seed * 0x9e3779b97f4a7c15ULL);
            while (!nonces.insert(nonce).second) ++nonce;
            agents.push_back(std::make_unique<RippleAgent>(world, m, collector, nonce));
            agents.back()->install();
            agent_by_machine[m] = agents.back().get();
        }
    } else if (s.agent == AgentKind::fivetuple || s.agent == AgentKind::conntrack) {
        bool ct = s.agent == AgentKind::conntrack;
        for (const std::string& m : machines) {
            if (!machine_enabled(m)) continue;
            observers.push_back(std::make_unique<PassiveObserver>(world, m, collector, ct));
            observers.back()->install();
        }
    }

    for (const std::string& b : s.bootstrap) {
        ProcessId pid = service_pid.at(b);
        result.bootstrap_pids.push_back(pid);
        const std::string machine = world.processes[pid].ref.machine;
        auto it = agent_by_machine.find(machine);
        if (it == agent_by_machine.end()) continue;  // no agent on that host
        RippleAgent* agent = it->second;
        world.schedule(0, EventKind::process_action, "bootstrap " + b,
                       [agent, pid](World&) { agent->register_target(pid); });
    }

    // --- workload -------------------------------------------------------------
    auto dial_address = [&](const std::string& from, const std::string& to) {
        if (deployment) return deployment->dial(from, to);
        return advertised.at(to);
    };

    std::vector<std::shared_ptr<EdgeDriver>> drivers;
    for (const WorkloadEntry& e : s.workload) {
        auto driver = std::make_shared<EdgeDriver>();
        drivers.push_back(driver);
        ProcessId client = service_pid.at(e.from);
        DialAddress addr = dial_address(e.from, e.to);
        uint64_t pad = s.payload_bytes;
        std::string label = e.from + ">" + e.to;

        for (uint64_t k = 0; k < e.count; ++k) {
            uint64_t at = e.start + k * e.period;
            std::vector<uint8_t> payload =
                padded_payload("m:" + label + ":" + std::to_string(k), pad);
            world.schedule(
                at, EventKind::process_action, "request " + label + " #" + std::to_string(k),
                [driver, client, addr, payload = std::move(payload)](World& w) {
                    if (driver->dead) return;
                    if (driver->established) {
                        send_on(w, driver->sock, payload);
                        return;
                    }
                    driver->queued.push_back(payload);
                    if (driver->connecting) return;
                    driver->connecting = true;
                    connect_to(w, client, addr.ip, addr.port,
                               [driver](World& w2, SocketId sid, bool ok) {
                                   if (!ok) {
                                       driver->dead = true;
                                       driver->queued.clear();
                                       return;
                                   }
                                   driver->sock = sid;
                                   driver->established = true;
                                   for (auto& q : driver->queued) send_on(w2, sid, std::move(q));
                                   driver->queued.clear();
                               });
                });
        }
    }

    // --- run --------------------------------------------------------------------
    world.run();

    if (s.agent == AgentKind::fivetuple)
        resolve_flow_records(collector, world, Provenance::fivetuple);
    if (s.agent == AgentKind::conntrack)
        resolve_flow_records(collector, world, Provenance::conntrack);

    // --- results ------------------------------------------------------------------
    result.scenario = s;
    result.diagnostics = collector.diagnostics();
    result.raw_graph = collector.graph();
    result.graph = result.forwarders.empty()
                       ? result.raw_graph
                       : abstract_forwarders(result.raw_graph, result.forwarders);
    for (const auto& a : agents) {
        for (const auto& [pid, origin] : a->targets()) result.targets.emplace(pid, origin);
    }

    result.metrics = compute_metrics(result.graph.scored_pairs(), s.ground_truth);
    // completion: when the dependency graph proper stops growing (reverse
    // bookkeeping edges excluded), relative to the tick-0 bootstrap
    result.metrics.time_to_completion = collector.last_forward_edge_tick();
    result.metrics.unpaired_events =
        result.diagnostics.unpaired_senders + result.diagnostics.unpaired_receivers;
    std::set<std::pair<std::string, std::string>> driven;
    for (const WorkloadEntry& e : s.workload) driven.emplace(e.from, e.to);
    for (const auto& gt : s.ground_truth) {
        if (!driven.count(gt)) result.metrics.undiscoverable.push_back(gt);
    }

    result.app_trace = world.app_trace;
    result.msg_trace = world.msg_trace;
    result.wire_hash = world.wire_trace_hash();
    for (const WireTraceEntry& e : world.wire_trace)
        result.wire_trace_lines.push_back(e.to_string());
    result.final_tick = world.now();
    return result;
}

std::vector<MatrixCell> run_matrix(const std::vector<Scenario>& scenarios, int jobs) {
    const AgentKind agents[] = {AgentKind::ripple, AgentKind::fivetuple, AgentKind::conntrack};
    struct Job {
        const Scenario* scenario;
        AgentKind agent;
    };
    std::vector<Job> todo;
    for (const Scenario& s : scenarios) {
        for (AgentKind a : agents) todo.push_back(Job{&s, a});
    }

    std::vector<MatrixCell> cells(todo.size());
    auto run_one = [&](size_t i) {
        RunOptions o;
        o.agent = todo[i].agent;
        RunResult r = run_scenario(*todo[i].scenario, o);
        cells[i] = MatrixCell{todo[i].scenario->name, todo[i].agent, r.metrics};
    };

    if (jobs <= 1) {
        for (size_t i = 0; i < todo.size(); ++i) run_one(i);
    } else {
        std::vector<std::future<void>> fs;
        size_t next = 0;
        while (next < todo.size()) {
            while (fs.size() < size_t(jobs) && next < todo.size()) {
                fs.push_back(std::async(std::launch::async, run_one, next++));
            }
            for (auto& f : fs) f.get();
            fs.clear();
        }
    }
    return cells;
}

namespace {

std::string fmt_metric(double v) {
    if (std::isnan(v)) return "NaN";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string matrix_table(const std::vector<MatrixCell>& cells) {
    std::vector<std::string> scenarios;
    for (const MatrixCell& c : cells) {
        if (std::find(scenarios.begin(), scenarios.end(), c.scenario) == scenarios.end())
            scenarios.push_back(c.scenario);
    }
    auto cell = [&](const std::string& sc, AgentKind a) -> const MatrixCell* {
        for (const MatrixCell& c : cells) {
            if (c.scenario == sc && c.agent == a) return &c;
        }
        return nullptr;
    };

    std::ostringstream os;
    size_t width = 12;
    for (const std::string& sc : scenarios) width = std::max(width, sc.size() + 2);
    os << std::string(22, ' ');
    for (const std::string& sc : scenarios) {
        os << sc;
        os << std::string(width - sc.size(), ' ');
    }
    os << "\n";
    const AgentKind order[] = {AgentKind::ripple, AgentKind::fivetuple, AgentKind::conntrack};
    for (AgentKind a : order) {
        for (const char* metric : {"precision", "recall", "f1"}) {
            std::string row = to_string(a) + " " + metric;
            os << row << std::string(22 - row.size(), ' ');
            for (const std::string& sc : scenarios) {
                const MatrixCell* c = cell(sc, a);
                std::string v = "-";
                if (c) {
                    if (metric == std::string("precision")) v = fmt_metric(c->metrics.precision);
                    else if (metric == std::string("recall")) v = fmt_metric(c->metrics.recall);
                    else v = fmt_metric(c->metrics.f1);
                }
                os << v << std::string(width - v.size(), ' ');
            }
            os << "\n";
        }
    }
    return os.str();
}

std::string matrix_json(const std::vector<MatrixCell>& cells) {
    std::vector<const MatrixCell*> sorted;
    for (const MatrixCell& c : cells) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(), [](const MatrixCell* a, const MatrixCell* b) {
        return std::tie(a->scenario, a->agent) < std::tie(b->scenario, b->agent);
    });
    ordered_json arr = ordered_json::array();
    for (const MatrixCell* c : sorted) {
        ordered_json j;
        j["scenario"] = c->scenario;
        j["agent"] = to_string(c->agent);
        j["precision"] = json_number_or_null(c->metrics.precision);
        j["recall"] = json_number_or_null(c->metrics.recall);
        j["f1"] = json_number_or_null(c->metrics.f1);
        j["discovered_edges"] = c->metrics.discovered_edges;
        j["ground_truth_edges"] = c->metrics.ground_truth_edges;
        j["time_to_completion"] = c->metrics.time_to_completion;
        arr.push_back(std::move(j));
    }
    ordered_json root;
    root["schema"] = "netdep-matrix/1";
    root["results"] = std::move(arr);
    return root.dump(2) + "\n";
}

}  // namespace netdep
