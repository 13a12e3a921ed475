#include "netdep/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "netdep/rng.hpp"

namespace netdep {

using ordered_json = nlohmann::ordered_json;

std::string to_string(AgentKind a) {
    switch (a) {
        case AgentKind::none: return "none";
        case AgentKind::ripple: return "ripple";
        case AgentKind::fivetuple: return "fivetuple";
        case AgentKind::conntrack: return "conntrack";
    }
    return "?";
}

AgentKind agent_from_string(const std::string& s) {
    if (s == "none") return AgentKind::none;
    if (s == "ripple") return AgentKind::ripple;
    if (s == "fivetuple") return AgentKind::fivetuple;
    if (s == "conntrack") return AgentKind::conntrack;
    throw ScenarioError("unknown agent: " + s);
}

void Scenario::validate() const {
    if (name.empty()) throw ScenarioError("scenario needs a name");
    if (!net_template && !explicit_topology)
        throw ScenarioError("scenario needs a network template or an explicit topology");
    if (net_template && hosts < 1) throw ScenarioError("template network needs hosts >= 1");

    std::set<std::string> names;
    for (const ScenarioService& s : services) {
        if (s.name.empty()) throw ScenarioError("service without a name");
        if (!names.insert(s.name).second) throw ScenarioError("duplicate service " + s.name);
        if (net_template) {
            if (s.host < 0 || s.host >= hosts)
                throw ScenarioError("service " + s.name + " placed on missing host");
            if (s.port == 0) throw ScenarioError("service " + s.name + " needs a port");
        } else {
            if (s.node.empty() || s.advertise.empty())
                throw ScenarioError("service " + s.name +
                                    " needs node and advertise for explicit topologies");
        }
    }
    auto known = [&](const std::string& n) { return names.count(n) > 0; };
    for (const auto& [a, b] : ground_truth) {
        if (!known(a) || !known(b))
            throw ScenarioError("ground truth references unknown service " + a + "->" + b);
        if (a == b) throw ScenarioError("self edge in ground truth: " + a);
    }
    for (const WorkloadEntry& e : workload) {
        if (!known(e.from) || !known(e.to))
            throw ScenarioError("workload references unknown service " + e.from + "->" + e.to);
        if (e.count < 1) throw ScenarioError("workload entry with zero count");
        if (e.period == 0) throw ScenarioError("workload entry with zero period");
        if (e.start == 0) throw ScenarioError("workload must start at tick >= 1");
    }
    for (const std::string& b : bootstrap) {
        if (!known(b)) throw ScenarioError("bootstrap references unknown service " + b);
    }
}

namespace {

ExplicitTopology explicit_from_json(const ordered_json& j) {
    ExplicitTopology t;
    for (const auto& s : j.value("segments", ordered_json::array())) {
        t.segments.push_back({s.at("name"), s.value("latency", uint64_t(1))});
    }
    for (const auto& n : j.value("nodes", ordered_json::array())) {
        t.nodes.push_back({n.at("name"), n.value("machine", std::string()),
                           n.value("strip_unknown_options", false)});
    }
    for (const auto& i : j.value("interfaces", ordered_json::array())) {
        t.interfaces.push_back({i.at("node"), i.at("name"), i.at("ip"), i.at("segment")});
    }
    for (const auto& r : j.value("routes", ordered_json::array())) {
        t.routes.push_back(
            {r.at("node"), r.at("prefix"), r.at("via"), r.value("next_hop", std::string())});
    }
    for (const auto& ru : j.value("nat_rules", ordered_json::array())) {
        ExplicitTopology::Rule rule;
        rule.node = ru.at("node");
        rule.chain = ru.at("chain");
        rule.in_interface = ru.value("in_interface", std::string());
        rule.in_interface_negate = ru.value("in_interface_negate", false);
        rule.src = ru.value("src", std::string());
        rule.dst = ru.value("dst", std::string());
        rule.dst_port = ru.value("dst_port", -1);
        rule.to_ip = ru.at("to_ip");
        rule.to_port = ru.value("to_port", -1);
        t.nat_rules.push_back(std::move(rule));
    }
    return t;
}

ordered_json explicit_to_json(const ExplicitTopology& t) {
    ordered_json j;
    ordered_json segs = ordered_json::array();
    for (const auto& s : t.segments) segs.push_back({{"name", s.name}, {"latency", s.latency}});
    j["segments"] = segs;
    ordered_json nodes = ordered_json::array();
    for (const auto& n : t.nodes) {
        ordered_json jn{{"name", n.name}, {"machine", n.machine}};
        if (n.strip_unknown_options) jn["strip_unknown_options"] = true;
        nodes.push_back(jn);
    }
    j["nodes"] = nodes;
    ordered_json ifs = ordered_json::array();
    for (const auto& i : t.interfaces) {
        ifs.push_back(
            {{"node", i.node}, {"name", i.name}, {"ip", i.ip}, {"segment", i.segment}});
    }
    j["interfaces"] = ifs;
    ordered_json routes = ordered_json::array();
    for (const auto& r : t.routes) {
        ordered_json jr{{"node", r.node}, {"prefix", r.prefix}, {"via", r.via}};
        if (!r.next_hop.empty()) jr["next_hop"] = r.next_hop;
        routes.push_back(jr);
    }
    j["routes"] = routes;
    ordered_json rules = ordered_json::array();
    for (const auto& ru : t.nat_rules) {
        ordered_json jr{{"node", ru.node}, {"chain", ru.chain}};
        if (!ru.in_interface.empty()) {
            jr["in_interface"] = ru.in_interface;
            if (ru.in_interface_negate) jr["in_interface_negate"] = true;
        }
        if (!ru.src.empty()) jr["src"] = ru.src;
        if (!ru.dst.empty()) jr["dst"] = ru.dst;
        if (ru.dst_port >= 0) jr["dst_port"] = ru.dst_port;
        jr["to_ip"] = ru.to_ip;
        if (ru.to_port >= 0) jr["to_port"] = ru.to_port;
        rules.push_back(jr);
    }
    j["nat_rules"] = rules;
    return j;
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    Scenario s;
    s.name = j.value("name", std::string());
    s.seed = j.value("seed", uint64_t(1));

    const auto& net = j.at("network");
    if (net.contains("template")) {
        s.net_template = net_template_from_string(net.at("template"));
        s.hosts = net.value("hosts", 0);
    } else if (net.contains("explicit")) {
        s.explicit_topology = explicit_from_json(net.at("explicit"));
    }

    for (const auto& js : j.value("services", ordered_json::array())) {
        ScenarioService svc;
        svc.name = js.at("name");
        svc.host = js.value("host", -1);
        svc.port = uint16_t(js.value("port", 0));
        svc.node = js.value("node", std::string());
        svc.advertise = js.value("advertise", std::string());
        s.services.push_back(std::move(svc));
    }
    for (const auto& je : j.value("ground_truth", ordered_json::array())) {
        s.ground_truth.emplace_back(je.at(0), je.at(1));
    }
    for (const auto& jw : j.value("workload", ordered_json::array())) {
        WorkloadEntry e;
        e.from = jw.at("edge").at(0);
        e.to = jw.at("edge").at(1);
        e.start = jw.value("start", uint64_t(1));
        e.period = jw.value("period", uint64_t(50));
        e.count = jw.value("count", uint64_t(1));
        s.workload.push_back(std::move(e));
    }
    for (const auto& jb : j.value("bootstrap", ordered_json::array())) {
        s.bootstrap.push_back(jb);
    }
    s.agent = agent_from_string(j.value("agent", std::string("ripple")));
    s.mode = j.value("mode", std::string("request-response")) == "one-way"
                 ? WorkloadMode::one_way
                 : WorkloadMode::request_response;
    if (j.contains("options")) {
        const auto& o = j.at("options");
        for (const auto& h : o.value("agent_hosts", ordered_json::array()))
            s.agent_hosts.push_back(h);
        for (const auto& n : o.value("strip_options_at", ordered_json::array()))
            s.strip_options_at.push_back(n);
        s.payload_bytes = o.value("payload_bytes", uint64_t(0));
    }
    return s;
}

std::string scenario_to_json(const Scenario& s) {
    ordered_json j;
    j["name"] = s.name;
    j["seed"] = s.seed;
    ordered_json net;
    if (s.net_template) {
        net["template"] = to_string(*s.net_template);
        net["hosts"] = s.hosts;
    } else if (s.explicit_topology) {
        net["explicit"] = explicit_to_json(*s.explicit_topology);
    }
    j["network"] = std::move(net);

    ordered_json services = ordered_json::array();
    for (const ScenarioService& svc : s.services) {
        ordered_json js{{"name", svc.name}};
        if (s.net_template) {
            js["host"] = svc.host;
            js["port"] = svc.port;
        } else {
            js["node"] = svc.node;
            js["port"] = svc.port;
            js["advertise"] = svc.advertise;
        }
        services.push_back(std::move(js));
    }
    j["services"] = std::move(services);

    ordered_json gt = ordered_json::array();
    for (const auto& [a, b] : s.ground_truth) gt.push_back({a, b});
    j["ground_truth"] = std::move(gt);

    ordered_json wl = ordered_json::array();
    for (const WorkloadEntry& e : s.workload) {
        wl.push_back({{"edge", {e.from, e.to}},
                      {"start", e.start},
                      {"period", e.period},
                      {"count", e.count}});
    }
    j["workload"] = std::move(wl);

    ordered_json bs = ordered_json::array();
    for (const std::string& b : s.bootstrap) bs.push_back(b);
    j["bootstrap"] = std::move(bs);
    j["agent"] = to_string(s.agent);
    j["mode"] = s.mode == WorkloadMode::one_way ? "one-way" : "request-response";

    if (!s.agent_hosts.empty() || !s.strip_options_at.empty() || s.payload_bytes) {
        ordered_json o;
        if (!s.agent_hosts.empty()) o["agent_hosts"] = s.agent_hosts;
        if (!s.strip_options_at.empty()) o["strip_options_at"] = s.strip_options_at;
        if (s.payload_bytes) o["payload_bytes"] = s.payload_bytes;
        j["options"] = std::move(o);
    }
    return j.dump(2) + "\n";
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    Scenario s = scenario_from_json(ss.str());
    s.validate();
    return s;
}

Scenario generate_scenario(BenchmarkKind kind, NetTemplate net, int hosts, uint64_t seed) {
    BenchmarkGraph g = benchmark_graph(kind);
    if (hosts <= 0) hosts = int(g.services.size());

    Scenario s;
    s.name = to_string(kind) + "-" + to_string(net);
    s.seed = seed;
    s.net_template = net;
    s.hosts = hosts;
    s.agent = AgentKind::ripple;

    for (size_t i = 0; i < g.services.size(); ++i) {
        ScenarioService svc;
        svc.name = g.services[i];
        svc.host = int(i) % hosts;
        svc.port = uint16_t(5000 + i);
        s.services.push_back(std::move(svc));
    }
    s.ground_truth = g.edges;
    for (const auto& [a, b] : g.edges) {
        WorkloadEntry e;
        e.from = a;
        e.to = b;
        DetRng rng = sub_rng(seed, "workload:" + a + ">" + b);
        e.period = 50;
        e.start = 1 + rng.below(e.period);
        e.count = 5;
        s.workload.push_back(std::move(e));
    }
    s.bootstrap = {g.bootstrap};
    return s;
}

}  // namespace netdep
