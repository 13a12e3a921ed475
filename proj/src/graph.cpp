#include "netdep/graph.hpp"

#include <algorithm>
#include <sstream>

#include "json.hpp"

namespace netdep {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::ripple: return "ripple";
        case Provenance::fivetuple: return "fivetuple";
        case Provenance::conntrack: return "conntrack";
    }
    return "?";
}

GraphEdge* DependencyGraph::find_edge(const ProcessRef& a, const ProcessRef& b, Provenance prov,
                                      bool reverse) {
    for (GraphEdge& e : edges) {
        if (e.src == a && e.dst == b && e.provenance == prov && e.reverse == reverse) return &e;
    }
    return nullptr;
}

void DependencyGraph::add_edge(const ProcessRef& a, const ProcessRef& b, uint64_t t,
                               Provenance prov, bool reverse) {
    nodes.insert(a);
    nodes.insert(b);
    if (GraphEdge* e = find_edge(a, b, prov, reverse)) {
        e->connections += 1;
        e->first_seen = std::min(e->first_seen, t);
        e->activity.push_back(t);
        return;
    }
    GraphEdge e;
    e.src = a;
    e.dst = b;
    e.first_seen = t;
    e.provenance = prov;
    e.reverse = reverse;
    e.activity.push_back(t);
    edges.push_back(std::move(e));
}

void DependencyGraph::add_unresolved(const ProcessRef& p, const std::string& addr, bool outbound,
                                     uint64_t t, Provenance prov) {
    nodes.insert(p);
    for (UnresolvedEdge& u : unresolved) {
        if (u.process == p && u.address == addr && u.outbound == outbound &&
            u.provenance == prov) {
            u.first_seen = std::min(u.first_seen, t);
            return;
        }
    }
    unresolved.push_back(UnresolvedEdge{p, addr, outbound, t, prov});
}

std::vector<std::pair<std::string, std::string>> DependencyGraph::scored_pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const GraphEdge& e : edges) {
        if (e.reverse) continue;
        out.emplace_back(e.src.name, e.dst.name);
    }
    for (const UnresolvedEdge& u : unresolved) {
        if (u.outbound)
            out.emplace_back(u.process.name, "addr:" + u.address);
        else
            out.emplace_back("addr:" + u.address, u.process.name);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

DependencyGraph abstract_forwarders(const DependencyGraph& g, const std::set<ProcessRef>& fwd) {
    DependencyGraph out = g;
    for (const ProcessRef& f : fwd) {
        DependencyGraph next;
        next.nodes = out.nodes;
        next.nodes.erase(f);
        next.unresolved = out.unresolved;

        std::vector<GraphEdge> in_edges, out_edges, rest;
        for (const GraphEdge& e : out.edges) {
            if (e.dst == f && e.src == f) continue;  // degenerate self loop
            if (e.dst == f) in_edges.push_back(e);
            else if (e.src == f) out_edges.push_back(e);
            else rest.push_back(e);
        }
        next.edges = std::move(rest);
        for (const GraphEdge& in : in_edges) {
            for (const GraphEdge& oe : out_edges) {
                if (in.reverse != oe.reverse || in.provenance != oe.provenance) continue;
                if (in.src == oe.dst) continue;  // would collapse to a self loop
                uint64_t t = std::max(in.first_seen, oe.first_seen);
                if (GraphEdge* existing =
                        next.find_edge(in.src, oe.dst, in.provenance, in.reverse)) {
                    existing->first_seen = std::min(existing->first_seen, t);
                    existing->connections += std::min(in.connections, oe.connections);
                } else {
                    GraphEdge e;
                    e.src = in.src;
                    e.dst = oe.dst;
                    e.first_seen = t;
                    e.provenance = in.provenance;
                    e.reverse = in.reverse;
                    e.connections = std::min(in.connections, oe.connections);
                    e.activity = in.activity;
                    e.activity.insert(e.activity.end(), oe.activity.begin(), oe.activity.end());
                    std::sort(e.activity.begin(), e.activity.end());
                    next.edges.push_back(std::move(e));
                }
            }
        }
        out = std::move(next);
    }
    return out;
}

namespace {

std::string node_key(const ProcessRef& r) {
    return r.machine + "/" + std::to_string(r.pid);
}

bool edge_active(const GraphEdge& e, const std::optional<std::pair<uint64_t, uint64_t>>& win) {
    if (!win) return true;
    for (uint64_t t : e.activity) {
        if (t >= win->first && t <= win->second) return true;
    }
    return false;
}

std::vector<const GraphEdge*> sorted_edges(const DependencyGraph& g) {
    std::vector<const GraphEdge*> es;
    for (const GraphEdge& e : g.edges) es.push_back(&e);
    std::sort(es.begin(), es.end(), [](const GraphEdge* a, const GraphEdge* b) {
        auto ka = std::tie(a->src, a->dst, a->provenance, a->reverse);
        auto kb = std::tie(b->src, b->dst, b->provenance, b->reverse);
        return ka < kb;
    });
    return es;
}

std::vector<const UnresolvedEdge*> sorted_unresolved(const DependencyGraph& g) {
    std::vector<const UnresolvedEdge*> us;
    for (const UnresolvedEdge& u : g.unresolved) us.push_back(&u);
    std::sort(us.begin(), us.end(), [](const UnresolvedEdge* a, const UnresolvedEdge* b) {
        auto ka = std::tie(a->process, a->address, a->outbound, a->provenance);
        auto kb = std::tie(b->process, b->address, b->outbound, b->provenance);
        return ka < kb;
    });
    return us;
}

}  // namespace

std::string export_dot(const DependencyGraph& g, const ExportMeta& meta) {
    std::ostringstream os;
    os << "digraph dependencies {\n";
    os << "  rankdir=LR;\n";
    os << "  node [shape=box, fontsize=10];\n";
    if (!meta.scenario.empty()) {
        os << "  label=\"" << meta.scenario << " (" << meta.agent << ")\";\n";
    }

    // cluster nodes by machine
    std::map<std::string, std::vector<const ProcessRef*>> by_machine;
    for (const ProcessRef& r : g.nodes) by_machine[r.machine].push_back(&r);
    for (auto& [machine, refs] : by_machine) {
        os << "  subgraph \"cluster_" << machine << "\" {\n";
        os << "    label=\"" << machine << "\";\n";
        for (const ProcessRef* r : refs) {
            os << "    \"" << node_key(*r) << "\" [label=\"" << r->name << "\\n" << r->cgroup
               << " pid=" << r->pid << "\"];\n";
        }
        os << "  }\n";
    }

    std::set<std::string> synth;
    for (const UnresolvedEdge& u : g.unresolved) synth.insert(u.address);
    for (const std::string& s : synth) {
        os << "  \"" << s << "\" [shape=ellipse, style=dashed];\n";
    }

    for (const GraphEdge* e : sorted_edges(g)) {
        os << "  \"" << node_key(e->src) << "\" -> \"" << node_key(e->dst) << "\" [label=\""
           << to_string(e->provenance) << " x" << e->connections << "\"";
        if (e->reverse) os << ", color=gray, constraint=false";
        if (!edge_active(*e, meta.window)) os << ", style=dotted";
        os << "];\n";
    }
    for (const UnresolvedEdge* u : sorted_unresolved(g)) {
        if (u->outbound)
            os << "  \"" << node_key(u->process) << "\" -> \"" << u->address << "\"";
        else
            os << "  \"" << u->address << "\" -> \"" << node_key(u->process) << "\"";
        os << " [style=dashed, label=\"" << to_string(u->provenance) << "\"];\n";
    }
    os << "}\n";
    return os.str();
}

std::string export_json(const DependencyGraph& g, const ExportMeta& meta) {
    ordered_json j;
    j["schema"] = "netdep-graph/1";
    ordered_json run;
    run["scenario"] = meta.scenario;
    run["agent"] = meta.agent;
    run["seed"] = meta.seed;
    run["ticks"] = meta.ticks;
    if (meta.window) {
        run["window"] = {{"start", meta.window->first}, {"end", meta.window->second}};
    }
    j["run"] = std::move(run);

    ordered_json nodes = ordered_json::array();
    for (const ProcessRef& r : g.nodes) {
        nodes.push_back({{"machine", r.machine},
                         {"pid", r.pid},
                         {"cgroup", r.cgroup},
                         {"name", r.name}});
    }
    j["nodes"] = std::move(nodes);

    ordered_json edges = ordered_json::array();
    for (const GraphEdge* e : sorted_edges(g)) {
        ordered_json je;
        je["src"] = {{"machine", e->src.machine}, {"pid", e->src.pid}, {"name", e->src.name}};
        je["dst"] = {{"machine", e->dst.machine}, {"pid", e->dst.pid}, {"name", e->dst.name}};
        je["first_seen"] = e->first_seen;
        je["provenance"] = to_string(e->provenance);
        je["connections"] = e->connections;
        je["reverse"] = e->reverse;
        if (meta.window) je["active"] = edge_active(*e, meta.window);
        edges.push_back(std::move(je));
    }
    j["edges"] = std::move(edges);

    ordered_json unresolved = ordered_json::array();
    for (const UnresolvedEdge* u : sorted_unresolved(g)) {
        unresolved.push_back({{"process",
                               {{"machine", u->process.machine},
                                {"pid", u->process.pid},
                                {"name", u->process.name}}},
                              {"address", u->address},
                              {"direction", u->outbound ? "outbound" : "inbound"},
                              {"first_seen", u->first_seen},
                              {"provenance", to_string(u->provenance)}});
    }
    j["unresolved"] = std::move(unresolved);
    return j.dump(2) + "\n";
}

void Collector::ingest(const DiscoveryEvent& ev) {
    std::lock_guard<std::mutex> lock(mu_);
    Pending& p = pending_[ev.id];
    if (ev.role == EventRole::sender) {
        if (p.sender)
            throw ProtocolViolation("duplicate sender event for identifier " + ev.id.to_hex());
        p.sender = ev;
    } else {
        if (p.receiver)
            throw ProtocolViolation("duplicate receiver event for identifier " + ev.id.to_hex());
        p.receiver = ev;
    }
    try_join(p);
}

void Collector::try_join(Pending& p) {
    if (!p.sender || !p.receiver) return;
    uint64_t t = std::max(p.sender->time, p.receiver->time);
    bool reverse = !p.sender->from_initiator;
    bool fresh = graph_.find_edge(p.sender->endpoint, p.receiver->endpoint, Provenance::ripple,
                                  reverse) == nullptr;
    graph_.add_edge(p.sender->endpoint, p.receiver->endpoint, t, Provenance::ripple, reverse);
    if (fresh) {
        last_edge_tick_ = std::max(last_edge_tick_, t);
        if (!reverse) last_forward_edge_tick_ = std::max(last_forward_edge_tick_, t);
    }
}

void Collector::ingest(const FlowRecord& rec) {
    std::lock_guard<std::mutex> lock(mu_);
    flows_.push_back(rec);
}

Collector::Diagnostics Collector::diagnostics() const {
    Diagnostics d;
    for (const auto& [id, p] : pending_) {
        if (p.sender && !p.receiver) ++d.unpaired_senders;
        if (p.receiver && !p.sender) ++d.unpaired_receivers;
    }
    return d;
}

}  // namespace netdep
