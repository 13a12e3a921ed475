#include "netdep/baseline.hpp"

#include <algorithm>
#include <map>

namespace netdep {

ConntrackView::ConntrackView(const World& w, std::string machine)
    : world_(w), machine_(std::move(machine)) {}

std::vector<ConntrackEntry> ConntrackView::local_entries() const {
    std::vector<ConntrackEntry> out;
    for (NodeId n = 0; n < world_.node_count(); ++n) {
        if (world_.node(n).machine != machine_) continue;
        const auto& entries = world_.conntrack_of(n);
        out.insert(out.end(), entries.begin(), entries.end());
    }
    return out;
}

const std::vector<ConntrackEntry>& ConntrackView::entries_of(NodeId node) const {
    if (world_.node(node).machine != machine_) {
        throw CapabilityError("conntrack of node " + world_.node(node).name +
                              " is outside the administrative scope of " + machine_);
    }
    return world_.conntrack_of(node);
}

FiveTuple ConntrackView::resolve(const FiveTuple& t) const {
    for (const ConntrackEntry& e : local_entries()) {
        // outbound socket view: the flow as it first entered the local NAT
        if (t == e.orig) return e.reply.inverted();
        // inbound socket view: the flow after local de-NAT
        if (t == e.reply.inverted()) return e.orig;
    }
    return t;
}

PassiveObserver::PassiveObserver(World& w, std::string machine, Collector& collector,
                                 bool use_conntrack)
    : world_(w), machine_(std::move(machine)), collector_(collector),
      use_conntrack_(use_conntrack) {}

void PassiveObserver::install() {
    HookSet h;
    h.on_send = [this](World& w, ProcessId pid, SocketId sid, const Packet& p) {
        on_send(w, pid, sid, p);
    };
    h.on_data_queued = [this](World& w, SocketId sid, const Packet& p) {
        on_data_queued(w, sid, p);
    };
    world_.attach_hooks(machine_, std::move(h));
}

void PassiveObserver::on_send(World& w, ProcessId pid, SocketId sid, const Packet&) {
    const Socket& s = w.sockets.at(sid);
    if (!s.initiator || recorded_.count(sid)) return;
    recorded_.insert(sid);

    FlowRecord r;
    r.host = machine_;
    r.local_process = w.processes.at(pid).ref;
    r.tuple = FiveTuple{6, s.local_ip, s.local_port, s.remote_ip, s.remote_port};
    if (use_conntrack_) r.tuple = ConntrackView(w, machine_).resolve(r.tuple);
    r.outbound = true;
    r.time = w.now();
    collector_.ingest(r);
}

void PassiveObserver::on_data_queued(World& w, SocketId sid, const Packet&) {
    const Socket& s = w.sockets.at(sid);
    if (s.initiator || recorded_.count(sid)) return;
    recorded_.insert(sid);

    FlowRecord r;
    r.host = machine_;
    r.local_process = w.processes.at(s.owner).ref;
    // original direction: remote initiated toward this socket
    r.tuple = FiveTuple{6, s.remote_ip, s.remote_port, s.local_ip, s.local_port};
    if (use_conntrack_) r.tuple = ConntrackView(w, machine_).resolve(r.tuple);
    r.outbound = false;
    r.time = w.now();
    collector_.ingest(r);
}

namespace {

std::string synthetic_address(const World& w, const IpAddr& ip, uint16_t port) {
    std::vector<NodeId> owners = w.owners_of(ip);
    std::set<std::string> machines;
    for (NodeId n : owners) machines.insert(w.node(n).machine);
    std::string addr = ip.to_string() + ":" + std::to_string(port);
    if (machines.size() == 1) return *machines.begin() + ":" + addr;
    return addr;  // unknown or ambiguous ownership
}

}  // namespace

void resolve_flow_records(Collector& c, const World& w, Provenance prov) {
    std::map<FiveTuple, std::vector<const FlowRecord*>> inbound;
    std::vector<const FlowRecord*> outbound;
    for (const FlowRecord& r : c.flow_records()) {
        if (r.outbound) outbound.push_back(&r);
        else inbound[r.tuple].push_back(&r);
    }
    // records accumulate in event order; keep matching deterministic
    for (auto& [t, v] : inbound) {
        std::reverse(v.begin(), v.end());  // pop_back consumes oldest first
    }

    DependencyGraph& g = c.graph();
    for (const FlowRecord* out : outbound) {
        auto it = inbound.find(out->tuple);
        if (it != inbound.end() && !it->second.empty()) {
            const FlowRecord* in = it->second.back();
            it->second.pop_back();
            g.add_edge(out->local_process, in->local_process, std::max(out->time, in->time),
                       prov, /*reverse=*/false);
            continue;
        }
        g.add_unresolved(out->local_process,
                         synthetic_address(w, out->tuple.dst_ip, out->tuple.dst_port),
                         /*outbound=*/true, out->time, prov);
    }
    for (const auto& [t, v] : inbound) {
        for (const FlowRecord* in : v) {
            g.add_unresolved(in->local_process,
                             synthetic_address(w, in->tuple.src_ip, in->tuple.src_port),
                             /*outbound=*/false, in->time, prov);
        }
    }
}

}  // namespace netdep
