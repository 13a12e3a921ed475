#include "netdep/agent.hpp"

namespace netdep {

RippleAgent::RippleAgent(World& w, std::string machine, Collector& collector, uint64_t nonce)
    : world_(w), machine_(std::move(machine)), collector_(collector), nonce_(nonce) {}

void RippleAgent::install() {
    HookSet h;
    h.on_send = [this](World& w, ProcessId pid, SocketId sid, const Packet& p) {
        on_send(w, pid, sid, p);
    };
    h.on_transmit = [this](World& w, const Packet& p, SocketId sid) {
        return on_transmit(w, p, sid);
    };
    h.on_data_queued = [this](World& w, SocketId sid, const Packet& p) {
        on_data_queued(w, sid, p);
    };
    h.on_recv = [this](World& w, ProcessId pid, SocketId sid) { on_recv(w, pid, sid); };
    world_.attach_hooks(machine_, std::move(h));
}

void RippleAgent::register_target(ProcessId pid) {
    const Process& proc = world_.processes.at(pid);
    if (proc.ref.machine != machine_)
        throw EndpointError("cannot register foreign-host process " + proc.ref.name + " on " +
                            machine_);
    targets_.emplace(pid, Origin::manual);
}

DiscoveryIdentifier RippleAgent::fresh_id() {
    DiscoveryIdentifier id;
    uint64_t c = ++counter_;
    for (int i = 0; i < 8; ++i) id.bytes[i] = uint8_t(nonce_ >> (56 - 8 * i));
    for (int i = 0; i < 8; ++i) id.bytes[8 + i] = uint8_t(c >> (56 - 8 * i));
    return id;
}

void RippleAgent::on_send(World& w, ProcessId pid, SocketId sid, const Packet&) {
    (void)w;
    if (targets_.count(pid)) owned_sockets_[sid] = pid;
}

std::optional<Packet> RippleAgent::on_transmit(World& w, const Packet& p, SocketId sid) {
    auto owned = owned_sockets_.find(sid);
    if (owned == owned_sockets_.end()) return std::nullopt;
    if (sent_.count(sid)) return std::nullopt;
    if (p.payload.empty()) return std::nullopt;
    if (has_discovery_option(p)) return std::nullopt;  // never double-tag

    DiscoveryIdentifier id = fresh_id();
    InjectError err;
    auto tagged = inject_identifier(p, id, &err);
    if (!tagged) {
        // no room in the option region: leave the sent flag clear and retry
        // on the connection's next data packet
        return std::nullopt;
    }
    sent_.insert(sid);
    ++injections_;

    DiscoveryEvent ev;
    ev.id = id;
    ev.endpoint = w.processes.at(owned->second).ref;
    ev.role = EventRole::sender;
    ev.time = w.now();
    ev.from_initiator = w.sockets.at(sid).initiator;
    collector_.ingest(ev);
    return tagged;
}

void RippleAgent::on_data_queued(World& w, SocketId sid, const Packet& p) {
    (void)w;
    if (auto id = extract_identifier(p)) pending_.emplace(sid, *id);
}

void RippleAgent::on_recv(World& w, ProcessId pid, SocketId sid) {
    auto it = pending_.find(sid);
    if (it == pending_.end()) return;
    DiscoveryIdentifier id = it->second;
    pending_.erase(it);

    DiscoveryEvent ev;
    ev.id = id;
    ev.endpoint = w.processes.at(pid).ref;
    ev.role = EventRole::receiver;
    ev.time = w.now();
    collector_.ingest(ev);

    targets_.emplace(pid, Origin::discovered);
}

}  // namespace netdep
