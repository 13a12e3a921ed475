#include "netdep/endpoint.hpp"

#include <map>
#include <memory>

#include "netdep/netsim.hpp"
#include "netdep/rng.hpp"

namespace netdep {

namespace {

bool is_wildcard(const IpAddr& a) {
    for (uint8_t b : a.bytes)
        if (b) return false;
    return true;
}

std::string process_label(const World& w, ProcessId pid) {
    const ProcessRef& r = w.processes.at(pid).ref;
    return r.machine + "/" + r.name + "/" + std::to_string(r.pid);
}

std::string socket_endpoint(const Socket& s) {
    return s.local_ip.to_string() + ":" + std::to_string(s.local_port) + "->" +
           s.remote_ip.to_string() + ":" + std::to_string(s.remote_port);
}

void app_event(World& w, AppEvent::Kind kind, ProcessId pid, const Socket& s,
               std::vector<uint8_t> payload = {}) {
    AppEvent e;
    e.tick = w.now();
    e.kind = kind;
    e.process = process_label(w, pid);
    e.endpoint = socket_endpoint(s);
    e.payload = std::move(payload);
    w.app_trace.push_back(std::move(e));
}

const std::vector<HookSet>* node_hooks(World& w, NodeId node) {
    return w.hooks_for_machine(w.node(node).machine);
}

void fire_on_send(World& w, ProcessId pid, SocketId sid, const Packet& p) {
    if (const auto* hs = node_hooks(w, w.sockets.at(sid).node)) {
        for (const HookSet& h : *hs)
            if (h.on_send) h.on_send(w, pid, sid, p);
    }
}

Packet fire_on_transmit(World& w, Packet p, SocketId sid) {
    if (const auto* hs = node_hooks(w, w.sockets.at(sid).node)) {
        for (const HookSet& h : *hs) {
            if (!h.on_transmit) continue;
            if (auto replaced = h.on_transmit(w, p, sid)) p = std::move(*replaced);
        }
    }
    return p;
}

uint32_t initial_seq(const World& w, SocketId sid) {
    uint64_t s = w.seed() ^ (0x5eedULL + sid * 0x9e3779b97f4a7c15ULL);
    return uint32_t(splitmix64(s) & 0xffffff);
}

uint16_t allocate_ephemeral(World& w, NodeId node) {
    NetNode& n = w.node(node);
    for (int tries = 0; tries < 20000; ++tries) {
        uint16_t candidate = n.next_ephemeral_port;
        n.next_ephemeral_port = candidate >= 60000 ? 40000 : uint16_t(candidate + 1);
        bool taken = w.listeners.count({node, candidate}) > 0;
        for (const Socket& s : w.sockets) {
            if (s.node == node && s.state != SockState::closed && s.local_port == candidate)
                taken = true;
        }
        if (!taken) return candidate;
    }
    throw EndpointError("ephemeral port space exhausted");
}

// Source address selection: the IP of the interface the route to dst uses.
IpAddr source_address_for(World& w, NodeId node, const IpAddr& dst) {
    const NetNode& n = w.node(node);
    const RouteEntry* best = nullptr;
    for (const RouteEntry& r : n.routes) {
        if (!r.prefix.contains(dst)) continue;
        if (!best || r.prefix.prefix_len > best->prefix.prefix_len) best = &r;
    }
    if (!best) throw EndpointError("no route from " + n.name + " to " + dst.to_string());
    return w.iface(best->via).ip;
}

Packet control_packet(const Socket& s, uint8_t flags, uint32_t seq, uint32_t ack) {
    return make_tcp_packet(s.local_ip, s.local_port, s.remote_ip, s.remote_port, seq, ack, flags);
}

void deliver_established(World& w, Socket& s) {
    s.state = SockState::established;
    app_event(w, AppEvent::Kind::established, s.owner, s);
}

}  // namespace

ProcessId spawn_process(World& w, NodeId node, const std::string& name,
                        const std::string& cgroup) {
    Process p;
    p.ref.machine = w.node(node).machine;
    p.ref.pid = w.next_pid++;
    p.ref.cgroup = cgroup;
    p.ref.name = name;
    p.node = node;
    w.processes.push_back(std::move(p));
    return ProcessId(w.processes.size() - 1);
}

SocketId listen_on(World& w, ProcessId pid, const IpAddr& addr, uint16_t port) {
    NodeId node = w.processes.at(pid).node;
    if (w.listeners.count({node, port}))
        throw EndpointError("address in use: port " + std::to_string(port) + " on " +
                            w.node(node).name);
    Socket s;
    s.id = SocketId(w.sockets.size());
    s.owner = pid;
    s.node = node;
    s.state = SockState::listening;
    s.local_ip = addr;
    s.local_port = port;
    w.sockets.push_back(s);
    w.listeners[{node, port}] = s.id;
    return s.id;
}

SocketId connect_to(World& w, ProcessId pid, const IpAddr& dst, uint16_t port,
                    std::function<void(World&, SocketId, bool)> on_connected) {
    NodeId node = w.processes.at(pid).node;
    Socket s;
    s.id = SocketId(w.sockets.size());
    s.owner = pid;
    s.node = node;
    s.state = SockState::connecting;
    s.initiator = true;
    s.local_ip = source_address_for(w, node, dst);
    s.local_port = allocate_ephemeral(w, node);
    s.remote_ip = dst;
    s.remote_port = port;
    s.on_connected = std::move(on_connected);
    s.snd_next = initial_seq(w, s.id);
    w.sockets.push_back(s);

    Packet syn = control_packet(w.sockets.back(), tcpflag::syn, w.sockets.back().snd_next, 0);
    w.originate(node, std::move(syn), FlightCtx{0, pid});
    return s.id;
}

void send_on(World& w, SocketId sid, std::vector<uint8_t> payload) {
    Socket& s = w.sockets.at(sid);
    if (s.state != SockState::established)
        throw EndpointError("send on non-established socket " + std::to_string(sid));
    if (payload.empty()) throw EndpointError("empty payload");

    Packet p = make_tcp_packet(s.local_ip, s.local_port, s.remote_ip, s.remote_port, s.snd_next,
                               s.rcv_next, uint8_t(tcpflag::psh | tcpflag::ack), payload,
                               s.fixed_options);
    s.snd_next += uint32_t(payload.size());

    uint64_t msg = w.next_msg_id();
    w.msg_trace.push_back(
        MsgEvent{MsgEvent::Kind::send, w.next_trace_order(), w.now(), msg, s.owner});

    ProcessId owner = s.owner;
    NodeId node = s.node;
    fire_on_send(w, owner, sid, p);
    p = fire_on_transmit(w, std::move(p), sid);
    w.originate(node, std::move(p), FlightCtx{msg, owner});
}

void close_socket(World& w, SocketId sid) {
    Socket& s = w.sockets.at(sid);
    if (s.state == SockState::closed) return;
    if (s.state == SockState::listening) {
        w.listeners.erase({s.node, s.local_port});
        s.state = SockState::closed;
        return;
    }
    bool was_established = s.state == SockState::established;
    s.state = SockState::closed;
    app_event(w, AppEvent::Kind::closed, s.owner, s);
    if (was_established) {
        Packet fin = control_packet(s, uint8_t(tcpflag::fin | tcpflag::ack), s.snd_next, s.rcv_next);
        w.originate(s.node, std::move(fin), FlightCtx{0, s.owner});
    }
}

// --- inbound ---------------------------------------------------------------

void endpoint_local_deliver(World& w, NodeId node, const Packet& p, const FlightCtx& ctx) {
    const FiveTuple t = tuple_of(p);

    // connected-socket match first
    SocketId match = kNoSocket;
    for (Socket& s : w.sockets) {
        if (s.node != node || s.state == SockState::listening || s.state == SockState::closed)
            continue;
        if (s.local_ip == t.dst_ip && s.local_port == t.dst_port && s.remote_ip == t.src_ip &&
            s.remote_port == t.src_port) {
            match = s.id;
            break;
        }
    }

    if (match == kNoSocket) {
        // listener handling (SYN only)
        auto it = w.listeners.find({node, t.dst_port});
        if (it != w.listeners.end()) {
            const SocketId lst_id = it->second;
            const ProcessId lst_owner = w.sockets.at(lst_id).owner;
            bool addr_ok = is_wildcard(w.sockets.at(lst_id).local_ip) ||
                           w.sockets.at(lst_id).local_ip == t.dst_ip;
            if (addr_ok && (p.tcp.flags & tcpflag::syn) && !(p.tcp.flags & tcpflag::ack)) {
                Socket s;
                s.id = SocketId(w.sockets.size());
                s.owner = lst_owner;
                s.node = node;
                s.state = SockState::connecting;  // syn-received
                s.initiator = false;
                s.local_ip = t.dst_ip;
                s.local_port = t.dst_port;
                s.remote_ip = t.src_ip;
                s.remote_port = t.src_port;
                s.listener = lst_id;
                s.snd_next = initial_seq(w, s.id);
                s.rcv_next = p.tcp.seq + 1;
                w.sockets.push_back(s);
                Packet synack = control_packet(w.sockets.back(),
                                               uint8_t(tcpflag::syn | tcpflag::ack),
                                               w.sockets.back().snd_next, p.tcp.seq + 1);
                w.originate(node, std::move(synack), FlightCtx{0, lst_owner});
                return;
            }
        }
        if ((p.tcp.flags & tcpflag::syn) && !(p.tcp.flags & tcpflag::ack)) {
            // no listener: refuse
            Packet rst = make_tcp_packet(t.dst_ip, t.dst_port, t.src_ip, t.src_port, 0,
                                         p.tcp.seq + 1, uint8_t(tcpflag::rst | tcpflag::ack));
            w.originate(node, std::move(rst), FlightCtx{});
            return;
        }
        return;  // stray segment, nothing to do
    }

    Socket& s = w.sockets.at(match);

    if (p.tcp.flags & tcpflag::rst) {
        if (s.state == SockState::connecting && s.initiator) {
            s.state = SockState::closed;
            app_event(w, AppEvent::Kind::refused, s.owner, s);
            if (s.on_connected) {
                auto cb = s.on_connected;
                cb(w, s.id, false);
            }
        } else {
            s.state = SockState::closed;
        }
        return;
    }

    if (s.state == SockState::connecting && s.initiator && (p.tcp.flags & tcpflag::syn) &&
        (p.tcp.flags & tcpflag::ack)) {
        s.snd_next += 1;
        s.rcv_next = p.tcp.seq + 1;
        deliver_established(w, s);
        Packet ack = control_packet(s, tcpflag::ack, s.snd_next, s.rcv_next);
        w.originate(node, std::move(ack), FlightCtx{0, s.owner});
        if (s.on_connected) {
            auto cb = s.on_connected;
            cb(w, s.id, true);
        }
        return;
    }

    if (s.state == SockState::connecting && !s.initiator && (p.tcp.flags & tcpflag::ack) &&
        !(p.tcp.flags & tcpflag::syn) && p.payload.empty() && !(p.tcp.flags & tcpflag::fin)) {
        s.snd_next += 1;
        deliver_established(w, s);
        Process& proc = w.processes.at(s.owner);
        if (proc.on_accept) proc.on_accept(w, s.owner, s.id);
        return;
    }

    if (p.tcp.flags & tcpflag::fin) {
        if (s.state != SockState::closed) {
            s.state = SockState::closed;
            app_event(w, AppEvent::Kind::closed, s.owner, s);
            Process& proc = w.processes.at(s.owner);
            if (proc.on_peer_closed) proc.on_peer_closed(w, s.owner, s.id);
        }
        return;
    }

    if (!p.payload.empty() && s.state == SockState::established) {
        // callbacks below may grow w.sockets; work from ids, not references
        const SocketId sid = s.id;
        const ProcessId owner = s.owner;
        s.rcv_next = p.tcp.seq + uint32_t(p.payload.size());

        // ingress hook order: packet queues onto the socket, then the
        // process wakes and reads
        if (const auto* hs = node_hooks(w, node)) {
            for (const HookSet& h : *hs)
                if (h.on_data_queued) h.on_data_queued(w, sid, p);
        }
        if (const auto* hs = node_hooks(w, node)) {
            for (const HookSet& h : *hs)
                if (h.on_recv) h.on_recv(w, owner, sid);
        }

        if (ctx.msg != 0) {
            w.msg_trace.push_back(
                MsgEvent{MsgEvent::Kind::read, w.next_trace_order(), w.now(), ctx.msg, owner});
        }
        app_event(w, AppEvent::Kind::read, owner, w.sockets.at(sid), p.payload);

        Process& proc = w.processes.at(owner);
        if (proc.on_data) proc.on_data(w, owner, sid, p.payload);
        return;
    }
}

// --- forwarder ---------------------------------------------------------------

namespace {

struct ForwarderState {
    std::map<SocketId, SocketId> peer;       // both directions once paired
    std::map<SocketId, bool> ready;          // downstream connected?
    std::map<SocketId, std::vector<std::vector<uint8_t>>> queued;  // keyed by upstream
};

}  // namespace

ProcessId spawn_forwarder(World& w, NodeId node, uint16_t listen_port, const IpAddr& target_ip,
                          uint16_t target_port) {
    ProcessId pid =
        spawn_process(w, node, "docker-proxy-" + std::to_string(listen_port), "system.slice");
    auto st = std::make_shared<ForwarderState>();

    Process& proc = w.processes.at(pid);
    proc.on_accept = [st, target_ip, target_port](World& ww, ProcessId me, SocketId up) {
        SocketId down = connect_to(
            ww, me, target_ip, target_port,
            [st, up](World& ww2, SocketId down2, bool ok) {
                if (!ok) {
                    st->peer.erase(up);
                    st->peer.erase(down2);
                    close_socket(ww2, up);
                    return;
                }
                st->ready[down2] = true;
                auto q = st->queued.find(up);
                if (q != st->queued.end()) {
                    for (auto& chunk : q->second) send_on(ww2, down2, std::move(chunk));
                    st->queued.erase(q);
                }
            });
        st->peer[up] = down;
        st->peer[down] = up;
        st->ready[down] = false;
    };
    proc.on_data = [st](World& ww, ProcessId, SocketId sid, std::span<const uint8_t> bytes) {
        auto it = st->peer.find(sid);
        if (it == st->peer.end()) return;
        SocketId other = it->second;
        const Socket& o = ww.sockets.at(other);
        std::vector<uint8_t> copy(bytes.begin(), bytes.end());
        if (o.state == SockState::established) {
            send_on(ww, other, std::move(copy));
        } else if (o.initiator && !st->ready[other]) {
            st->queued[sid].push_back(std::move(copy));  // downstream still connecting
        }
    };
    proc.on_peer_closed = [st](World& ww, ProcessId, SocketId sid) {
        auto it = st->peer.find(sid);
        if (it == st->peer.end()) return;
        SocketId other = it->second;
        st->peer.erase(sid);
        st->peer.erase(other);
        if (ww.sockets.at(other).state == SockState::established) close_socket(ww, other);
    };

    listen_on(w, pid, IpAddr::v4(0, 0, 0, 0), listen_port);
    return pid;
}

}  // namespace netdep
