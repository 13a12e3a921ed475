#include "netdep/netsim.hpp"

#include <algorithm>

#include "netdep/rng.hpp"

namespace netdep {

std::string FiveTuple::to_string() const {
    return src_ip.to_string() + ":" + std::to_string(src_port) + ">" + dst_ip.to_string() + ":" +
           std::to_string(dst_port);
}

FiveTuple tuple_of(const Packet& p) {
    return {p.ip.protocol, p.ip.src, p.tcp.src_port, p.ip.dst, p.tcp.dst_port};
}

std::string WireTraceEntry::to_string() const {
    std::string s = std::to_string(time) + " " + link + " @" + node + " " + before.to_string();
    if (!(after == before)) s += " => " + after.to_string();
    s += has_discovery_option ? " opt=1" : " opt=0";
    return s;
}

// --- construction ---------------------------------------------------------

SegmentId World::add_segment(const std::string& name, SimTime latency) {
    segments_.push_back(Segment{name, latency});
    return SegmentId(segments_.size() - 1);
}

NodeId World::add_node(const std::string& name, const std::string& machine) {
    if (node_names_.count(name)) throw TopologyError("duplicate node name: " + name);
    NetNode n;
    n.id = NodeId(nodes_.size());
    n.name = name;
    n.machine = machine;
    nodes_.push_back(std::move(n));
    node_names_[name] = nodes_.back().id;
    return nodes_.back().id;
}

InterfaceId World::add_interface(NodeId node, const std::string& ifname, const IpAddr& ip,
                                 SegmentId segment) {
    if (node >= nodes_.size()) throw TopologyError("interface on unknown node");
    if (segment >= segments_.size()) throw TopologyError("interface on unknown segment");
    Interface i;
    i.id = InterfaceId(interfaces_.size());
    i.node = node;
    i.name = ifname;
    i.ip = ip;
    i.segment = segment;
    interfaces_.push_back(i);
    nodes_[node].interfaces.push_back(i.id);
    return i.id;
}

void World::add_route(NodeId node, const IpPrefix& prefix, InterfaceId via,
                      std::optional<IpAddr> next_hop) {
    if (node >= nodes_.size()) throw TopologyError("route on unknown node");
    if (via >= interfaces_.size() || interfaces_[via].node != node)
        throw TopologyError("route via foreign interface");
    nodes_[node].routes.push_back(RouteEntry{prefix, via, next_hop});
}

void World::add_nat_rule(NodeId node, const NatRule& rule) {
    nodes_.at(node).nat_rules.push_back(rule);
}

NodeId World::node_by_name(const std::string& name) const {
    auto it = node_names_.find(name);
    if (it == node_names_.end()) throw TopologyError("unknown node: " + name);
    return it->second;
}

void World::validate_topology() const {
    // address uniqueness within each segment
    std::map<std::pair<SegmentId, IpAddr>, std::string> seen;
    for (const Interface& i : interfaces_) {
        auto key = std::make_pair(i.segment, i.ip);
        auto [it, fresh] = seen.emplace(key, nodes_[i.node].name);
        if (!fresh) {
            throw TopologyError("duplicate address " + i.ip.to_string() + " on segment " +
                                segments_[i.segment].name + " (" + it->second + ", " +
                                nodes_[i.node].name + ")");
        }
    }
    for (const NetNode& n : nodes_) {
        for (const RouteEntry& r : n.routes) {
            if (r.via >= interfaces_.size()) throw TopologyError("route via unknown interface");
            if (r.next_hop) {
                // next hop must be resolvable on the route's segment
                SegmentId seg = interfaces_[r.via].segment;
                bool found = false;
                for (const Interface& i : interfaces_) {
                    if (i.segment == seg && i.ip == *r.next_hop) found = true;
                }
                if (!found) {
                    throw TopologyError("dangling next hop " + r.next_hop->to_string() +
                                        " from node " + n.name);
                }
            }
        }
    }
}

// --- event loop -------------------------------------------------------------

void World::schedule(SimTime at, EventKind kind, std::string what,
                     std::function<void(World&)> fn) {
    if (at < now_) throw SimError("scheduling into the past");
    queue_.push(QueuedEvent{at, event_seq_++, kind, std::move(what), std::move(fn)});
}

void World::schedule_in(SimTime delay, EventKind kind, std::string what,
                        std::function<void(World&)> fn) {
    schedule(now_ + delay, kind, std::move(what), std::move(fn));
}

std::optional<SimEvent> World::step() {
    if (queue_.empty()) return std::nullopt;
    QueuedEvent ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    SimEvent out{ev.time, ev.seq, ev.kind, ev.what};
    ev.fn(*this);
    return out;
}

void World::run(uint64_t max_events) {
    uint64_t n = 0;
    while (step()) {
        if (++n > max_events) throw SimError("event budget exceeded; runaway simulation");
    }
}

// --- NAT ---------------------------------------------------------------------

namespace {

bool rule_matches(const NatRule& r, const FiveTuple& t, const std::string& in_iface) {
    const NatMatch& m = r.match;
    if (m.in_interface) {
        bool same = *m.in_interface == in_iface;
        if (m.in_interface_negate ? same : !same) return false;
    }
    if (m.protocol && *m.protocol != t.protocol) return false;
    if (m.src && !m.src->contains(t.src_ip)) return false;
    if (m.dst && !m.dst->contains(t.dst_ip)) return false;
    if (m.dst_port && *m.dst_port != t.dst_port) return false;
    return true;
}

void apply_tuple(Packet& p, const FiveTuple& t) {
    rewrite_addressing(p, &t.src_ip, &t.src_port, &t.dst_ip, &t.dst_port);
}

}  // namespace

uint16_t World::allocate_snat_port(NetNode& n, const IpAddr& translated_ip, uint16_t wanted) {
    auto in_use = [&](uint16_t port) {
        for (const ConntrackEntry& e : n.conntrack) {
            FiveTuple wire = e.reply.inverted();  // post-NAT forward direction
            if (wire.src_ip == translated_ip && wire.src_port == port) return true;
        }
        return false;
    };
    if (wanted != 0 && !in_use(wanted)) return wanted;
    for (int attempts = 0; attempts < 65536; ++attempts) {
        uint16_t candidate = n.next_snat_port;
        n.next_snat_port = candidate == 65535 ? 32768 : uint16_t(candidate + 1);
        if (!in_use(candidate)) return candidate;
    }
    throw SimError("snat port space exhausted on " + n.name);
}

Packet World::apply_nat(NodeId node_id, Packet p, NatPhase phase, const std::string& in_interface,
                        bool* translated, bool* conntrack_handled) {
    NetNode& n = nodes_.at(node_id);
    FiveTuple t = tuple_of(p);
    if (translated) *translated = false;
    if (conntrack_handled) *conntrack_handled = false;

    if (phase == NatPhase::prerouting) {
        // Established flows bypass rule evaluation entirely: forward packets
        // re-apply the stored translation, replies invert it.
        for (const ConntrackEntry& e : n.conntrack) {
            if (t == e.orig) {
                apply_tuple(p, e.reply.inverted());
                if (translated) *translated = true;
                if (conntrack_handled) *conntrack_handled = true;
                return p;
            }
            if (t == e.reply) {
                apply_tuple(p, e.orig.inverted());
                if (translated) *translated = true;
                if (conntrack_handled) *conntrack_handled = true;
                return p;
            }
        }
        for (const NatRule& r : n.nat_rules) {
            if (r.chain != NatChain::dnat || !rule_matches(r, t, in_interface)) continue;
            FiveTuple after = t;
            after.dst_ip = r.translate.ip;
            if (r.translate.port) after.dst_port = *r.translate.port;
            apply_tuple(p, after);
            n.conntrack.push_back(ConntrackEntry{t, after.inverted()});
            if (translated) *translated = true;
            return p;
        }
        return p;
    }

    // post-routing SNAT
    for (ConntrackEntry& e : n.conntrack) {
        if (e.reply.inverted() != t) continue;
        // Flow already tracked. If its source half is still untranslated
        // (fresh DNAT from this traversal), SNAT may complete the entry;
        // otherwise the packet is fully translated already.
        bool src_pending = e.orig.src_ip == t.src_ip && e.orig.src_port == t.src_port;
        if (src_pending) {
            for (const NatRule& r : n.nat_rules) {
                if (r.chain != NatChain::snat || !rule_matches(r, t, in_interface)) continue;
                FiveTuple after = t;
                after.src_ip = r.translate.ip;
                after.src_port = allocate_snat_port(n, after.src_ip,
                                                    r.translate.port.value_or(t.src_port));
                apply_tuple(p, after);
                e.reply = after.inverted();
                if (translated) *translated = true;
                return p;
            }
        }
        return p;
    }
    for (const NatRule& r : n.nat_rules) {
        if (r.chain != NatChain::snat || !rule_matches(r, t, in_interface)) continue;
        FiveTuple after = t;
        after.src_ip = r.translate.ip;
        after.src_port = allocate_snat_port(n, after.src_ip, r.translate.port.value_or(t.src_port));
        apply_tuple(p, after);
        n.conntrack.push_back(ConntrackEntry{t, after.inverted()});
        if (translated) *translated = true;
        return p;
    }
    return p;
}

// --- forwarding --------------------------------------------------------------

bool World::local_address(NodeId node, const IpAddr& ip) const {
    for (InterfaceId i : nodes_[node].interfaces) {
        if (interfaces_[i].ip == ip) return true;
    }
    return false;
}

void World::drop(NodeId node, const std::string& reason, const Packet& p) {
    drops.push_back(DropEvent{now_, nodes_[node].name, reason, tuple_of(p)});
}

void World::attach_hooks(const std::string& machine, HookSet hooks) {
    hooks_[machine].push_back(std::move(hooks));
}

const std::vector<HookSet>* World::hooks_for_machine(const std::string& machine) const {
    auto it = hooks_.find(machine);
    return it == hooks_.end() ? nullptr : &it->second;
}

std::vector<NodeId> World::owners_of(const IpAddr& ip) const {
    std::vector<NodeId> out;
    for (const Interface& i : interfaces_) {
        if (i.ip == ip) out.push_back(i.node);
    }
    return out;
}

uint64_t World::wire_trace_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (const WireTraceEntry& e : wire_trace) {
        h ^= fnv1a64(e.to_string());
        h *= 1099511628211ULL;
        h ^= e.packet_hash;
        h *= 1099511628211ULL;
    }
    return h;
}

void World::originate(NodeId from, Packet p, const FlightCtx& ctx) {
    // Locally originated reply traffic of a NAT-tracked flow must be
    // translated before routing (does not arise in the shipped templates,
    // but keeps the primitive honest).
    NetNode& n = nodes_.at(from);
    FiveTuple t = tuple_of(p);
    for (const ConntrackEntry& e : n.conntrack) {
        if (t == e.reply) {
            apply_tuple(p, e.orig.inverted());
            break;
        }
    }

    if (local_address(from, p.ip.dst)) {
        // loopback-style delivery between processes sharing a namespace
        schedule_in(1, EventKind::packet_arrival,
                    "loopback " + tuple_of(p).to_string() + " at " + n.name,
                    [this, from, p = std::move(p), ctx](World&) mutable {
                        WireTraceEntry e;
                        e.time = now_;
                        e.link = "lo";
                        e.node = nodes_[from].name;
                        e.before = tuple_of(p);
                        e.after = e.before;
                        e.has_discovery_option = has_discovery_option(p);
                        std::vector<uint8_t> wire = serialize(p);
                        e.packet_hash = fnv1a64(std::string_view(
                            reinterpret_cast<const char*>(wire.data()), wire.size()));
                        wire_trace.push_back(e);
                        endpoint_local_deliver(*this, from, p, ctx);
                    });
        return;
    }

    route_and_emit(from, std::move(p), "", /*locally_originated=*/true, /*skip_nat=*/false, ctx);
}

void World::route_and_emit(NodeId node_id, Packet p, const std::string& in_iface_name,
                           bool locally_originated, bool skip_nat, FlightCtx ctx) {
    NetNode& n = nodes_.at(node_id);

    if (!locally_originated) {
        if (p.ip.ttl <= 1) {
            drop(node_id, "ttl exhausted", p);
            return;
        }
        p.ip.ttl = uint8_t(p.ip.ttl - 1);
        finalize(p);
        if (!skip_nat) p = apply_nat(node_id, std::move(p), NatPhase::postrouting, in_iface_name);
        if (n.strip_unknown_options) {
            // Middlebox option stripping: keep only well-known kinds.
            auto known = [](uint8_t k) { return k == 1 || (k >= 2 && k <= 5) || k == 8; };
            std::vector<TcpOption> kept;
            for (TcpOption& o : p.tcp.options) {
                if (known(o.kind)) kept.push_back(std::move(o));
            }
            if (kept.size() != p.tcp.options.size()) {
                p.tcp.options = std::move(kept);
                finalize(p);
            }
        }
    }

    // longest prefix match; first declared wins among equal lengths
    const RouteEntry* best = nullptr;
    for (const RouteEntry& r : n.routes) {
        if (!r.prefix.contains(p.ip.dst)) continue;
        if (!best || r.prefix.prefix_len > best->prefix.prefix_len) best = &r;
    }
    if (!best) {
        drop(node_id, "no route", p);
        return;
    }

    const Interface& out = interfaces_.at(best->via);
    IpAddr hop_ip = best->next_hop.value_or(p.ip.dst);
    const Interface* target = nullptr;
    for (const Interface& i : interfaces_) {
        if (i.segment == out.segment && i.id != out.id && i.ip == hop_ip) {
            target = &i;
            break;
        }
    }
    if (!target) {
        drop(node_id, "unreachable next hop " + hop_ip.to_string(), p);
        return;
    }

    const Segment& seg = segments_.at(out.segment);
    InterfaceId target_id = target->id;
    schedule_in(seg.latency, EventKind::packet_arrival,
                "arrival " + tuple_of(p).to_string() + " at " + nodes_[target->node].name,
                [this, target_id, p = std::move(p), ctx](World&) mutable {
                    const Interface& in = interfaces_.at(target_id);
                    node_receive(in.node, std::move(p), target_id, ctx);
                });
}

void World::node_receive(NodeId node_id, Packet p, InterfaceId in_iface, FlightCtx ctx) {
    const std::string& in_name = interfaces_.at(in_iface).name;
    FiveTuple before = tuple_of(p);

    if (verify_checksums_on_links) {
        if (!verify_tcp_checksum(p) || !verify_ip_checksum(p)) {
            throw SimError("checksum verification failed at " + nodes_[node_id].name + " for " +
                           before.to_string());
        }
    }

    bool conntrack_handled = false;
    p = apply_nat(node_id, std::move(p), NatPhase::prerouting, in_name, nullptr,
                  &conntrack_handled);

    WireTraceEntry e;
    e.time = now_;
    e.link = segments_.at(interfaces_.at(in_iface).segment).name;
    e.node = nodes_[node_id].name;
    e.before = before;
    e.after = tuple_of(p);
    e.has_discovery_option = has_discovery_option(p);
    std::vector<uint8_t> wire = serialize(p);
    e.packet_hash = fnv1a64(std::string_view(reinterpret_cast<const char*>(wire.data()),
                                             wire.size()));
    wire_trace.push_back(e);

    if (local_address(node_id, p.ip.dst)) {
        endpoint_local_deliver(*this, node_id, p, ctx);
        return;
    }
    route_and_emit(node_id, std::move(p), in_name, /*locally_originated=*/false,
                   /*skip_nat=*/conntrack_handled, ctx);
}

}  // namespace netdep
