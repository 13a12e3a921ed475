#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "netdep/addr.hpp"
#include "netdep/endpoint.hpp"
#include "netdep/packet.hpp"

namespace netdep {

using SimTime = uint64_t;
using SegmentId = uint32_t;
using InterfaceId = uint32_t;

struct TopologyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- network model -------------------------------------------------------

// An L2 broadcast domain; interfaces attach to exactly one segment and
// addresses must be unique within it (overlap across segments is fine and
// deliberate in the external-NAT layout).
struct Segment {
    std::string name;
    SimTime latency = 1;  // ticks per traversal
};

struct Interface {
    InterfaceId id = 0;
    NodeId node = kNoNode;
    std::string name;
    IpAddr ip;
    SegmentId segment = 0;
};

struct RouteEntry {
    IpPrefix prefix;
    InterfaceId via = 0;
    std::optional<IpAddr> next_hop;  // empty: destination is on-link
};

struct FiveTuple {
    uint8_t protocol = 6;
    IpAddr src_ip;
    uint16_t src_port = 0;
    IpAddr dst_ip;
    uint16_t dst_port = 0;

    FiveTuple inverted() const { return {protocol, dst_ip, dst_port, src_ip, src_port}; }
    std::string to_string() const;
    auto operator<=>(const FiveTuple&) const = default;
};

FiveTuple tuple_of(const Packet& p);

enum class NatChain { dnat, snat };

struct NatMatch {
    std::optional<std::string> in_interface;  // interface name on the owning node
    bool in_interface_negate = false;
    std::optional<uint8_t> protocol;
    std::optional<IpPrefix> src;
    std::optional<IpPrefix> dst;
    std::optional<uint16_t> dst_port;
};

struct NatTranslate {
    IpAddr ip;
    std::optional<uint16_t> port;
};

// First match within a chain wins; DNAT runs pre-routing, SNAT post-routing.
struct NatRule {
    NatChain chain{};
    NatMatch match;
    NatTranslate translate;
};

// Per-connection translation state. orig is the flow as first seen entering
// this node; reply is what return traffic looks like on arrival.
struct ConntrackEntry {
    FiveTuple orig;
    FiveTuple reply;
};

struct NetNode {
    NodeId id = kNoNode;
    std::string name;
    std::string machine;  // physical host this namespace belongs to
    std::vector<InterfaceId> interfaces;
    std::vector<RouteEntry> routes;
    std::vector<NatRule> nat_rules;
    std::vector<ConntrackEntry> conntrack;
    uint16_t next_snat_port = 32768;
    uint16_t next_ephemeral_port = 40000;
    // Middlebox failure-mode switch: drop TCP options this node does not
    // recognize when forwarding.
    bool strip_unknown_options = false;
};

// --- events --------------------------------------------------------------

enum class EventKind { packet_arrival, process_action, timer };

struct SimEvent {
    SimTime time = 0;
    uint64_t seq = 0;  // insertion order; ties execute in this order
    EventKind kind{};
    std::string what;
};

struct WireTraceEntry {
    SimTime time = 0;
    std::string link;      // segment name
    std::string node;      // node the packet arrived at
    FiveTuple before;      // as arrived
    FiveTuple after;       // after NAT at this node ("local" keeps before)
    bool has_discovery_option = false;
    uint64_t packet_hash = 0;  // over full wire bytes, for passivity checks

    std::string to_string() const;
};

struct DropEvent {
    SimTime time = 0;
    std::string node;
    std::string reason;
    FiveTuple tuple;
};

// --- the world -----------------------------------------------------------

class World {
  public:
    explicit World(uint64_t seed = 0) : seed_(seed) {}

    // network construction
    SegmentId add_segment(const std::string& name, SimTime latency = 1);
    NodeId add_node(const std::string& name, const std::string& machine);
    InterfaceId add_interface(NodeId node, const std::string& ifname, const IpAddr& ip,
                              SegmentId segment);
    void add_route(NodeId node, const IpPrefix& prefix, InterfaceId via,
                   std::optional<IpAddr> next_hop = std::nullopt);
    void add_nat_rule(NodeId node, const NatRule& rule);

    NodeId node_by_name(const std::string& name) const;
    NetNode& node(NodeId id) { return nodes_.at(id); }
    const NetNode& node(NodeId id) const { return nodes_.at(id); }
    const Interface& iface(InterfaceId id) const { return interfaces_.at(id); }
    const Segment& segment(SegmentId id) const { return segments_.at(id); }
    size_t node_count() const { return nodes_.size(); }

    // Validates cross-references and per-segment address uniqueness; called
    // by the topology builders after construction.
    void validate_topology() const;

    // event loop
    SimTime now() const { return now_; }
    void schedule(SimTime at, EventKind kind, std::string what, std::function<void(World&)> fn);
    void schedule_in(SimTime delay, EventKind kind, std::string what,
                     std::function<void(World&)> fn);
    std::optional<SimEvent> step();            // run the earliest event
    void run(uint64_t max_events = 100000000);  // drain the queue
    bool idle() const { return queue_.empty(); }

    // packet plane
    // Entry point for locally originated traffic (post on_transmit hooks).
    void originate(NodeId from, Packet p, const FlightCtx& ctx);
    // NAT primitive, also used directly by tests. conntrack_handled reports
    // that an established flow's stored translation was applied; such
    // packets must not re-enter rule evaluation at post-routing.
    enum class NatPhase { prerouting, postrouting };
    Packet apply_nat(NodeId node, Packet p, NatPhase phase,
                     const std::string& in_interface = "", bool* translated = nullptr,
                     bool* conntrack_handled = nullptr);

    const std::vector<ConntrackEntry>& conntrack_of(NodeId node) const {
        return nodes_.at(node).conntrack;
    }

    // agent attachment, keyed by machine label
    void attach_hooks(const std::string& machine, HookSet hooks);
    const std::vector<HookSet>* hooks_for_machine(const std::string& machine) const;

    // address registry helpers (used by the collector-side matchers)
    std::vector<NodeId> owners_of(const IpAddr& ip) const;

    // verification tap: recompute checksums at every arrival
    bool verify_checksums_on_links = true;

    // traces
    std::vector<WireTraceEntry> wire_trace;
    std::vector<DropEvent> drops;
    std::vector<AppEvent> app_trace;
    std::vector<MsgEvent> msg_trace;
    uint64_t wire_trace_hash() const;

    uint64_t seed() const { return seed_; }
    uint64_t next_msg_id() { return ++msg_counter_; }
    uint64_t next_trace_order() { return ++trace_order_; }

    // endpoint state (managed by endpoint.cpp)
    std::vector<Process> processes;
    std::vector<Socket> sockets;
    // (node, port) -> listening socket
    std::map<std::pair<NodeId, uint16_t>, SocketId> listeners;

    uint32_t next_pid = 1000;

  private:
    struct QueuedEvent {
        SimTime time;
        uint64_t seq;
        EventKind kind;
        std::string what;
        std::function<void(World&)> fn;
        bool operator>(const QueuedEvent& o) const {
            return time != o.time ? time > o.time : seq > o.seq;
        }
    };

    void node_receive(NodeId node, Packet p, InterfaceId in_iface, FlightCtx ctx);
    // Forwards or locally delivers; prerouting NAT already applied.
    void route_and_emit(NodeId node, Packet p, const std::string& in_iface_name,
                        bool locally_originated, bool skip_nat, FlightCtx ctx);
    bool local_address(NodeId node, const IpAddr& ip) const;
    void drop(NodeId node, const std::string& reason, const Packet& p);
    uint16_t allocate_snat_port(NetNode& n, const IpAddr& translated_ip, uint16_t wanted);

    uint64_t seed_;
    SimTime now_ = 0;
    uint64_t event_seq_ = 0;
    uint64_t msg_counter_ = 0;
    uint64_t trace_order_ = 0;
    std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, std::greater<QueuedEvent>> queue_;

    std::vector<Segment> segments_;
    std::vector<NetNode> nodes_;
    std::vector<Interface> interfaces_;
    std::map<std::string, NodeId> node_names_;
    std::map<std::string, std::vector<HookSet>> hooks_;
};

}  // namespace netdep
