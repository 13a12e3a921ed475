#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "netdep/endpoint.hpp"
#include "netdep/netsim.hpp"
#include "netdep/packet.hpp"

namespace netdep {

struct ProtocolViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Provenance { ripple, fivetuple, conntrack };
std::string to_string(Provenance p);

enum class EventRole { sender, receiver };

struct DiscoveryEvent {
    DiscoveryIdentifier id;
    ProcessRef endpoint;
    EventRole role{};
    uint64_t time = 0;
    // Sender events only: true when the tagged socket initiated its
    // connection. Responses on accepted sockets produce reverse edges that
    // are kept in the graph but flagged.
    bool from_initiator = true;
};

// One half of what a passive observer saw for a connection at one host.
// Tuples are recorded in the connection's original direction as the local
// socket sees them (post any NAT local to the socket's namespace).
struct FlowRecord {
    std::string host;  // observing machine
    ProcessRef local_process;
    FiveTuple tuple;
    bool outbound = true;
    uint64_t time = 0;
};

struct GraphEdge {
    ProcessRef src;
    ProcessRef dst;
    uint64_t first_seen = 0;
    Provenance provenance{};
    uint32_t connections = 1;
    bool reverse = false;
    std::vector<uint64_t> activity;  // ticks with observed exchange
};

struct UnresolvedEdge {
    ProcessRef process;
    std::string address;  // "machine:ip:port" when the owner is known, else "ip:port"
    bool outbound = true;
    uint64_t first_seen = 0;
    Provenance provenance{};
};

struct DependencyGraph {
    std::set<ProcessRef> nodes;
    std::vector<GraphEdge> edges;
    std::vector<UnresolvedEdge> unresolved;

    GraphEdge* find_edge(const ProcessRef& a, const ProcessRef& b, Provenance prov, bool reverse);
    void add_edge(const ProcessRef& a, const ProcessRef& b, uint64_t t, Provenance prov,
                  bool reverse);
    void add_unresolved(const ProcessRef& p, const std::string& addr, bool outbound, uint64_t t,
                        Provenance prov);

    // Directed (src, dst) name pairs of forward process-level edges plus
    // synthetic-target pairs; the metric layer scores this against ground
    // truth. Reverse-flagged edges are excluded.
    std::vector<std::pair<std::string, std::string>> scored_pairs() const;
};

// Contracts each forwarder node, composing every in/out edge pair with a
// matching direction flag; forwarders with no throughput disappear without
// composed edges.
DependencyGraph abstract_forwarders(const DependencyGraph& g, const std::set<ProcessRef>& fwd);

// Deterministic exports: nodes and edges in canonical sort order, byte-stable
// across runs for equal graphs. Window, when given, annotates edges active
// iff they saw exchange inside [start, end].
struct ExportMeta {
    std::string scenario;
    std::string agent;
    uint64_t seed = 0;
    uint64_t ticks = 0;
    std::optional<std::pair<uint64_t, uint64_t>> window;
};

std::string export_dot(const DependencyGraph& g, const ExportMeta& meta = {});
std::string export_json(const DependencyGraph& g, const ExportMeta& meta = {});

// Joins sender/receiver discovery events on identifier value and flow
// records via the baseline matchers. Safe for interleaved appends.
class Collector {
  public:
    void ingest(const DiscoveryEvent& ev);
    void ingest(const FlowRecord& rec);

    // Completes ripple joins (throws ProtocolViolation on duplicate sender
    // events) and returns diagnostics.
    struct Diagnostics {
        uint64_t unpaired_senders = 0;
        uint64_t unpaired_receivers = 0;
    };
    Diagnostics diagnostics() const;

    DependencyGraph& graph() { return graph_; }
    const DependencyGraph& graph() const { return graph_; }
    const std::vector<FlowRecord>& flow_records() const { return flows_; }

    uint64_t last_edge_tick() const { return last_edge_tick_; }
    uint64_t last_forward_edge_tick() const { return last_forward_edge_tick_; }

  private:
    struct Pending {
        std::optional<DiscoveryEvent> sender;
        std::optional<DiscoveryEvent> receiver;
    };

    void try_join(Pending& p);

    std::mutex mu_;
    std::map<DiscoveryIdentifier, Pending> pending_;
    std::vector<FlowRecord> flows_;
    DependencyGraph graph_;
    uint64_t last_edge_tick_ = 0;
    uint64_t last_forward_edge_tick_ = 0;
};

}  // namespace netdep
