#pragma once

#include <set>
#include <string>
#include <vector>

#include "netdep/graph.hpp"
#include "netdep/netsim.hpp"

namespace netdep {

struct CapabilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Read access to connection-tracking state, limited to NAT nodes that belong
// to one administrative host. Gateway tables stay out of reach.
class ConntrackView {
  public:
    ConntrackView(const World& w, std::string machine);

    // Entries of every NAT-capable node on this machine.
    std::vector<ConntrackEntry> local_entries() const;

    // Throws CapabilityError when the node lives on another machine.
    const std::vector<ConntrackEntry>& entries_of(NodeId node) const;

    // Maps a socket-view tuple (original connection direction) to its
    // inter-host wire form where a local entry covers it; identity
    // otherwise.
    FiveTuple resolve(const FiveTuple& t) const;

  private:
    const World& world_;
    std::string machine_;
};

// Passive per-host flow observer. Records one outbound tuple per initiated
// connection and one inbound tuple per accepted connection, both in original
// direction. With conntrack resolution enabled the tuples are normalized to
// their wire form using host-local translation state only. Never touches a
// packet.
class PassiveObserver {
  public:
    PassiveObserver(World& w, std::string machine, Collector& collector, bool use_conntrack);
    void install();

    void on_send(World& w, ProcessId pid, SocketId sid, const Packet& p);
    void on_data_queued(World& w, SocketId sid, const Packet& p);

  private:
    World& world_;
    std::string machine_;
    Collector& collector_;
    bool use_conntrack_;
    std::set<SocketId> recorded_;
};

// Collector-side matcher: joins outbound and inbound flow records on tuple
// equality into process-level edges; unmatched records become edges to
// synthetic address nodes ("machine:ip:port" when the address has a unique
// owner).
void resolve_flow_records(Collector& c, const World& w, Provenance prov);

}  // namespace netdep
