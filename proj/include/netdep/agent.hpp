#pragma once

#include <map>
#include <set>
#include <string>

#include "netdep/graph.hpp"
#include "netdep/netsim.hpp"

namespace netdep {

// Per-host discovery agent. Tracks target processes, tags the first
// payload-bearing packet of each connection direction with a fresh
// identifier on egress, detects identifiers on ingress and attributes them
// to the reading process, expanding the target set as it goes.
class RippleAgent {
  public:
    enum class Origin { manual, discovered };

    RippleAgent(World& w, std::string machine, Collector& collector, uint64_t nonce);

    // Wires the agent into the world's hook surface for its machine.
    void install();

    // Manual bootstrap; idempotent. Throws EndpointError for processes on
    // another machine.
    void register_target(ProcessId pid);

    const std::map<ProcessId, Origin>& targets() const { return targets_; }
    const std::string& machine() const { return machine_; }
    uint64_t injections() const { return injections_; }

    // hook bodies (public: unit tests drive them directly)
    void on_send(World& w, ProcessId pid, SocketId sid, const Packet& p);
    std::optional<Packet> on_transmit(World& w, const Packet& p, SocketId sid);
    void on_data_queued(World& w, SocketId sid, const Packet& p);
    void on_recv(World& w, ProcessId pid, SocketId sid);

  private:
    DiscoveryIdentifier fresh_id();

    World& world_;
    std::string machine_;
    Collector& collector_;
    uint64_t nonce_;
    uint64_t counter_ = 0;
    uint64_t injections_ = 0;

    std::map<ProcessId, Origin> targets_;
    std::map<SocketId, ProcessId> owned_sockets_;  // populated by on_send for targets
    std::set<SocketId> sent_;                      // identifier already injected
    std::map<SocketId, DiscoveryIdentifier> pending_;  // ingress awaiting a reader
};

}  // namespace netdep
