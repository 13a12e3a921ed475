#pragma once

#include <string>
#include <utility>
#include <vector>

#include "netdep/netsim.hpp"

namespace netdep {

enum class BenchmarkKind { boutique, social, media };

std::string to_string(BenchmarkKind k);
BenchmarkKind benchmark_from_string(const std::string& s);

// Synthetic service graphs shaped like the three standard microservice
// benchmarks: boutique 12 services / 16 dependencies, social 21/25, media
// 29/34. The media graph keeps a main component plus three components with
// no connectivity to it; boutique and social are discoverable end to end
// from their bootstrap service.
struct BenchmarkGraph {
    std::string name;
    std::vector<std::string> services;
    std::vector<std::pair<std::string, std::string>> edges;
    std::string bootstrap;
};

BenchmarkGraph benchmark_graph(BenchmarkKind kind);

// Nodes weakly connected to `from` — what repeated request/response traffic
// can ever propagate discovery to.
std::vector<std::string> discoverable_from(const BenchmarkGraph& g, const std::string& from);

}  // namespace netdep
