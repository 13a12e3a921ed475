#include "netdep/benchmark.hpp"

#include <map>
#include <set>
#include <stdexcept>

namespace netdep {

std::string to_string(BenchmarkKind k) {
    switch (k) {
        case BenchmarkKind::boutique: return "boutique";
        case BenchmarkKind::social: return "social";
        case BenchmarkKind::media: return "media";
    }
    return "?";
}

BenchmarkKind benchmark_from_string(const std::string& s) {
    if (s == "boutique") return BenchmarkKind::boutique;
    if (s == "social") return BenchmarkKind::social;
    if (s == "media") return BenchmarkKind::media;
    throw std::invalid_argument("unknown benchmark: " + s);
}

BenchmarkGraph benchmark_graph(BenchmarkKind kind) {
    BenchmarkGraph g;
    g.name = to_string(kind);
    auto edge = [&](const std::string& a, const std::string& b) { g.edges.emplace_back(a, b); };

    if (kind == BenchmarkKind::boutique) {
        g.services = {"loadgen",  "frontend", "ad",       "recommendation",
                      "catalog",  "cart",     "cart-db",  "checkout",
                      "payment",  "shipping", "currency", "email"};
        g.bootstrap = "frontend";
        edge("loadgen", "frontend");
        edge("frontend", "ad");
        edge("frontend", "recommendation");
        edge("frontend", "catalog");
        edge("frontend", "cart");
        edge("frontend", "checkout");
        edge("frontend", "shipping");
        edge("frontend", "currency");
        edge("recommendation", "catalog");
        edge("cart", "cart-db");
        edge("checkout", "catalog");
        edge("checkout", "cart");
        edge("checkout", "shipping");
        edge("checkout", "currency");
        edge("checkout", "payment");
        edge("checkout", "email");
    } else if (kind == BenchmarkKind::social) {
        g.services = {"nginx",          "compose-post",    "text",
                      "media",          "unique-id",       "user",
                      "url-shorten",    "user-mention",    "post-storage",
                      "post-db",        "post-cache",      "home-timeline",
                      "home-cache",     "user-timeline",   "user-timeline-db",
                      "user-timeline-cache", "social-graph", "social-graph-db",
                      "social-graph-cache",  "user-db",     "url-db"};
        g.bootstrap = "nginx";
        edge("nginx", "compose-post");
        edge("nginx", "home-timeline");
        edge("nginx", "user-timeline");
        edge("nginx", "user");
        edge("compose-post", "text");
        edge("compose-post", "media");
        edge("compose-post", "unique-id");
        edge("compose-post", "user");
        edge("compose-post", "post-storage");
        edge("compose-post", "user-timeline");
        edge("compose-post", "home-timeline");
        edge("text", "url-shorten");
        edge("text", "user-mention");
        edge("url-shorten", "url-db");
        edge("user", "user-db");
        edge("user-mention", "user-db");
        edge("post-storage", "post-db");
        edge("post-storage", "post-cache");
        edge("home-timeline", "home-cache");
        edge("home-timeline", "post-storage");
        edge("home-timeline", "social-graph");
        edge("user-timeline", "user-timeline-db");
        edge("user-timeline", "user-timeline-cache");
        edge("social-graph", "social-graph-db");
        edge("social-graph", "social-graph-cache");
    } else {
        // main component (19 services, 24 edges) plus three components the
        // main graph never talks to: cast (3/3), movie-info (4/4), plot (3/3)
        g.services = {"nginx",         "compose-review",  "text",
                      "unique-id",     "user",            "user-db",
                      "movie-id",      "movie-id-db",     "rating",
                      "rating-cache",  "review-storage",  "review-db",
                      "review-cache",  "user-review",     "user-review-db",
                      "user-review-cache", "movie-review", "movie-review-db",
                      "movie-review-cache",
                      "cast-loader",   "cast",            "cast-db",
                      "movie-info-loader", "movie-info",  "movie-info-db",
                      "movie-info-cache",
                      "plot-loader",   "plot",            "plot-db"};
        g.bootstrap = "text";
        edge("nginx", "compose-review");
        edge("nginx", "user-review");
        edge("nginx", "movie-review");
        edge("nginx", "user");
        edge("nginx", "movie-id");
        edge("compose-review", "text");
        edge("compose-review", "unique-id");
        edge("compose-review", "user");
        edge("compose-review", "movie-id");
        edge("compose-review", "rating");
        edge("compose-review", "review-storage");
        edge("compose-review", "user-review");
        edge("compose-review", "movie-review");
        edge("user", "user-db");
        edge("movie-id", "movie-id-db");
        edge("movie-id", "rating");
        edge("rating", "rating-cache");
        edge("review-storage", "review-db");
        edge("review-storage", "review-cache");
        edge("user-review", "user-review-db");
        edge("user-review", "user-review-cache");
        edge("user-review", "review-storage");
        edge("movie-review", "movie-review-db");
        edge("movie-review", "movie-review-cache");
        // disconnected: cast
        edge("cast-loader", "cast");
        edge("cast", "cast-db");
        edge("cast-loader", "cast-db");
        // disconnected: movie-info
        edge("movie-info-loader", "movie-info");
        edge("movie-info", "movie-info-db");
        edge("movie-info", "movie-info-cache");
        edge("movie-info-loader", "movie-info-db");
        // disconnected: plot
        edge("plot-loader", "plot");
        edge("plot", "plot-db");
        edge("plot-loader", "plot-db");
    }
    return g;
}

std::vector<std::string> discoverable_from(const BenchmarkGraph& g, const std::string& from) {
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& [a, b] : g.edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::set<std::string> seen;
    std::vector<std::string> stack{from}, out;
    while (!stack.empty()) {
        std::string cur = stack.back();
        stack.pop_back();
        if (!seen.insert(cur).second) continue;
        out.push_back(cur);
        for (const std::string& next : adj[cur]) stack.push_back(next);
    }
    return out;
}

}  // namespace netdep
