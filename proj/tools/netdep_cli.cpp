// netdep: deterministic network simulation and service dependency discovery.
//
//   netdep run    --scenario s.json [--agent ripple] --out-graph g.dot --out-metrics m.json
//   netdep matrix --suite scenarios/ [--out summary.json] [--jobs N]
//   netdep gen    --benchmark boutique --network internal-nat [--hosts N] [--out file]

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "netdep/baseline.hpp"
#include "netdep/harness.hpp"

namespace fs = std::filesystem;
using namespace netdep;

namespace {

int write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot write " << path << "\n";
        return 1;
    }
    out << content;
    return 0;
}

std::optional<std::pair<uint64_t, uint64_t>> parse_window(const std::string& w) {
    if (w.empty()) return std::nullopt;
    size_t colon = w.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--window expects start:end");
    return std::make_pair(uint64_t(std::stoull(w.substr(0, colon))),
                          uint64_t(std::stoull(w.substr(colon + 1))));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic network simulator + service dependency discovery"};
    app.require_subcommand(1);

    // run
    std::string scenario_path, agent_str, out_graph, out_metrics, trace_path, window_str;
    uint64_t seed = 0;
    bool seed_set = false;
    auto* run = app.add_subcommand("run", "run one scenario");
    run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--agent", agent_str, "ripple|fivetuple|conntrack|none (scenario default)");
    run->add_option("--out-graph", out_graph, "graph output path (.dot or .json)");
    run->add_option("--out-metrics", out_metrics, "metrics JSON output path");
    run->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    run->add_option("--trace", trace_path, "write the packet trace log here");
    run->add_option("--window", window_str, "active-edge window start:end");

    // matrix
    std::string suite_dir, matrix_out;
    int jobs = 1;
    auto* matrix = app.add_subcommand("matrix", "run a scenario suite against all agents");
    matrix->add_option("--suite", suite_dir, "directory of scenario JSON files")->required();
    matrix->add_option("--out", matrix_out, "summary JSON output path");
    matrix->add_option("--jobs", jobs, "parallel workers");

    // gen
    std::string bench_str, net_str, gen_out;
    int gen_hosts = 0;
    uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("gen", "emit a benchmark scenario file");
    gen->add_option("--benchmark", bench_str, "boutique|social|media")->required();
    gen->add_option("--network", net_str, "nat-free|internal-nat|external-nat")->required();
    gen->add_option("--hosts", gen_hosts, "host count (default: one per service)");
    gen->add_option("--seed", gen_seed, "scenario seed");
    gen->add_option("--out", gen_out, "output path (default: <benchmark>-<network>.json)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            Scenario s = load_scenario_file(scenario_path);
            RunOptions opts;
            if (!agent_str.empty()) opts.agent = agent_from_string(agent_str);
            if (seed_set) opts.seed = seed;
            RunResult r = run_scenario(s, opts);

            ExportMeta meta;
            meta.scenario = r.scenario.name;
            meta.agent = to_string(r.scenario.agent);
            meta.seed = r.scenario.seed;
            meta.ticks = r.final_tick;
            meta.window = parse_window(window_str);

            if (!out_graph.empty()) {
                std::string ext = fs::path(out_graph).extension().string();
                std::string content =
                    ext == ".json" ? export_json(r.graph, meta) : export_dot(r.graph, meta);
                if (write_file(out_graph, content)) return 1;
            }
            if (!out_metrics.empty()) {
                if (write_file(out_metrics,
                               metrics_to_json(r.metrics, r.scenario.name,
                                               to_string(r.scenario.agent), r.scenario.seed)))
                    return 1;
            }
            if (!trace_path.empty()) {
                std::string lines;
                for (const std::string& l : r.wire_trace_lines) lines += l + "\n";
                if (write_file(trace_path, lines)) return 1;
            }
            std::cout << "scenario " << r.scenario.name << " agent "
                      << to_string(r.scenario.agent) << ": precision "
                      << (std::isnan(r.metrics.precision) ? std::string("NaN")
                                                          : std::to_string(r.metrics.precision))
                      << " recall "
                      << (std::isnan(r.metrics.recall) ? std::string("NaN")
                                                       : std::to_string(r.metrics.recall))
                      << " edges " << r.metrics.discovered_edges << "/"
                      << r.metrics.ground_truth_edges << " ttc "
                      << r.metrics.time_to_completion << "\n";
            return 0;
        }

        if (*matrix) {
            std::vector<Scenario> scenarios;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(suite_dir)) {
                if (e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            if (files.empty()) {
                std::cerr << "no scenario files in " << suite_dir << "\n";
                return 2;
            }
            for (const fs::path& f : files) scenarios.push_back(load_scenario_file(f.string()));
            std::vector<MatrixCell> cells = run_matrix(scenarios, jobs);
            std::cout << matrix_table(cells);
            if (!matrix_out.empty() && write_file(matrix_out, matrix_json(cells))) return 1;
            return 0;
        }

        if (*gen) {
            Scenario s = generate_scenario(benchmark_from_string(bench_str),
                                           net_template_from_string(net_str), gen_hosts, gen_seed);
            std::string path = gen_out.empty() ? s.name + ".json" : gen_out;
            if (write_file(path, scenario_to_json(s))) return 1;
            std::cout << "wrote " << path << "\n";
            return 0;
        }
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 2;
    } catch (const TopologyError& e) {
        std::cerr << "topology error: " << e.what() << "\n";
        return 2;
    } catch (const ProtocolViolation& e) {
        std::cerr << "protocol violation: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
