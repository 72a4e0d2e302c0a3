// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cfmimo/runner.hpp"
#include "cfmimo/scenario.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto end = std::min(s.find(',', pos), s.size());
        if (end > pos)
            out.push_back(s.substr(pos, end - pos));
        pos = end + 1;
    }
    return out;
}

int run_simulate(const std::string& config_path, std::optional<int> drops, std::optional<int> realizations,
                 std::optional<int> samples, const std::string& combiners, const std::vector<std::string>& disable,
                 std::optional<std::uint64_t> seed, const std::string& out_dir, bool per_subcarrier, unsigned threads)
{
    using namespace cfmimo;
    ExperimentPlan plan = ExperimentPlan::from_config(load_config(config_path));
    if (drops)
        plan.drops = *drops;
    if (realizations)
        plan.realizations = *realizations;
    if (samples)
        plan.bussgang_samples = *samples;
    if (seed)
        plan.seed = *seed;
    plan.combiners.clear();
    for (const auto& c : split_list(combiners))
        plan.combiners.push_back(parse_combiner(c));
    for (const auto& d : disable)
        plan.ablations.push_back(Ablation::parse(d));
    plan.out_dir = out_dir;
    plan.per_subcarrier = per_subcarrier;
    plan.workers = threads;

    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult res = run_experiment(plan);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::cout << "wrote " << res.records.size() << " rows to " << (plan.out_dir / "se.csv").string() << " in "
              << secs << " s (config " << res.config_hash << ")\n";
    if (res.solver_fallbacks > 0)
        std::cout << "pseudo-inverse fallbacks: " << res.solver_fallbacks << '\n';
    if (res.failed_entries > 0)
        std::cout << "failed solves (recorded as missing): " << res.failed_entries << '\n';
    return 0;
}

int run_summarize(const std::string& in_dir, const std::string& format)
{
    using namespace cfmimo;
    const auto groups = summarize(in_dir);
    const std::filesystem::path dir(in_dir);
    if (format == "json") {
        std::ofstream out(dir / "cdf.json");
        out << cdf_to_json(groups).dump(2) << '\n';
    } else {
        std::ofstream out(dir / "cdf.csv");
        write_cdf_csv(out, groups);
    }

    std::printf("%-10s %-14s %8s %10s %10s %8s\n", "combiner", "ablation", "samples", "median", "p10", "missing");
    for (const auto& g : groups)
        std::printf("%-10s %-14s %8zu %10.4f %10.4f %8zu\n", g.combiner.c_str(), g.ablation.c_str(), g.cdf.size(),
                    g.median, g.p10, g.missing);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Uplink spectral-efficiency simulator for cell-free massive MIMO-OFDM with impaired APs"};
    app.require_subcommand(1);

    auto* sim = app.add_subcommand("simulate", "Run the Monte-Carlo experiment and write se.csv + run.json");
    std::string config_path;
    std::optional<int> drops, realizations, samples;
    std::optional<std::uint64_t> seed;
    std::string combiners = "aware,unaware,perfect";
    std::vector<std::string> disable;
    std::string out_dir = "results";
    bool per_subcarrier = false;
    unsigned threads = 0;
    sim->add_option("--config", config_path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sim->add_option("--drops", drops, "Number of network drops")->check(CLI::PositiveNumber);
    sim->add_option("--realizations", realizations, "Channel realizations per drop")->check(CLI::PositiveNumber);
    sim->add_option("--bussgang-samples", samples, "OFDM symbols per Bussgang estimate")->check(CLI::Range(2, 1 << 30));
    sim->add_option("--combiners", combiners, "Comma-separated subset of aware,unaware,perfect");
    sim->add_option("--disable", disable,
                    "Add an ablation with this impairment removed (lna|pn|iqi|adc, '+' to combine); repeatable");
    sim->add_option("--seed", seed, "Master seed (overrides the config)");
    sim->add_option("--out", out_dir, "Output directory");
    sim->add_flag("--per-subcarrier", per_subcarrier, "Also emit per-subcarrier SE rows");
    sim->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

    auto* sum = app.add_subcommand("summarize", "Empirical CDF table and median/p10 per combiner and ablation");
    std::string in_dir;
    std::string format = "csv";
    sum->add_option("--in", in_dir, "Directory holding se.csv")->required()->check(CLI::ExistingDirectory);
    sum->add_option("--format", format, "Output table format")->check(CLI::IsMember({"csv", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed())
            return run_simulate(config_path, drops, realizations, samples, combiners, disable, seed, out_dir,
                                per_subcarrier, threads);
        return run_summarize(in_dir, format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
