// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "cfmimo/bussgang.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/impairments.hpp"
#include "cfmimo/receiver.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo {

// A set of impairments switched off on top of the configured toggles.
struct Ablation {
    std::string tag = "baseline";
    ImpairmentToggles disabled = ImpairmentToggles::none();

    ImpairmentToggles apply(ImpairmentToggles t) const
    {
        t.lna = t.lna && !disabled.lna;
        t.phase_noise = t.phase_noise && !disabled.phase_noise;
        t.iqi = t.iqi && !disabled.iqi;
        t.adc = t.adc && !disabled.adc;
        return t;
    }

    // "lna", "pn", "iqi", "adc" or a '+'-joined combination such as "lna+pn".
    static Ablation parse(std::string_view spec)
    {
        Ablation a;
        a.tag = "no-" + std::string(spec);
        std::size_t pos = 0;
        while (pos <= spec.size()) {
            const auto end = std::min(spec.find('+', pos), spec.size());
            const auto name = spec.substr(pos, end - pos);
            if (name == "lna")
                a.disabled.lna = true;
            else if (name == "pn")
                a.disabled.phase_noise = true;
            else if (name == "iqi")
                a.disabled.iqi = true;
            else if (name == "adc")
                a.disabled.adc = true;
            else
                throw std::invalid_argument("unknown impairment '" + std::string(name) +
                                            "' (expected lna, pn, iqi or adc)");
            pos = end + 1;
        }
        return a;
    }
};

struct ExperimentPlan {
    ScenarioConfig config;
    int drops = 1;
    int realizations = 1;
    int bussgang_samples = 1000;
    std::vector<CombinerKind> combiners{CombinerKind::DistortionAware, CombinerKind::DistortionUnaware,
                                        CombinerKind::PerfectHardware};
    std::vector<Ablation> ablations{Ablation{}}; // the first entry is the reference configuration
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "results";
    bool per_subcarrier = false;
    unsigned workers = 0; // 0: one per hardware thread

    static ExperimentPlan from_config(const ScenarioConfig& cfg)
    {
        ExperimentPlan p;
        p.config = cfg;
        p.drops = cfg.mc.drops;
        p.realizations = cfg.mc.channel_realizations;
        p.bussgang_samples = cfg.mc.bussgang_samples;
        p.seed = cfg.mc.seed;
        return p;
    }

    // Config with the plan's Monte-Carlo overrides written back, as recorded in run.json.
    ScenarioConfig resolved_config() const
    {
        ScenarioConfig c = config;
        c.mc.drops = drops;
        c.mc.channel_realizations = realizations;
        c.mc.bussgang_samples = bussgang_samples;
        c.mc.seed = seed;
        c.resolve();
        return c;
    }

    void validate() const
    {
        if (drops < 1 || realizations < 1)
            throw std::invalid_argument("plan: drops and realizations must be >= 1");
        if (bussgang_samples < 2 || bussgang_samples < config.dims.K)
            throw std::invalid_argument("plan: bussgang_samples must be >= max(2, K)");
        if (combiners.empty())
            throw std::invalid_argument("plan: at least one combiner kind required");
        if (ablations.empty())
            throw std::invalid_argument("plan: at least one ablation configuration required");
        config.dims.validate();
    }
};

struct RunRecord {
    int drop = 0;
    int realization = 0;
    int ue = 0;
    CombinerKind combiner = CombinerKind::DistortionAware;
    std::string ablation;
    double se_avg = 0.0;          // NaN when every subcarrier failed
    std::vector<double> se_per_m; // filled only with per-subcarrier output
};

struct ExperimentResult {
    std::vector<RunRecord> records;
    std::uint64_t solver_fallbacks = 0;
    std::uint64_t failed_entries = 0; // per-subcarrier SE values lost to solve failures
    std::string config_hash;
};

// FNV-1a over the canonical JSON dump of the resolved config.
inline std::string config_hash(const ScenarioConfig& cfg)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : config_to_json(cfg).dump()) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

struct WorkOutput {
    std::vector<RunRecord> records;
    std::uint64_t failed = 0;
};

inline void append_records(WorkOutput& out, const SEResult& se, int drop, int real, const std::string& ablation,
                           bool per_subcarrier)
{
    for (int k = 0; k < se.se.rows(); ++k) {
        RunRecord rec;
        rec.drop = drop;
        rec.realization = real;
        rec.ue = k;
        rec.combiner = se.meta.combiner;
        rec.ablation = ablation;
        rec.se_avg = se.average(k);
        if (per_subcarrier)
            for (Eigen::Index m = 0; m < se.se.cols(); ++m)
                rec.se_per_m.push_back(se.se(k, m));
        out.records.push_back(std::move(rec));
    }
    out.failed += se.failures();
}

// One (drop, realization) work item. Geometry depends on (seed, drop) only, the channel
// on (seed, drop, realization), and every ablation replays the same Bussgang streams.
inline WorkOutput run_work_item(const ExperimentPlan& plan, const ScenarioConfig& cfg, int drop, int real,
                                SolveCounter& counter)
{
    WorkOutput out;
    const std::uint64_t drop_seed = derive_seed(plan.seed, drop);
    const NetworkScenario base = drop_network(cfg, drop_seed);
    const SpatialCorrelation corr = build_correlations(base, drop_seed);
    const ChannelRealization ch = sample_channel(corr, cfg.dims.M, derive_seed(drop_seed, real));
    const std::uint64_t stats_seed = derive_seed(drop_seed, real, Stream::Bussgang);

    for (std::size_t a = 0; a < plan.ablations.size(); ++a) {
        const Ablation& abl = plan.ablations[a];
        NetworkScenario net = base;
        net.config.impairments.toggles = abl.apply(cfg.impairments.toggles);

        const bool needs_stats = std::any_of(plan.combiners.begin(), plan.combiners.end(),
                                             [](CombinerKind k) { return k != CombinerKind::PerfectHardware; });
        BussgangStatistics st;
        if (needs_stats) {
            const ReceiverFrontEnd fe = make_front_end(corr, net.config);
            st = estimate_statistics(ch, net, fe, plan.bussgang_samples, stats_seed);
        }
        for (CombinerKind kind : plan.combiners) {
            // Perfect hardware does not depend on the toggles; report it once.
            if (kind == CombinerKind::PerfectHardware && a != 0)
                continue;
            SEResult se = evaluate_se(needs_stats ? &st : nullptr, ch, net, kind, &counter);
            se.meta.seed = plan.seed;
            se.meta.drop = drop;
            se.meta.realization = real;
            append_records(out, se, drop, real, abl.tag, plan.per_subcarrier);
        }
    }
    return out;
}

inline std::string format_double(double v)
{
    if (!std::isfinite(v))
        return {};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace detail

// Runs every (drop, realization) pair on a bounded worker pool. Records come back
// ordered by (drop, realization, ablation, combiner, ue) independent of scheduling.
inline ExperimentResult run_plan(const ExperimentPlan& plan)
{
    plan.validate();
    const ScenarioConfig cfg = plan.resolved_config();
    const int items = plan.drops * plan.realizations;
    std::vector<detail::WorkOutput> outputs(static_cast<std::size_t>(items));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(items));
    SolveCounter counter;

    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < items; i = next++) {
            try {
                outputs[static_cast<std::size_t>(i)] =
                    detail::run_work_item(plan, cfg, i / plan.realizations, i % plan.realizations, counter);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    unsigned n_workers = plan.workers != 0 ? plan.workers : std::max(1u, std::thread::hardware_concurrency());
    n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(items));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < n_workers; ++w)
            pool.emplace_back(worker);
        worker();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    ExperimentResult res;
    res.config_hash = config_hash(cfg);
    for (auto& o : outputs) {
        res.failed_entries += o.failed;
        std::move(o.records.begin(), o.records.end(), std::back_inserter(res.records));
    }
    res.solver_fallbacks = counter.fallbacks.load();
    return res;
}

inline void write_records_csv(std::ostream& out, const std::vector<RunRecord>& records, bool per_subcarrier)
{
    out << "drop,realization,ue,combiner,ablation,se_avg" << (per_subcarrier ? ",m,se_m" : "") << '\n';
    for (const auto& r : records) {
        std::ostringstream prefix;
        prefix << r.drop << ',' << r.realization << ',' << r.ue << ',' << to_string(r.combiner) << ',' << r.ablation
               << ',' << detail::format_double(r.se_avg);
        if (!per_subcarrier) {
            out << prefix.str() << '\n';
            continue;
        }
        for (std::size_t m = 0; m < r.se_per_m.size(); ++m)
            out << prefix.str() << ',' << m << ',' << detail::format_double(r.se_per_m[m]) << '\n';
    }
}

inline nlohmann::json run_metadata(const ExperimentPlan& plan, const ExperimentResult& res)
{
    nlohmann::json j;
    j["config"] = config_to_json(plan.resolved_config());
    j["config_hash"] = res.config_hash;
    nlohmann::json combiners = nlohmann::json::array();
    for (auto k : plan.combiners)
        combiners.push_back(std::string(to_string(k)));
    nlohmann::json ablations = nlohmann::json::array();
    for (const auto& a : plan.ablations)
        ablations.push_back(a.tag);
    j["plan"] = {{"drops", plan.drops},
                 {"realizations", plan.realizations},
                 {"bussgang_samples", plan.bussgang_samples},
                 {"combiners", combiners},
                 {"ablations", ablations},
                 {"seed", plan.seed},
                 {"per_subcarrier", plan.per_subcarrier}};
    j["rows"] = res.records.size();
    j["solver_fallbacks"] = res.solver_fallbacks;
    j["failed_entries"] = res.failed_entries;
    return j;
}

// Runs the plan and writes <out>/se.csv plus the <out>/run.json sidecar.
inline ExperimentResult run_experiment(const ExperimentPlan& plan)
{
    ExperimentResult res = run_plan(plan);
    std::filesystem::create_directories(plan.out_dir);
    {
        std::ofstream csv(plan.out_dir / "se.csv");
        if (!csv)
            throw std::runtime_error("cannot write " + (plan.out_dir / "se.csv").string());
        write_records_csv(csv, res.records, plan.per_subcarrier);
    }
    std::ofstream meta(plan.out_dir / "run.json");
    if (!meta)
        throw std::runtime_error("cannot write " + (plan.out_dir / "run.json").string());
    meta << run_metadata(plan, res).dump(2) << '\n';
    return res;
}

// ---------- summaries ----------

struct CdfPoint {
    double se = 0.0;
    double percentile = 0.0;
};

// Sorted samples with plotting positions (i - 0.5)/n, i = 1..n.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> samples)
{
    if (samples.empty())
        throw std::invalid_argument("empirical_cdf: empty sample set");
    std::sort(samples.begin(), samples.end());
    std::vector<CdfPoint> cdf(samples.size());
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        cdf[i] = {samples[i], (static_cast<double>(i) + 0.5) / n};
    return cdf;
}

// Linear-interpolation quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double p)
{
    if (sorted.empty())
        throw std::invalid_argument("sorted_quantile: empty sample set");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct CdfGroup {
    std::string combiner;
    std::string ablation;
    std::vector<CdfPoint> cdf;
    double median = 0.0;
    double p10 = 0.0;
    std::size_t missing = 0;
};

inline std::vector<RunRecord> read_records_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || line.rfind("drop,realization,ue,combiner,ablation,se_avg", 0) != 0)
        throw std::runtime_error("results csv: unexpected header");
    const bool per_m = line.find(",m,se_m") != std::string::npos;

    std::vector<RunRecord> out;
    std::map<std::tuple<int, int, int, std::string, std::string>, std::size_t> seen;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');)
            f.push_back(cell);
        if (line.back() == ',')
            f.emplace_back();
        if (f.size() != (per_m ? 8u : 6u))
            throw std::runtime_error("results csv: malformed row '" + line + "'");
        RunRecord r;
        r.drop = std::stoi(f[0]);
        r.realization = std::stoi(f[1]);
        r.ue = std::stoi(f[2]);
        r.combiner = parse_combiner(f[3]);
        r.ablation = f[4];
        r.se_avg = f[5].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[5]);
        const auto key = std::make_tuple(r.drop, r.realization, r.ue, f[3], r.ablation);
        auto it = seen.find(key);
        if (it == seen.end()) {
            seen.emplace(key, out.size());
            out.push_back(std::move(r));
            it = seen.find(key);
        }
        if (per_m)
            out[it->second].se_per_m.push_back(f[7].empty() ? std::numeric_limits<double>::quiet_NaN()
                                                            : std::stod(f[7]));
    }
    return out;
}

// Groups records by (combiner, ablation) in order of first appearance.
inline std::vector<CdfGroup> summarize_records(const std::vector<RunRecord>& records)
{
    std::vector<CdfGroup> groups;
    std::vector<std::vector<double>> samples;
    for (const auto& r : records) {
        const std::string comb(to_string(r.combiner));
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const CdfGroup& g) { return g.combiner == comb && g.ablation == r.ablation; });
        if (it == groups.end()) {
            groups.push_back({comb, r.ablation, {}, 0.0, 0.0, 0});
            samples.emplace_back();
            it = groups.end() - 1;
        }
        const auto idx = static_cast<std::size_t>(it - groups.begin());
        if (std::isfinite(r.se_avg))
            samples[idx].push_back(r.se_avg);
        else
            ++groups[idx].missing;
    }
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (samples[i].empty())
            throw std::runtime_error("summarize: group " + groups[i].combiner + "/" + groups[i].ablation +
                                     " has no valid samples");
        groups[i].cdf = empirical_cdf(samples[i]);
        std::sort(samples[i].begin(), samples[i].end());
        groups[i].median = sorted_quantile(samples[i], 0.5);
        groups[i].p10 = sorted_quantile(samples[i], 0.1);
    }
    return groups;
}

inline std::vector<CdfGroup> summarize(const std::filesystem::path& in_dir)
{
    std::ifstream in(in_dir / "se.csv");
    if (!in)
        throw std::runtime_error("summarize: cannot open " + (in_dir / "se.csv").string());
    return summarize_records(read_records_csv(in));
}

inline void write_cdf_csv(std::ostream& out, const std::vector<CdfGroup>& groups)
{
    out << "combiner,ablation,se,percentile\n";
    for (const auto& g : groups)
        for (const auto& p : g.cdf)
            out << g.combiner << ',' << g.ablation << ',' << detail::format_double(p.se) << ','
                << detail::format_double(p.percentile) << '\n';
}

inline nlohmann::json cdf_to_json(const std::vector<CdfGroup>& groups)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& g : groups) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& p : g.cdf)
            pts.push_back({p.se, p.percentile});
        j.push_back({{"combiner", g.combiner},
                     {"ablation", g.ablation},
                     {"median", g.median},
                     {"p10", g.p10},
                     {"missing", g.missing},
                     {"cdf", pts}});
    }
    return j;
}

inline const CdfGroup* find_group(const std::vector<CdfGroup>& groups, std::string_view combiner,
                                  std::string_view ablation)
{
    for (const auto& g : groups)
        if (g.combiner == combiner && g.ablation == ablation)
            return &g;
    return nullptr;
}

} // namespace cfmimo
