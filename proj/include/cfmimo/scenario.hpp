// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfmimo/rng.hpp"
#include "cfmimo/types.hpp"

namespace cfmimo {

using nlohmann::json;

struct SystemDims {
    int L = 16;       // access points
    int N = 4;        // antennas per AP
    int K = 10;       // single-antenna UEs
    int M = 256;      // subcarriers
    int R = 6;        // channel taps
    int adc_bits = 2; // ADC resolution per I/Q component

    int antennas() const { return L * N; }
    int cp_length() const { return R - 1; }

    void validate() const
    {
        if (L < 1 || N < 1 || K < 1 || M < 1 || R < 1)
            throw std::invalid_argument("dims: L, N, K, M and R must all be >= 1");
        if (adc_bits < 1 || adc_bits > 24)
            throw std::invalid_argument("dims: adc_bits must be in [1, 24]");
        if (M <= R)
            throw std::invalid_argument("dims: invariant M > R violated (M=" + std::to_string(M) +
                                        ", R=" + std::to_string(R) + ")");
    }

    bool operator==(const SystemDims&) const = default;
};

struct RadioParams {
    double carrier_freq_ghz = 7.5;
    double subcarrier_spacing_hz = 15e3;
    double noise_figure_db = 7.0;
    std::vector<double> uplink_power_w; // one entry per UE; empty means 0.1 W for all

    // Derived by ScenarioConfig::resolve()
    double bandwidth_hz = 0.0;
    double sample_period_s = 0.0;
    double noise_power_dbm = 0.0;

    double noise_power_w() const { return dbm_to_watt(noise_power_dbm); }

    bool operator==(const RadioParams&) const = default;
};

struct ImpairmentToggles {
    bool lna = true;
    bool phase_noise = true;
    bool iqi = true;
    bool adc = true;

    static ImpairmentToggles none() { return {false, false, false, false}; }
    bool any() const { return lna || phase_noise || iqi || adc; }

    bool operator==(const ImpairmentToggles&) const = default;
};

// Denominator of the stationary phase-noise variance.
//   SquaredGap:    2*pi*beta*Ts / (1 - lambda)^2
//   Ar1Stationary: 2*pi*beta*Ts / (1 - lambda^2)
enum class PhaseNoiseVarianceForm { SquaredGap, Ar1Stationary };

// LNA and IQ-imbalance coefficients of one AP (shared by its antennas).
struct FrontEndCoefficients {
    double b1_re = 1.065;
    double b1_im = 0.0;
    double b2_re = -0.028;
    double b2_im = 0.0;
    double alpha_mag = 0.18;
    double alpha_phase_rad = 0.1 * kPi;

    cd b1() const { return {b1_re, b1_im}; }
    cd b2() const { return {b2_re, b2_im}; }
    cd alpha() const { return std::polar(alpha_mag, alpha_phase_rad); }

    bool operator==(const FrontEndCoefficients&) const = default;
};

struct ImpairmentParams {
    FrontEndCoefficients coefficients;
    std::map<int, FrontEndCoefficients> per_ap; // optional overrides keyed by AP index
    double lambda_psi = 0.99;
    double beta_pn = 1e3;
    PhaseNoiseVarianceForm pn_variance_form = PhaseNoiseVarianceForm::SquaredGap;
    ImpairmentToggles toggles;

    double sigma2_psi = 0.0; // derived

    const FrontEndCoefficients& for_ap(int l) const
    {
        auto it = per_ap.find(l);
        return it == per_ap.end() ? coefficients : it->second;
    }

    bool operator==(const ImpairmentParams&) const = default;
};

struct LayoutParams {
    double area_m = 500.0;
    double height_diff_m = 10.0;

    bool operator==(const LayoutParams&) const = default;
};

// Clustered multipath model used to build the spatial correlation matrices.
struct ChannelModelParams {
    int n_clusters = 5;
    double cluster_decay = 2.0; // in tap periods
    double ray_decay = 2.0;     // in tap periods
    double angle_spread_deg = 40.0;
    double shadow_std_db = 8.2;

    bool operator==(const ChannelModelParams&) const = default;
};

struct MonteCarloParams {
    int drops = 50;
    int channel_realizations = 10;
    int bussgang_samples = 1000;
    std::uint64_t seed = 1;

    bool operator==(const MonteCarloParams&) const = default;
};

inline double pathloss_db(double d_3d_m, double fc_ghz, double shadow_db)
{
    if (!(d_3d_m > 0.0))
        throw std::invalid_argument("pathloss_db: distance must be positive");
    if (!(fc_ghz > 0.0))
        throw std::invalid_argument("pathloss_db: carrier frequency must be positive");
    return -32.4 - 20.0 * std::log10(fc_ghz) - 31.9 * std::log10(d_3d_m) + shadow_db;
}

inline double noise_power_dbm(double bandwidth_hz, double noise_figure_db)
{
    if (!(bandwidth_hz > 0.0))
        throw std::invalid_argument("noise_power_dbm: bandwidth must be positive");
    return -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
}

inline double phase_noise_variance(double beta_pn, double sample_period_s, double lambda_psi,
                                   PhaseNoiseVarianceForm form = PhaseNoiseVarianceForm::SquaredGap)
{
    if (!(lambda_psi > 0.0 && lambda_psi < 1.0))
        throw std::invalid_argument("phase noise: lambda_psi must lie in (0, 1)");
    const double innovation = 2.0 * kPi * beta_pn * sample_period_s;
    const double gap = 1.0 - lambda_psi;
    return form == PhaseNoiseVarianceForm::SquaredGap ? innovation / (gap * gap)
                                                      : innovation / (1.0 - lambda_psi * lambda_psi);
}

struct ScenarioConfig {
    SystemDims dims;
    RadioParams radio;
    ImpairmentParams impairments;
    LayoutParams layout;
    ChannelModelParams channel;
    MonteCarloParams mc;

    double uplink_power(int k) const { return radio.uplink_power_w.at(static_cast<std::size_t>(k)); }

    // Validates every invariant and fills the derived fields.
    void resolve()
    {
        dims.validate();
        if (!(radio.carrier_freq_ghz > 0.0) || !(radio.subcarrier_spacing_hz > 0.0))
            throw std::invalid_argument("radio: carrier frequency and subcarrier spacing must be positive");
        if (radio.uplink_power_w.empty())
            radio.uplink_power_w.assign(static_cast<std::size_t>(dims.K), 0.1);
        else if (radio.uplink_power_w.size() == 1 && dims.K > 1)
            radio.uplink_power_w.assign(static_cast<std::size_t>(dims.K), radio.uplink_power_w.front());
        if (radio.uplink_power_w.size() != static_cast<std::size_t>(dims.K))
            throw std::invalid_argument("radio: uplink_power_w must have one entry or K entries");
        for (double p : radio.uplink_power_w)
            if (!(p > 0.0))
                throw std::invalid_argument("radio: uplink powers must be positive");

        radio.bandwidth_hz = dims.M * radio.subcarrier_spacing_hz;
        radio.sample_period_s = 1.0 / radio.bandwidth_hz;
        radio.noise_power_dbm = noise_power_dbm(radio.bandwidth_hz, radio.noise_figure_db);

        if (!(impairments.beta_pn >= 0.0))
            throw std::invalid_argument("impairments: beta_pn must be nonnegative");
        impairments.sigma2_psi = phase_noise_variance(impairments.beta_pn, radio.sample_period_s,
                                                      impairments.lambda_psi, impairments.pn_variance_form);
        for (const auto& [l, c] : impairments.per_ap)
            if (l < 0 || l >= dims.L)
                throw std::invalid_argument("impairments: per_ap override for nonexistent AP " + std::to_string(l));

        if (!(layout.area_m > 0.0))
            throw std::invalid_argument("layout: area_m must be positive");
        if (!(layout.height_diff_m >= 0.0))
            throw std::invalid_argument("layout: height_diff_m must be nonnegative");

        if (channel.n_clusters < 1 || !(channel.cluster_decay > 0.0) || !(channel.ray_decay > 0.0))
            throw std::invalid_argument("channel: n_clusters >= 1 and positive decay constants required");
        if (!(channel.shadow_std_db >= 0.0) || !(channel.angle_spread_deg >= 0.0))
            throw std::invalid_argument("channel: shadow_std_db and angle_spread_deg must be nonnegative");

        if (mc.drops < 1 || mc.channel_realizations < 1)
            throw std::invalid_argument("mc: drops and channel_realizations must be >= 1");
        if (mc.bussgang_samples < 2)
            throw std::invalid_argument("mc: bussgang_samples must be >= 2");
    }

    bool operator==(const ScenarioConfig&) const = default;
};

// ---------- JSON schema ----------

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out)
{
    if (j.contains(key))
        j.at(key).get_to(out);
}

inline void read_coefficients(const json& j, FrontEndCoefficients& c)
{
    read_opt(j, "b1_re", c.b1_re);
    read_opt(j, "b1_im", c.b1_im);
    read_opt(j, "b2_re", c.b2_re);
    read_opt(j, "b2_im", c.b2_im);
    read_opt(j, "alpha_mag", c.alpha_mag);
    read_opt(j, "alpha_phase_rad", c.alpha_phase_rad);
}

inline json write_coefficients(const FrontEndCoefficients& c)
{
    return {{"b1_re", c.b1_re},         {"b1_im", c.b1_im},         {"b2_re", c.b2_re},
            {"b2_im", c.b2_im},         {"alpha_mag", c.alpha_mag}, {"alpha_phase_rad", c.alpha_phase_rad}};
}

} // namespace detail

// Parses the documented config schema. Absent fields keep their defaults; the
// result is resolved (validated, derived fields filled).
inline ScenarioConfig config_from_json(const json& j)
{
    ScenarioConfig cfg;
    try {
        if (j.contains("dims")) {
            const auto& d = j.at("dims");
            detail::read_opt(d, "L", cfg.dims.L);
            detail::read_opt(d, "N", cfg.dims.N);
            detail::read_opt(d, "K", cfg.dims.K);
            detail::read_opt(d, "M", cfg.dims.M);
            detail::read_opt(d, "R", cfg.dims.R);
            detail::read_opt(d, "adc_bits", cfg.dims.adc_bits);
        }
        if (j.contains("radio")) {
            const auto& r = j.at("radio");
            detail::read_opt(r, "fc_ghz", cfg.radio.carrier_freq_ghz);
            detail::read_opt(r, "scs_hz", cfg.radio.subcarrier_spacing_hz);
            detail::read_opt(r, "noise_figure_db", cfg.radio.noise_figure_db);
            if (r.contains("uplink_power_w")) {
                const auto& p = r.at("uplink_power_w");
                if (p.is_array())
                    p.get_to(cfg.radio.uplink_power_w);
                else
                    cfg.radio.uplink_power_w = {p.get<double>()};
            }
        }
        if (j.contains("impairments")) {
            const auto& im = j.at("impairments");
            detail::read_coefficients(im, cfg.impairments.coefficients);
            detail::read_opt(im, "lambda_psi", cfg.impairments.lambda_psi);
            detail::read_opt(im, "beta_pn", cfg.impairments.beta_pn);
            if (im.contains("pn_variance_form")) {
                const auto form = im.at("pn_variance_form").get<std::string>();
                if (form == "squared_gap")
                    cfg.impairments.pn_variance_form = PhaseNoiseVarianceForm::SquaredGap;
                else if (form == "ar1_stationary")
                    cfg.impairments.pn_variance_form = PhaseNoiseVarianceForm::Ar1Stationary;
                else
                    throw std::invalid_argument("impairments: unknown pn_variance_form '" + form + "'");
            }
            if (im.contains("toggles")) {
                const auto& t = im.at("toggles");
                detail::read_opt(t, "lna", cfg.impairments.toggles.lna);
                detail::read_opt(t, "pn", cfg.impairments.toggles.phase_noise);
                detail::read_opt(t, "iqi", cfg.impairments.toggles.iqi);
                detail::read_opt(t, "adc", cfg.impairments.toggles.adc);
            }
            if (im.contains("per_ap")) {
                for (const auto& o : im.at("per_ap")) {
                    FrontEndCoefficients c = cfg.impairments.coefficients;
                    detail::read_coefficients(o, c);
                    cfg.impairments.per_ap[o.at("ap").get<int>()] = c;
                }
            }
        }
        if (j.contains("layout")) {
            detail::read_opt(j.at("layout"), "area_m", cfg.layout.area_m);
            detail::read_opt(j.at("layout"), "height_diff_m", cfg.layout.height_diff_m);
        }
        if (j.contains("channel")) {
            const auto& c = j.at("channel");
            detail::read_opt(c, "n_clusters", cfg.channel.n_clusters);
            detail::read_opt(c, "cluster_decay", cfg.channel.cluster_decay);
            detail::read_opt(c, "ray_decay", cfg.channel.ray_decay);
            detail::read_opt(c, "angle_spread_deg", cfg.channel.angle_spread_deg);
            detail::read_opt(c, "shadow_std_db", cfg.channel.shadow_std_db);
        }
        if (j.contains("mc")) {
            const auto& m = j.at("mc");
            detail::read_opt(m, "drops", cfg.mc.drops);
            detail::read_opt(m, "channel_realizations", cfg.mc.channel_realizations);
            detail::read_opt(m, "bussgang_samples", cfg.mc.bussgang_samples);
            detail::read_opt(m, "seed", cfg.mc.seed);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    cfg.resolve();
    return cfg;
}

inline json config_to_json(const ScenarioConfig& cfg)
{
    json j;
    j["dims"] = {{"L", cfg.dims.L}, {"N", cfg.dims.N}, {"K", cfg.dims.K},
                 {"M", cfg.dims.M}, {"R", cfg.dims.R}, {"adc_bits", cfg.dims.adc_bits}};
    j["radio"] = {{"fc_ghz", cfg.radio.carrier_freq_ghz},
                  {"scs_hz", cfg.radio.subcarrier_spacing_hz},
                  {"noise_figure_db", cfg.radio.noise_figure_db},
                  {"uplink_power_w", cfg.radio.uplink_power_w}};

    json im = detail::write_coefficients(cfg.impairments.coefficients);
    im["lambda_psi"] = cfg.impairments.lambda_psi;
    im["beta_pn"] = cfg.impairments.beta_pn;
    im["pn_variance_form"] =
        cfg.impairments.pn_variance_form == PhaseNoiseVarianceForm::SquaredGap ? "squared_gap" : "ar1_stationary";
    im["toggles"] = {{"lna", cfg.impairments.toggles.lna},
                     {"pn", cfg.impairments.toggles.phase_noise},
                     {"iqi", cfg.impairments.toggles.iqi},
                     {"adc", cfg.impairments.toggles.adc}};
    if (!cfg.impairments.per_ap.empty()) {
        json overrides = json::array();
        for (const auto& [l, c] : cfg.impairments.per_ap) {
            json o = detail::write_coefficients(c);
            o["ap"] = l;
            overrides.push_back(o);
        }
        im["per_ap"] = overrides;
    }
    j["impairments"] = im;

    j["layout"] = {{"area_m", cfg.layout.area_m}, {"height_diff_m", cfg.layout.height_diff_m}};
    j["channel"] = {{"n_clusters", cfg.channel.n_clusters},
                    {"cluster_decay", cfg.channel.cluster_decay},
                    {"ray_decay", cfg.channel.ray_decay},
                    {"angle_spread_deg", cfg.channel.angle_spread_deg},
                    {"shadow_std_db", cfg.channel.shadow_std_db}};
    j["mc"] = {{"drops", cfg.mc.drops},
               {"channel_realizations", cfg.mc.channel_realizations},
               {"bussgang_samples", cfg.mc.bussgang_samples},
               {"seed", cfg.mc.seed}};
    return j;
}

inline ScenarioConfig default_config()
{
    ScenarioConfig cfg;
    cfg.resolve();
    return cfg;
}

inline ScenarioConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: parse failure in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

inline void save_config(const ScenarioConfig& cfg, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("config: cannot write " + path.string());
    out << config_to_json(cfg).dump(2) << '\n';
}

// ---------- network geometry ----------

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;

    bool operator==(const Point3&) const = default;
};

inline double distance_2d(const Point3& a, const Point3& b) { return std::hypot(a.x - b.x, a.y - b.y); }
inline double distance_3d(const Point3& a, const Point3& b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

struct NetworkScenario {
    ScenarioConfig config;
    std::vector<Point3> ap_positions;
    std::vector<Point3> ue_positions;
    RMat beta; // K x L large-scale gains, linear

    const SystemDims& dims() const { return config.dims; }
};

// Drops L APs and K UEs uniformly in the square [0, area]^2. APs sit height_diff above
// the UEs. Shadowing is i.i.d. per (k, l) pair and fixed for the lifetime of the drop.
inline NetworkScenario drop_network(const ScenarioConfig& config, std::uint64_t seed)
{
    config.dims.validate();
    const double side = config.layout.area_m;
    if (!(side > 0.0))
        throw std::invalid_argument("drop_network: area side must be positive");

    NetworkScenario net;
    net.config = config;
    const int L = config.dims.L;
    const int K = config.dims.K;

    RandomStream geo(derive_seed(seed, Stream::Geometry));
    net.ap_positions.resize(static_cast<std::size_t>(L));
    for (auto& p : net.ap_positions)
        p = {geo.uniform(0.0, side), geo.uniform(0.0, side), config.layout.height_diff_m};
    net.ue_positions.resize(static_cast<std::size_t>(K));
    for (auto& p : net.ue_positions)
        p = {geo.uniform(0.0, side), geo.uniform(0.0, side), 0.0};

    RandomStream shadow(derive_seed(seed, Stream::Shadowing));
    net.beta.resize(K, L);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l) {
            const double d = distance_3d(net.ap_positions[l], net.ue_positions[k]);
            const double sf = config.channel.shadow_std_db * shadow.normal();
            net.beta(k, l) = db_to_linear(pathloss_db(d, config.radio.carrier_freq_ghz, sf));
        }
    return net;
}

} // namespace cfmimo
