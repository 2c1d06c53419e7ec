#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ddpvf/distributions.hpp"
#include "ddpvf/estimation.hpp"
#include "ddpvf/regression.hpp"
#include "ddpvf/rng.hpp"

namespace ddpvf {
inline namespace simulation {

class InfeasibleCensoring : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Scenario { One, Two };

// Monte Carlo study definition: true parameters, the Bernoulli law of the
// single binary covariate, the (n, sigma2) grid, replicate count and the
// target censoring proportion pc. A sigma2 value of 0 means no frailty in the
// generating model for that cell.
struct ScenarioConfig {
    ModelParameters true_params;
    double covariate_bernoulli = 0.5;
    std::vector<int> sample_sizes = {500, 2000, 5000};
    std::vector<double> sigma2_values = {0.5};
    int replicates = 200;
    double target_censoring = 0.88;
    std::uint64_t seed = 20260825;
    Scenario scenario = Scenario::One;
    int pilot_n = 50000;
    int threads = 1;
    FitConfig fit_config;
};

inline ScenarioConfig scenario_one_config() {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::One;
    cfg.true_params.zeta = {0.7, -0.16};
    cfg.true_params.eta = {7.3, -1.4};
    cfg.true_params.nu = {-0.6, -1.5};
    cfg.true_params.frailty = FrailtySpec::gamma_frailty(0.5);
    cfg.covariate_bernoulli = 0.5;
    cfg.sigma2_values = {0.5};
    cfg.target_censoring = 0.88;
    cfg.fit_config.multistart_count = 1;  // warm-started replicate fits
    return cfg;
}

inline ScenarioConfig scenario_two_config() {
    ScenarioConfig cfg;
    cfg.scenario = Scenario::Two;
    cfg.true_params.zeta = {0.45, 0.64};
    cfg.true_params.eta = {8.0, -1.5};
    cfg.true_params.nu = {1.5, -5.0};
    cfg.true_params.frailty = FrailtySpec::pvf(0.73, 11.0);
    cfg.covariate_bernoulli = 0.1;
    cfg.sigma2_values = {5.0, 11.0};
    cfg.target_censoring = 0.91;
    cfg.fit_config.multistart_count = 1;
    return cfg;
}

inline ModelParameters cell_parameters(const ScenarioConfig& cfg, double sigma2) {
    if (sigma2 < 0.0) {
        throw std::invalid_argument("sigma2 must be nonnegative");
    }
    ModelParameters params = cfg.true_params;
    if (sigma2 == 0.0) {
        params.frailty = FrailtySpec::none();
    } else {
        params.frailty.sigma2 = sigma2;
    }
    return params;
}

// One fully resolved (sigma2, tau) generation cell.
struct ScenarioCell {
    ModelParameters params;
    double covariate_bernoulli = 0.5;
    double tau = 1.0;
};

namespace detail {

// Per-covariate-level generation state shared by all subjects in the level.
struct SubgroupModel {
    std::vector<double> row;
    DDPVFModel model;
    double p0 = 0.0;
    bool proper = false;  // theta within 1e-12 of 1: proper-distribution branch
};

inline std::vector<SubgroupModel> subgroup_models(const ModelParameters& params) {
    std::vector<SubgroupModel> subs(2);
    for (int level = 0; level < 2; ++level) {
        SubgroupModel& sub = subs[static_cast<std::size_t>(level)];
        sub.row = {1.0, static_cast<double>(level)};
        const double alpha = link_alpha(sub.row, params.zeta);
        const double beta = link_beta(sub.row, params.eta);
        sub.p0 = link_cure(sub.row, params.nu);
        double theta = theta_from_cure_fraction(sub.p0, params.frailty);
        sub.proper = std::abs(theta - 1.0) < 1e-12;
        if (sub.proper) {
            theta = 1.0;
        }
        sub.model = DDPVFModel{DagumParams{alpha, beta, theta}, params.frailty};
    }
    return subs;
}

// Latent lifetime draw following the generation algorithm: one uniform decides
// cure status; susceptibles invert the survival function on (0, 1 - p0). The
// proper branch reuses the first uniform directly.
inline double draw_latent(const SubgroupModel& sub, Rng& rng) {
    const double u = rng.uniform();
    if (sub.proper) {
        return susceptible_quantile(u, sub.model);
    }
    if (u < sub.p0) {
        return kPosInf;  // cured: always ends censored
    }
    const double u1 = (1.0 - sub.p0) * rng.uniform();
    return susceptible_quantile(u1, sub.model);
}

}  // namespace detail

// Generate one record with caller-supplied design rows; the scenario presets
// wrap this with the single binary covariate shared by all three designs.
inline SurvivalRecord generate_record(const ModelParameters& params, std::vector<double> w,
                                      std::vector<double> x, std::vector<double> z, double tau,
                                      Rng& rng) {
    SurvivalRecord rec;
    const double alpha = link_alpha(w, params.zeta);
    const double beta = link_beta(x, params.eta);
    const double p0 = link_cure(z, params.nu);
    double theta = theta_from_cure_fraction(p0, params.frailty);
    const bool proper = std::abs(theta - 1.0) < 1e-12;
    if (proper) {
        theta = 1.0;
    }
    const DDPVFModel model{DagumParams{alpha, beta, theta}, params.frailty};

    const double u = rng.uniform();
    double latent = kPosInf;
    if (proper) {
        latent = susceptible_quantile(u, model);
    } else if (u >= p0) {
        latent = susceptible_quantile((1.0 - p0) * rng.uniform(), model);
    }
    const double censor = tau * rng.uniform();
    rec.time = latent < censor ? latent : censor;
    rec.event = latent < censor ? 1 : 0;
    rec.w = std::move(w);
    rec.x = std::move(x);
    rec.z = std::move(z);
    return rec;
}

inline std::vector<SurvivalRecord> generate_dataset(const ScenarioCell& cell, int n, Rng& rng) {
    if (n < 1) {
        throw std::invalid_argument("generate_dataset requires n >= 1");
    }
    if (!(cell.tau > 0.0)) {
        throw std::invalid_argument("generate_dataset requires tau > 0");
    }
    const auto subs = detail::subgroup_models(cell.params);
    std::vector<SurvivalRecord> data;
    data.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::size_t level = rng.bernoulli(cell.covariate_bernoulli) ? 1 : 0;
        const detail::SubgroupModel& sub = subs[level];
        const double latent = detail::draw_latent(sub, rng);
        const double censor = cell.tau * rng.uniform();
        SurvivalRecord rec;
        rec.time = latent < censor ? latent : censor;
        rec.event = latent < censor ? 1 : 0;
        rec.w = sub.row;
        rec.x = sub.row;
        rec.z = sub.row;
        data.push_back(std::move(rec));
    }
    return data;
}

// Bisection for the censoring bound tau with shared random numbers: the pilot
// latents and censoring uniforms are drawn once, so the empirical censoring
// proportion is deterministic and monotone in tau.
inline double calibrate_tau(const ScenarioConfig& cfg, double sigma2, double pc, int pilot_n,
                            Rng& rng) {
    if (!(pc > 0.0 && pc < 1.0)) {
        throw std::invalid_argument("target censoring must lie in (0, 1)");
    }
    if (pilot_n < 100) {
        throw std::invalid_argument("pilot_n too small to calibrate censoring");
    }
    const ModelParameters params = cell_parameters(cfg, sigma2);
    const auto subs = detail::subgroup_models(params);

    std::vector<double> latent(static_cast<std::size_t>(pilot_n));
    std::vector<double> censor_u(static_cast<std::size_t>(pilot_n));
    std::size_t cured = 0;
    for (int i = 0; i < pilot_n; ++i) {
        const std::size_t level = rng.bernoulli(cfg.covariate_bernoulli) ? 1 : 0;
        latent[static_cast<std::size_t>(i)] = detail::draw_latent(subs[level], rng);
        if (latent[static_cast<std::size_t>(i)] == kPosInf) {
            ++cured;
        }
        censor_u[static_cast<std::size_t>(i)] = rng.uniform();
    }
    const double cure_share = static_cast<double>(cured) / static_cast<double>(pilot_n);
    if (pc < cure_share) {
        throw InfeasibleCensoring(
            "target censoring " + std::to_string(pc) +
            " is below the cured share " + std::to_string(cure_share));
    }

    const auto censoring_at = [&](double tau) {
        std::size_t censored = 0;
        for (std::size_t i = 0; i < latent.size(); ++i) {
            if (latent[i] == kPosInf || tau * censor_u[i] < latent[i]) {
                ++censored;
            }
        }
        return static_cast<double>(censored) / static_cast<double>(latent.size());
    };

    double hi = 1.0;
    int growth = 0;
    while (censoring_at(hi) > pc && growth++ < 400) {
        hi *= 2.0;
    }
    double lo = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double prop = censoring_at(mid);
        if (std::abs(prop - pc) < 0.005) {
            return mid;
        }
        if (prop > pc) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double tau = 0.5 * (lo + hi);
    if (std::abs(censoring_at(tau) - pc) >= 0.005) {
        throw InfeasibleCensoring("calibration failed to reach the target censoring");
    }
    return tau;
}

struct CellSummary {
    int n = 0;
    double sigma2 = 0.0;
    double tau = 0.0;
    int replicates = 0;
    int failures = 0;
    double failure_rate = 0.0;
    bool flagged = false;  // more than 5% of replicate fits failed
    std::vector<std::string> parameter_names;
    std::vector<double> truth;
    std::vector<double> bias;
    std::vector<double> rmse;
    std::vector<double> coverage;
    // proportion of replicate theta CIs containing 1, per covariate level
    std::array<double, 2> theta_contains_one_frailty{0.0, 0.0};
    std::array<double, 2> theta_contains_one_dd{0.0, 0.0};
    std::map<std::string, double> ic_prefers_frailty;
};

struct MonteCarloSummary {
    std::vector<CellSummary> cells;
};

namespace detail {

struct ReplicateOutcome {
    bool ok = false;
    std::vector<double> estimate;
    std::vector<char> covered;
    std::array<char, 2> theta_one_frailty{0, 0};
    std::array<char, 2> theta_one_dd{0, 0};
    std::array<char, 5> prefers_frailty{0, 0, 0, 0, 0};
};

inline std::array<double, 5> criteria_values(const Criteria& crit) {
    return {crit.aic, crit.aicc, crit.bic, crit.hqic, crit.caic};
}

}  // namespace detail

// Full study driver: per cell, calibrate tau once, then generate/fit per
// replicate on a private substream. Fit failures are excluded from the
// aggregates but counted; replicate slots are merged in index order so the
// summary is identical regardless of thread count or completion order.
inline MonteCarloSummary run_monte_carlo(const ScenarioConfig& cfg) {
    if (cfg.replicates < 1) {
        throw std::invalid_argument("replicates must be >= 1");
    }
    if (cfg.sample_sizes.empty() || cfg.sigma2_values.empty()) {
        throw std::invalid_argument("sample_sizes and sigma2_values must be non-empty");
    }
    const FrailtyFamily frailty_family = cfg.true_params.frailty.family;
    if (frailty_family == FrailtyFamily::None) {
        throw std::invalid_argument("the scenario's frailty model must not be None");
    }
    static const std::array<const char*, 5> ic_names = {"aic", "aicc", "bic", "hqic", "caic"};

    MonteCarloSummary summary;
    std::uint64_t cell_index = 0;
    for (const int n : cfg.sample_sizes) {
        for (const double sigma2 : cfg.sigma2_values) {
            Rng calibration_rng(cfg.seed, cell_index, 0);
            ScenarioCell cell;
            cell.params = cell_parameters(cfg, sigma2);
            cell.covariate_bernoulli = cfg.covariate_bernoulli;
            cell.tau = calibrate_tau(cfg, sigma2, cfg.target_censoring, cfg.pilot_n,
                                     calibration_rng);

            // Truth on the fitted frailty model's natural scale.
            ParameterShape fit_shape;
            fit_shape.zeta_size = cfg.true_params.zeta.size();
            fit_shape.eta_size = cfg.true_params.eta.size();
            fit_shape.nu_size = cfg.true_params.nu.size();
            fit_shape.family = frailty_family;
            fit_shape.estimate_gamma = frailty_family == FrailtyFamily::Pvf;
            ModelParameters truth_params = cfg.true_params;
            truth_params.frailty.sigma2 = sigma2;
            truth_params.frailty.family = frailty_family;
            const std::vector<double> truth =
                natural_parameter_vector(truth_params, fit_shape);

            const int replicates = cfg.replicates;
            std::vector<detail::ReplicateOutcome> outcomes(
                static_cast<std::size_t>(replicates));
            const auto run_replicate = [&](int r) {
                detail::ReplicateOutcome outcome;
                Rng rng(cfg.seed, cell_index, static_cast<std::uint64_t>(r) + 1);
                const std::vector<SurvivalRecord> data = generate_dataset(cell, n, rng);
                FitConfig fit_config = cfg.fit_config;
                fit_config.seed = cfg.seed ^ (cell_index << 32) ^
                                  static_cast<std::uint64_t>(r);
                FrailtySpec fit_spec = cfg.true_params.frailty;
                try {
                    const FitResult dd = fit_mle(data, FrailtySpec::none(), fit_config);
                    const FitResult frail =
                        fit_mle(data, fit_spec, fit_config, &dd.estimates);
                    if (!dd.converged || !frail.converged) {
                        return outcome;
                    }
                    outcome.estimate = natural_parameter_vector(frail.estimates, frail.shape);
                    outcome.covered.resize(truth.size());
                    for (std::size_t j = 0; j < truth.size(); ++j) {
                        const auto& ci = frail.confidence_intervals[j];
                        outcome.covered[j] =
                            ci.first <= truth[j] && truth[j] <= ci.second ? 1 : 0;
                    }
                    for (int level = 0; level < 2; ++level) {
                        const std::vector<double> z = {1.0, static_cast<double>(level)};
                        const DeltaResult th_frail = delta_method_transform(
                            frail, theta_at, z, fit_config.confidence_level);
                        const DeltaResult th_dd = delta_method_transform(
                            dd, theta_at, z, fit_config.confidence_level);
                        outcome.theta_one_frailty[static_cast<std::size_t>(level)] =
                            th_frail.confidence_interval.first <= 1.0 &&
                                    1.0 <= th_frail.confidence_interval.second
                                ? 1
                                : 0;
                        outcome.theta_one_dd[static_cast<std::size_t>(level)] =
                            th_dd.confidence_interval.first <= 1.0 &&
                                    1.0 <= th_dd.confidence_interval.second
                                ? 1
                                : 0;
                    }
                    const auto dd_crit = detail::criteria_values(dd.criteria);
                    const auto fr_crit = detail::criteria_values(frail.criteria);
                    for (std::size_t c = 0; c < 5; ++c) {
                        outcome.prefers_frailty[c] = fr_crit[c] < dd_crit[c] ? 1 : 0;
                    }
                    outcome.ok = true;
                } catch (const std::exception&) {
                    outcome.ok = false;
                }
                return outcome;
            };

            const int threads = std::max(1, cfg.threads);
            if (threads == 1) {
                for (int r = 0; r < replicates; ++r) {
                    outcomes[static_cast<std::size_t>(r)] = run_replicate(r);
                }
            } else {
                std::vector<std::thread> pool;
                pool.reserve(static_cast<std::size_t>(threads));
                for (int tid = 0; tid < threads; ++tid) {
                    pool.emplace_back([&, tid] {
                        for (int r = tid; r < replicates; r += threads) {
                            outcomes[static_cast<std::size_t>(r)] = run_replicate(r);
                        }
                    });
                }
                for (auto& worker : pool) {
                    worker.join();
                }
            }

            CellSummary cell_summary;
            cell_summary.n = n;
            cell_summary.sigma2 = sigma2;
            cell_summary.tau = cell.tau;
            cell_summary.replicates = replicates;
            cell_summary.parameter_names = fit_shape.parameter_names();
            cell_summary.truth = truth;
            const std::size_t d = truth.size();
            std::vector<double> sum(d, 0.0), sum_sq(d, 0.0), cover(d, 0.0);
            std::array<double, 2> th_frail{0.0, 0.0}, th_dd{0.0, 0.0};
            std::array<double, 5> prefer{0.0, 0.0, 0.0, 0.0, 0.0};
            int ok_count = 0;
            for (const auto& outcome : outcomes) {
                if (!outcome.ok) {
                    continue;
                }
                ++ok_count;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = outcome.estimate[j] - truth[j];
                    sum[j] += outcome.estimate[j];
                    sum_sq[j] += diff * diff;
                    cover[j] += outcome.covered[j];
                }
                for (int level = 0; level < 2; ++level) {
                    th_frail[static_cast<std::size_t>(level)] +=
                        outcome.theta_one_frailty[static_cast<std::size_t>(level)];
                    th_dd[static_cast<std::size_t>(level)] +=
                        outcome.theta_one_dd[static_cast<std::size_t>(level)];
                }
                for (std::size_t c = 0; c < 5; ++c) {
                    prefer[c] += outcome.prefers_frailty[c];
                }
            }
            cell_summary.failures = replicates - ok_count;
            cell_summary.failure_rate =
                static_cast<double>(cell_summary.failures) / static_cast<double>(replicates);
            cell_summary.flagged = cell_summary.failure_rate > 0.05;
            cell_summary.bias.assign(d, kNaN);
            cell_summary.rmse.assign(d, kNaN);
            cell_summary.coverage.assign(d, kNaN);
            if (ok_count > 0) {
                const double m = static_cast<double>(ok_count);
                for (std::size_t j = 0; j < d; ++j) {
                    cell_summary.bias[j] = sum[j] / m - truth[j];
                    cell_summary.rmse[j] = std::sqrt(sum_sq[j] / m);
                    cell_summary.coverage[j] = cover[j] / m;
                }
                for (int level = 0; level < 2; ++level) {
                    cell_summary.theta_contains_one_frailty[static_cast<std::size_t>(level)] =
                        th_frail[static_cast<std::size_t>(level)] / m;
                    cell_summary.theta_contains_one_dd[static_cast<std::size_t>(level)] =
                        th_dd[static_cast<std::size_t>(level)] / m;
                }
                for (std::size_t c = 0; c < 5; ++c) {
                    cell_summary.ic_prefers_frailty[ic_names[c]] = prefer[c] / m;
                }
            }
            summary.cells.push_back(std::move(cell_summary));
            ++cell_index;
        }
    }
    return summary;
}

}  // namespace simulation
}  // namespace ddpvf
