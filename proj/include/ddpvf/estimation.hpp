#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddpvf/distributions.hpp"
#include "ddpvf/nonparametric.hpp"
#include "ddpvf/numeric.hpp"
#include "ddpvf/optimizer.hpp"
#include "ddpvf/regression.hpp"
#include "ddpvf/rng.hpp"

namespace ddpvf {
inline namespace estimation {

// Objective sentinel: non-finite per-subject terms collapse to this value so
// the line search backs off instead of propagating NaN.
inline constexpr double kLogLikelihoodSentinel = -1e30;

class DegenerateData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Natural-scale parameter vector matching the reported covariance layout
// (coefficients, then sigma2, then gamma when it was estimated).
inline std::vector<double> natural_parameter_vector(const ModelParameters& p,
                                                    const ParameterShape& shape) {
    std::vector<double> v;
    v.reserve(shape.size());
    v.insert(v.end(), p.zeta.begin(), p.zeta.end());
    v.insert(v.end(), p.eta.begin(), p.eta.end());
    v.insert(v.end(), p.nu.begin(), p.nu.end());
    if (shape.family != FrailtyFamily::None) {
        v.push_back(p.frailty.sigma2);
    }
    if (shape.family == FrailtyFamily::Pvf && shape.estimate_gamma) {
        v.push_back(p.frailty.gamma);
    }
    return v;
}

struct Criteria {
    double aic = 0.0;
    double aicc = 0.0;
    double bic = 0.0;
    double hqic = 0.0;
    double caic = 0.0;
    bool aicc_defined = true;
};

inline Criteria information_criteria(double loglik, int k, std::size_t n) {
    if (k < 0) {
        throw std::invalid_argument("information_criteria requires k >= 0");
    }
    if (n == 0) {
        throw std::invalid_argument("information_criteria requires n >= 1");
    }
    Criteria crit;
    const double kd = static_cast<double>(k);
    const double nd = static_cast<double>(n);
    crit.aic = -2.0 * loglik + 2.0 * kd;
    crit.bic = -2.0 * loglik + kd * std::log(nd);
    crit.caic = -2.0 * loglik + kd * (std::log(nd) + 1.0);
    crit.hqic = k == 0 ? -2.0 * loglik : -2.0 * loglik + 2.0 * kd * std::log(std::log(nd));
    if (nd > kd + 1.0) {
        crit.aicc = crit.aic + 2.0 * kd * (kd + 1.0) / (nd - kd - 1.0);
    } else {
        crit.aicc = kNaN;
        crit.aicc_defined = false;
    }
    return crit;
}

struct FitConfig {
    int max_iterations = 500;
    double gradient_tolerance = 1e-3;
    int multistart_count = 3;
    std::vector<double> gamma_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double hessian_step_scale = 1.0;
    double confidence_level = 0.95;
    std::uint64_t seed = 0;  // drives the multistart perturbation substream
};

struct FitResult {
    ModelParameters estimates;
    ParameterShape shape;
    Eigen::MatrixXd covariance;                // natural parameter scale
    Eigen::MatrixXd covariance_unconstrained;  // optimizer (log/logit) scale
    std::vector<double> standard_errors;
    std::vector<std::pair<double, double>> confidence_intervals;
    std::vector<std::string> parameter_names;
    double log_likelihood = kLogLikelihoodSentinel;
    Criteria criteria;
    bool converged = false;
    bool singular_information = false;
    int iterations = 0;
    std::optional<std::vector<std::pair<double, double>>> gamma_profile;
    int parameter_count = 0;
    std::size_t sample_size = 0;
    std::size_t event_count = 0;
};

// Full-data log-likelihood: sum of delta * log f + (1 - delta) * log S with
// per-subject models. Returns the sentinel if any term is non-finite.
inline double log_likelihood(const ModelParameters& params,
                             const std::vector<SurvivalRecord>& data) {
    double total = 0.0;
    for (const auto& rec : data) {
        validate(rec);
        const DDPVFModel model = subject_model(rec, params);
        const double term = rec.event == 1 ? ddpvf_log_density(rec.time, model)
                                           : ddpvf_log_survival(rec.time, model);
        if (!std::isfinite(term)) {
            return kLogLikelihoodSentinel;
        }
        total += term;
    }
    return total;
}

namespace detail {

// Records grouped by identical design rows: the per-subject parameters are
// computed once per group, which makes the objective cheap for the factorial
// designs used throughout (a binary covariate yields two groups).
struct GroupedData {
    struct Group {
        std::vector<double> w, x, z;
        std::vector<double> log_t_event;
        std::vector<double> log_t_censored;
    };
    std::vector<Group> groups;
    std::size_t n_records = 0;
    std::size_t n_events = 0;

    static GroupedData build(const std::vector<SurvivalRecord>& data) {
        GroupedData grouped;
        std::map<std::vector<double>, std::size_t> index;
        for (const auto& rec : data) {
            validate(rec);
            if (!data.empty()) {
                const auto& first = data.front();
                if (rec.w.size() != first.w.size() || rec.x.size() != first.x.size() ||
                    rec.z.size() != first.z.size()) {
                    throw std::invalid_argument("design row lengths differ across records");
                }
            }
            std::vector<double> key;
            key.reserve(rec.w.size() + rec.x.size() + rec.z.size());
            key.insert(key.end(), rec.w.begin(), rec.w.end());
            key.insert(key.end(), rec.x.begin(), rec.x.end());
            key.insert(key.end(), rec.z.begin(), rec.z.end());
            auto [it, inserted] = index.try_emplace(std::move(key), grouped.groups.size());
            if (inserted) {
                Group g;
                g.w = rec.w;
                g.x = rec.x;
                g.z = rec.z;
                grouped.groups.push_back(std::move(g));
            }
            Group& g = grouped.groups[it->second];
            const double log_t = std::log(rec.time);
            if (rec.event == 1) {
                g.log_t_event.push_back(log_t);
                ++grouped.n_events;
            } else {
                g.log_t_censored.push_back(log_t);
            }
            ++grouped.n_records;
        }
        return grouped;
    }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        acc += a[j] * b[j];
    }
    return acc;
}

// Same value as log_likelihood but evaluated group-wise without validation
// overhead; the hot path of every fit.
inline double grouped_log_likelihood(const GroupedData& grouped, const ModelParameters& p) {
    const FrailtySpec& fr = p.frailty;
    if (fr.family != FrailtyFamily::None && !(fr.sigma2 > 0.0)) {
        return kLogLikelihoodSentinel;  // sigma2 underflowed on the optimizer scale
    }
    FrailtyFamily family = fr.family;
    if (family == FrailtyFamily::Pvf) {
        if (fr.gamma < core_distributions::detail::kPvfGammaSwitch) {
            family = FrailtyFamily::Gamma;
        } else if (fr.gamma == 0.5) {
            family = FrailtyFamily::InverseGaussian;
        }
    }
    const double s2 = fr.sigma2;
    const double g = fr.gamma;
    const double pvf_b = family == FrailtyFamily::Pvf ? s2 / (1.0 - g) : 0.0;
    const double pvf_c = family == FrailtyFamily::Pvf ? (1.0 - g) / (g * s2) : 0.0;

    double total = 0.0;
    for (const auto& group : grouped.groups) {
        const double log_alpha = dot(group.w, p.zeta);
        const double alpha = std::exp(log_alpha);
        const double log_beta = -dot(group.x, p.eta);
        const double z_nu = dot(group.z, p.nu);
        const double log_p0 = log_logistic(z_nu);
        double log_theta = 0.0;  // theta = 1 branch when the cure link underflows
        if (log_p0 != kNegInf) {
            const double s_star = frailty_laplace_inverse(log_p0, fr);
            log_theta = s_star == kPosInf ? 0.0 : log1mexp(-s_star);
        }
        if (!std::isfinite(alpha) || !std::isfinite(log_beta) || !std::isfinite(log_theta)) {
            return kLogLikelihoodSentinel;
        }
        const double log_const = log_alpha + log_beta + 2.0 * log_theta;
        const double log_one_minus_theta = log_theta == 0.0 ? kNegInf : log1mexp(log_theta);

        // same absorption-free form as dd_log_survival: with q = theta
        // t^-alpha / beta, S = (1 - theta + q) / (1 + q)
        const auto survival_pieces = [&](double log_t, double& log_s_dd, double& log_denom) {
            const double log_q = log_theta - alpha * log_t - log_beta;
            const double lp = log1pexp(log_q);
            log_denom = log_beta + lp;
            log_s_dd = log_sum_exp(log_one_minus_theta, log_q) - lp;
        };
        const auto frailty_terms = [&](double s, double& log_laplace, double& extra) {
            switch (family) {
                case FrailtyFamily::None:
                    log_laplace = -s;
                    extra = 0.0;
                    return;
                case FrailtyFamily::Gamma: {
                    const double a = std::log1p(s2 * s);
                    log_laplace = -a / s2;
                    extra = -a;
                    return;
                }
                case FrailtyFamily::InverseGaussian: {
                    const double a = std::log1p(2.0 * s2 * s);
                    log_laplace = -std::expm1(0.5 * a) / s2;
                    extra = -0.5 * a;
                    return;
                }
                case FrailtyFamily::Pvf: {
                    const double a = std::log1p(pvf_b * s);
                    log_laplace = -pvf_c * std::expm1(g * a);
                    extra = (g - 1.0) * a;
                    return;
                }
            }
        };

        for (const double log_t : group.log_t_censored) {
            double log_s_dd = 0.0, log_denom = 0.0, log_laplace = 0.0, extra = 0.0;
            survival_pieces(log_t, log_s_dd, log_denom);
            frailty_terms(-log_s_dd, log_laplace, extra);
            total += log_laplace;
        }
        for (const double log_t : group.log_t_event) {
            double log_s_dd = 0.0, log_denom = 0.0, log_laplace = 0.0, extra = 0.0;
            survival_pieces(log_t, log_s_dd, log_denom);
            frailty_terms(-log_s_dd, log_laplace, extra);
            total += log_const - (alpha + 1.0) * log_t - 2.0 * log_denom - log_s_dd +
                     extra + log_laplace;
        }
        if (!std::isfinite(total)) {
            return kLogLikelihoodSentinel;
        }
    }
    return total;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline ModelParameters natural_to_parameters(const std::vector<double>& v,
                                             const ParameterShape& shape,
                                             const ModelParameters& like) {
    ModelParameters p = like;
    auto it = v.begin();
    p.zeta.assign(it, it + static_cast<std::ptrdiff_t>(shape.zeta_size));
    it += static_cast<std::ptrdiff_t>(shape.zeta_size);
    p.eta.assign(it, it + static_cast<std::ptrdiff_t>(shape.eta_size));
    it += static_cast<std::ptrdiff_t>(shape.eta_size);
    p.nu.assign(it, it + static_cast<std::ptrdiff_t>(shape.nu_size));
    it += static_cast<std::ptrdiff_t>(shape.nu_size);
    if (shape.family != FrailtyFamily::None) {
        p.frailty.sigma2 = *it++;
    }
    if (shape.family == FrailtyFamily::Pvf && shape.estimate_gamma) {
        p.frailty.gamma = *it++;
    }
    return p;
}

// Starting point chain: the cure intercept comes from the Kaplan-Meier
// plateau, eta from matching the median observed event time, zeta from
// alpha = 1.
inline ModelParameters raw_initial_parameters(const std::vector<SurvivalRecord>& data,
                                              const GroupedData& grouped) {
    const StepFunction km = kaplan_meier(data);
    const double plateau =
        std::min(std::max(km.values.empty() ? 0.5 : km.values.back(), 1e-3), 1.0 - 1e-3);
    std::vector<double> event_times;
    for (const auto& rec : data) {
        if (rec.event == 1) {
            event_times.push_back(rec.time);
        }
    }
    std::sort(event_times.begin(), event_times.end());
    const double median_event = event_times[event_times.size() / 2];
    const double theta_init = 1.0 - plateau;

    ModelParameters init;
    init.zeta.assign(grouped.groups.front().w.size(), 0.0);
    init.eta.assign(grouped.groups.front().x.size(), 0.0);
    init.nu.assign(grouped.groups.front().z.size(), 0.0);
    init.eta[0] = std::log(median_event / theta_init);
    init.nu[0] = logit(plateau);
    init.frailty = FrailtySpec::none();
    return init;
}

struct ShapeFit {
    OptimResult optim;
    ModelParameters estimates;
};

inline ShapeFit optimize_shape(const GroupedData& grouped, const ParameterShape& shape,
                               const ModelParameters& init, const FitConfig& config) {
    const Objective objective = [&](const Eigen::VectorXd& v) {
        const ModelParameters p = unpack_parameters(to_std(v), shape);
        return -grouped_log_likelihood(grouped, p);
    };
    OptimOptions options;
    options.max_iterations = config.max_iterations;
    options.gradient_tolerance = config.gradient_tolerance;

    const Eigen::VectorXd base = to_eigen(pack_parameters(init, shape));
    ShapeFit best;
    for (int start = 0; start < std::max(1, config.multistart_count); ++start) {
        Eigen::VectorXd x0 = base;
        if (start > 0) {
            Rng rng(config.seed, 0x6d756c7469ULL, static_cast<std::uint64_t>(start));
            for (Eigen::Index j = 0; j < x0.size(); ++j) {
                x0[j] += 0.25 * rng.normal();
            }
        }
        OptimResult run = minimize_bfgs(objective, x0, options);
        if (start == 0 || run.value < best.optim.value) {
            best.optim = std::move(run);
        }
    }
    best.estimates = unpack_parameters(to_std(best.optim.x), shape);
    return best;
}

inline FitResult finalize_fit(const GroupedData& grouped, const ParameterShape& shape,
                              const ShapeFit& fit, const FitConfig& config) {
    FitResult result;
    result.shape = shape;
    result.estimates = fit.estimates;
    result.parameter_names = shape.parameter_names();
    result.parameter_count = static_cast<int>(shape.size());
    result.sample_size = grouped.n_records;
    result.event_count = grouped.n_events;
    result.iterations = fit.optim.iterations;
    result.converged = fit.optim.converged;
    result.log_likelihood = -fit.optim.value;
    if (result.log_likelihood <= kLogLikelihoodSentinel) {
        result.converged = false;
    }
    result.criteria = information_criteria(result.log_likelihood, result.parameter_count,
                                           result.sample_size);

    const Objective objective = [&](const Eigen::VectorXd& v) {
        const ModelParameters p = unpack_parameters(to_std(v), shape);
        return -grouped_log_likelihood(grouped, p);
    };
    const Eigen::Index d = fit.optim.x.size();
    const Eigen::MatrixXd information =
        numeric_hessian(objective, fit.optim.x, config.hessian_step_scale);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(information);
    const Eigen::VectorXd eigenvalues = solver.eigenvalues();
    const double max_eig = eigenvalues.cwiseAbs().maxCoeff();
    const double threshold = std::max(max_eig, 1.0) * 1e-12;
    Eigen::VectorXd inv_eigenvalues(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        if (eigenvalues[j] > threshold) {
            inv_eigenvalues[j] = 1.0 / eigenvalues[j];
        } else {
            inv_eigenvalues[j] = 0.0;  // pseudo-inverse direction
            result.singular_information = true;
        }
    }
    result.covariance_unconstrained = solver.eigenvectors() * inv_eigenvalues.asDiagonal() *
                                      solver.eigenvectors().transpose();

    // Map to the natural scale: identity on coefficients, sigma2 on the log
    // scale and gamma on the logit scale have diagonal Jacobian entries.
    Eigen::VectorXd jacobian = Eigen::VectorXd::Ones(d);
    const std::size_t coeffs = shape.zeta_size + shape.eta_size + shape.nu_size;
    if (shape.family != FrailtyFamily::None) {
        jacobian[static_cast<Eigen::Index>(coeffs)] = fit.estimates.frailty.sigma2;
    }
    if (shape.family == FrailtyFamily::Pvf && shape.estimate_gamma) {
        const double g = fit.estimates.frailty.gamma;
        jacobian[static_cast<Eigen::Index>(coeffs) + 1] = g * (1.0 - g);
    }
    result.covariance = jacobian.asDiagonal() * result.covariance_unconstrained *
                        jacobian.asDiagonal();

    const double z = normal_quantile(0.5 * (1.0 + config.confidence_level));
    const std::vector<double> natural = natural_parameter_vector(fit.estimates, shape);
    result.standard_errors.resize(static_cast<std::size_t>(d));
    result.confidence_intervals.resize(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
        const double var = result.covariance(j, j);
        const double se = var > 0.0 ? std::sqrt(var) : 0.0;
        result.standard_errors[static_cast<std::size_t>(j)] = se;
        const double se_u = result.covariance_unconstrained(j, j) > 0.0
                                ? std::sqrt(result.covariance_unconstrained(j, j))
                                : 0.0;
        const double u = fit.optim.x[j];
        std::pair<double, double> ci;
        if (static_cast<std::size_t>(j) < coeffs) {
            ci = {natural[static_cast<std::size_t>(j)] - z * se,
                  natural[static_cast<std::size_t>(j)] + z * se};
        } else if (static_cast<std::size_t>(j) == coeffs &&
                   shape.family != FrailtyFamily::None) {
            ci = {std::exp(u - z * se_u), std::exp(u + z * se_u)};
        } else {
            ci = {logistic(u - z * se_u), logistic(u + z * se_u)};
        }
        result.confidence_intervals[static_cast<std::size_t>(j)] = ci;
    }
    return result;
}

}  // namespace detail

// Maximum-likelihood fit of the selected frailty variant. Frailty fits are
// warm-started from a no-frailty fit per the documented initialization chain;
// a caller that already has such a fit can pass its estimates as warm_start.
inline FitResult fit_mle(const std::vector<SurvivalRecord>& data, const FrailtySpec& spec,
                         const FitConfig& config = {},
                         const ModelParameters* warm_start = nullptr) {
    const detail::GroupedData grouped = detail::GroupedData::build(data);
    if (grouped.n_records == 0) {
        throw std::invalid_argument("fit_mle requires at least one record");
    }
    if (grouped.n_events == 0) {
        throw DegenerateData("fit_mle requires at least one observed event");
    }

    ParameterShape shape;
    shape.zeta_size = grouped.groups.front().w.size();
    shape.eta_size = grouped.groups.front().x.size();
    shape.nu_size = grouped.groups.front().z.size();
    shape.family = spec.family;
    shape.estimate_gamma = spec.family == FrailtyFamily::Pvf;
    if (grouped.n_records < shape.size()) {
        throw std::invalid_argument("fit_mle requires n >= number of parameters");
    }

    ModelParameters init;
    if (warm_start != nullptr) {
        init = *warm_start;
    } else {
        init = detail::raw_initial_parameters(data, grouped);
        if (spec.family != FrailtyFamily::None) {
            ParameterShape dd_shape = shape;
            dd_shape.family = FrailtyFamily::None;
            dd_shape.estimate_gamma = false;
            const detail::ShapeFit dd_fit =
                detail::optimize_shape(grouped, dd_shape, init, config);
            init = dd_fit.estimates;
        }
    }
    const bool warm_frailty =
        warm_start != nullptr && warm_start->frailty.family == spec.family;
    init.frailty.family = spec.family;
    if (spec.family != FrailtyFamily::None && !warm_frailty) {
        init.frailty.sigma2 = 0.5;
        init.frailty.gamma = 0.5;
    }

    const detail::ShapeFit fit = detail::optimize_shape(grouped, shape, init, config);
    return detail::finalize_fit(grouped, shape, fit, config);
}

// Profile likelihood over the PVF index: each grid point maximizes over all
// remaining parameters with gamma held fixed; the selected point maximizes the
// profile, ties broken toward smaller gamma. Reported criteria count the
// profiled parameters only (gamma is not estimated), so a {0.5} grid
// reproduces the inverse-Gaussian fit.
inline FitResult profile_fit_gamma(const std::vector<SurvivalRecord>& data,
                                   const FitConfig& config = {}) {
    if (config.gamma_grid.empty()) {
        throw std::invalid_argument("profile_fit_gamma requires a non-empty gamma grid");
    }
    std::vector<double> grid = config.gamma_grid;
    std::sort(grid.begin(), grid.end());
    for (const double g : grid) {
        if (!(g > 0.0 && g < 1.0)) {
            throw std::invalid_argument("gamma grid values must lie strictly inside (0, 1)");
        }
    }

    const detail::GroupedData grouped = detail::GroupedData::build(data);
    if (grouped.n_events == 0) {
        throw DegenerateData("profile_fit_gamma requires at least one observed event");
    }
    ModelParameters raw = detail::raw_initial_parameters(data, grouped);
    ParameterShape dd_shape;
    dd_shape.zeta_size = raw.zeta.size();
    dd_shape.eta_size = raw.eta.size();
    dd_shape.nu_size = raw.nu.size();
    dd_shape.family = FrailtyFamily::None;
    const detail::ShapeFit dd_fit = detail::optimize_shape(grouped, dd_shape, raw, config);

    std::vector<std::pair<double, double>> profile;
    bool have_best = false;
    detail::ShapeFit best_fit;
    ParameterShape best_shape;
    for (const double gamma : grid) {
        ParameterShape shape = dd_shape;
        shape.family = FrailtyFamily::Pvf;
        shape.estimate_gamma = false;
        shape.fixed_gamma = gamma;
        ModelParameters init = dd_fit.estimates;
        init.frailty = FrailtySpec::pvf(gamma, 0.5);
        const detail::ShapeFit fit = detail::optimize_shape(grouped, shape, init, config);
        const double value = -fit.optim.value;
        if (!std::isfinite(value) || value <= kLogLikelihoodSentinel) {
            continue;  // failed grid point: skipped, visible as a gap in the curve
        }
        profile.emplace_back(gamma, value);
        if (!have_best || value > -best_fit.optim.value) {
            best_fit = fit;
            best_shape = shape;
            have_best = true;
        }
    }
    if (!have_best) {
        throw std::runtime_error("profile_fit_gamma: every grid point failed");
    }
    FitResult result = detail::finalize_fit(grouped, best_shape, best_fit, config);
    result.gamma_profile = std::move(profile);
    return result;
}

// Fraction of replicate confidence intervals containing the true value.
inline double coverage_probability(const std::vector<std::pair<double, double>>& intervals,
                                   double truth) {
    if (intervals.empty()) {
        throw std::invalid_argument("coverage_probability requires at least one interval");
    }
    std::size_t covered = 0;
    for (const auto& ci : intervals) {
        if (ci.first <= truth && truth <= ci.second) {
            ++covered;
        }
    }
    return static_cast<double>(covered) / static_cast<double>(intervals.size());
}

struct DeltaResult {
    double estimate = 0.0;
    double standard_error = 0.0;
    std::pair<double, double> confidence_interval{0.0, 0.0};
    bool covariance_degenerate = false;
};

// First-order variance propagation for a smooth transform of the estimates at
// a covariate profile; the gradient is taken by central differences on the
// natural parameter scale, matching the reported covariance.
inline DeltaResult delta_method_transform(
    const FitResult& fit,
    const std::function<double(const ModelParameters&, const std::vector<double>&)>& transform,
    const std::vector<double>& at, double confidence_level = 0.95) {
    const ParameterShape& shape = fit.shape;
    const std::vector<double> natural = natural_parameter_vector(fit.estimates, shape);
    const std::size_t d = natural.size();
    if (fit.covariance.rows() != static_cast<Eigen::Index>(d)) {
        throw std::invalid_argument("delta_method_transform: fit lacks a matching covariance");
    }

    DeltaResult out;
    out.covariance_degenerate = fit.singular_information;
    out.estimate = transform(fit.estimates, at);

    const std::size_t coeffs = shape.zeta_size + shape.eta_size + shape.nu_size;
    Eigen::VectorXd grad(static_cast<Eigen::Index>(d));
    std::vector<double> probe = natural;
    for (std::size_t j = 0; j < d; ++j) {
        double h = std::max(1e-6, 1e-5 * std::abs(natural[j]));
        if (j == coeffs && shape.family != FrailtyFamily::None) {
            h = std::min(h, 0.5 * natural[j]);  // keep sigma2 positive
        }
        if (j == coeffs + 1 && shape.family == FrailtyFamily::Pvf && shape.estimate_gamma) {
            h = std::min(h, 0.49 * std::min(natural[j], 1.0 - natural[j]));
        }
        probe[j] = natural[j] + h;
        const double up =
            transform(detail::natural_to_parameters(probe, shape, fit.estimates), at);
        probe[j] = natural[j] - h;
        const double down =
            transform(detail::natural_to_parameters(probe, shape, fit.estimates), at);
        probe[j] = natural[j];
        grad[static_cast<Eigen::Index>(j)] = (up - down) / (2.0 * h);
    }

    const double variance = grad.dot(fit.covariance * grad);
    out.standard_error = variance > 0.0 ? std::sqrt(variance) : 0.0;
    const double z = normal_quantile(0.5 * (1.0 + confidence_level));
    out.confidence_interval = {out.estimate - z * out.standard_error,
                               out.estimate + z * out.standard_error};
    return out;
}

// Transforms reported at covariate profiles (Wald CIs are not clipped to the
// natural range; callers flag range violations).
inline double theta_at(const ModelParameters& params, const std::vector<double>& z) {
    return theta_from_cure_fraction(link_cure(z, params.nu), params.frailty);
}

inline double cure_fraction_at(const ModelParameters& params, const std::vector<double>& z) {
    return link_cure(z, params.nu);
}

// Ranking by AIC (ascending); ties broken by fewer parameters, then input order.
inline std::vector<std::size_t> compare_models(const std::vector<FitResult>& fits) {
    std::vector<std::size_t> order(fits.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (fits[a].criteria.aic != fits[b].criteria.aic) {
            return fits[a].criteria.aic < fits[b].criteria.aic;
        }
        return fits[a].parameter_count < fits[b].parameter_count;
    });
    return order;
}

}  // namespace estimation
}  // namespace ddpvf
