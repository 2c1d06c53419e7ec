#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "ddpvf/numeric.hpp"

namespace ddpvf {
inline namespace core_distributions {

// Defective Dagum parameters. The original Dagum type I shape kappa enters as
// 1/theta and the second Dagum shape is fixed at 1; theta < 1 makes the
// distribution defective with cure mass 1 - theta.
struct DagumParams {
    double alpha = 1.0;  // shape; hazard is unimodal for alpha > 1
    double beta = 1.0;   // scale-like rate in the survival function
    double theta = 1.0;  // defectiveness parameter in (0, 1]
};

enum class FrailtyFamily { None, Gamma, InverseGaussian, Pvf };

// Frailty law for the multiplicative random effect on the hazard, identified
// by its Laplace transform. The mean is fixed at 1, so the only free
// parameters are the variance sigma2 and, for the PVF family, the index gamma.
struct FrailtySpec {
    FrailtyFamily family = FrailtyFamily::None;
    double sigma2 = 0.0;
    double gamma = 0.5;

    static FrailtySpec none() { return {FrailtyFamily::None, 0.0, 0.5}; }
    static FrailtySpec gamma_frailty(double sigma2) {
        return {FrailtyFamily::Gamma, sigma2, 0.5};
    }
    static FrailtySpec inverse_gaussian(double sigma2) {
        return {FrailtyFamily::InverseGaussian, sigma2, 0.5};
    }
    static FrailtySpec pvf(double gamma, double sigma2) {
        return {FrailtyFamily::Pvf, sigma2, gamma};
    }
};

struct DDPVFModel {
    DagumParams dagum;
    FrailtySpec frailty;
};

inline void validate(const DagumParams& p) {
    if (!(p.alpha > 0.0) || !(p.beta > 0.0)) {
        throw std::invalid_argument("Dagum alpha and beta must be positive");
    }
    if (!(p.theta > 0.0 && p.theta <= 1.0)) {
        throw std::invalid_argument("Dagum theta must lie in (0, 1]");
    }
}

inline void validate(const FrailtySpec& f) {
    if (f.family == FrailtyFamily::None) {
        return;
    }
    if (!(f.sigma2 > 0.0)) {
        throw std::invalid_argument("frailty variance sigma2 must be positive");
    }
    if (f.family == FrailtyFamily::Pvf && !(f.gamma > 0.0 && f.gamma < 1.0)) {
        throw std::invalid_argument("PVF index gamma must lie strictly inside (0, 1)");
    }
}

inline void validate(const DDPVFModel& m) {
    validate(m.dagum);
    validate(m.frailty);
}

namespace detail {

// Below this index the PVF closed form loses ~1/gamma digits to cancellation
// in (1 - x^gamma)/gamma, so evaluation switches to the analytic gamma limit.
inline constexpr double kPvfGammaSwitch = 1e-4;

inline void require_positive_time(double t) {
    if (!(t > 0.0)) {
        throw std::invalid_argument("time must be strictly positive");
    }
}

}  // namespace detail

// --- defective Dagum pieces, all in the log domain -------------------------

inline double dd_log_survival(double t, const DagumParams& p) {
    detail::require_positive_time(t);
    validate(p);
    const double log_t = std::log(t);
    const double log_theta = std::log(p.theta);
    const double log_beta = std::log(p.beta);
    // with q = theta t^-alpha / beta, S = (1 - theta + q) / (1 + q); this form
    // keeps the far tail exact when theta = 1 and q underflows against beta
    const double log_q = log_theta - p.alpha * log_t - log_beta;
    return log_sum_exp(std::log1p(-p.theta), log_q) - log1pexp(log_q);
}

inline double dd_log_density(double t, const DagumParams& p) {
    detail::require_positive_time(t);
    validate(p);
    const double log_t = std::log(t);
    const double log_theta = std::log(p.theta);
    const double log_beta = std::log(p.beta);
    const double log_q = log_theta - p.alpha * log_t - log_beta;
    const double log_denom = log_beta + log1pexp(log_q);
    return std::log(p.alpha) + log_beta + 2.0 * log_theta - (p.alpha + 1.0) * log_t -
           2.0 * log_denom;
}

inline double dd_hazard(double t, const DagumParams& p) {
    return std::exp(dd_log_density(t, p) - dd_log_survival(t, p));
}

// --- frailty Laplace transform family ---------------------------------------

// log L(s) for the frailty Laplace transform, evaluated at cumulative hazard s.
inline double frailty_log_laplace(double s, const FrailtySpec& f) {
    if (!(s >= 0.0)) {
        throw std::invalid_argument("frailty_log_laplace requires s >= 0");
    }
    validate(f);
    switch (f.family) {
        case FrailtyFamily::None:
            return -s;
        case FrailtyFamily::Gamma:
            return -std::log1p(f.sigma2 * s) / f.sigma2;
        case FrailtyFamily::InverseGaussian:
            // (1 - sqrt(1 + 2 sigma2 s))/sigma2 without cancellation at small s
            return -std::expm1(0.5 * std::log1p(2.0 * f.sigma2 * s)) / f.sigma2;
        case FrailtyFamily::Pvf: {
            if (f.gamma < detail::kPvfGammaSwitch) {
                return -std::log1p(f.sigma2 * s) / f.sigma2;
            }
            if (f.gamma == 0.5) {
                return -std::expm1(0.5 * std::log1p(2.0 * f.sigma2 * s)) / f.sigma2;
            }
            const double scale = (1.0 - f.gamma) / (f.gamma * f.sigma2);
            const double inner = std::log1p(f.sigma2 * s / (1.0 - f.gamma));
            return -scale * std::expm1(f.gamma * inner);
        }
    }
    throw std::logic_error("unreachable frailty family");
}

// log(-L'(s)); the composed density is h_DD(t) * (-L'(s)) at s = -log S_DD(t).
inline double frailty_log_neg_laplace_derivative(double s, const FrailtySpec& f) {
    const double log_laplace = frailty_log_laplace(s, f);
    switch (f.family) {
        case FrailtyFamily::None:
            return log_laplace;
        case FrailtyFamily::Gamma:
            return log_laplace - std::log1p(f.sigma2 * s);
        case FrailtyFamily::InverseGaussian:
            return log_laplace - 0.5 * std::log1p(2.0 * f.sigma2 * s);
        case FrailtyFamily::Pvf: {
            if (f.gamma < detail::kPvfGammaSwitch) {
                return log_laplace - std::log1p(f.sigma2 * s);
            }
            if (f.gamma == 0.5) {
                return log_laplace - 0.5 * std::log1p(2.0 * f.sigma2 * s);
            }
            return log_laplace +
                   (f.gamma - 1.0) * std::log1p(f.sigma2 * s / (1.0 - f.gamma));
        }
    }
    throw std::logic_error("unreachable frailty family");
}

// Inverse of the transform on the log scale: returns s >= 0 with
// log L(s) = log_value. Closed forms exist for every supported family.
inline double frailty_laplace_inverse(double log_value, const FrailtySpec& f) {
    if (!(log_value <= 0.0)) {
        throw std::invalid_argument("frailty_laplace_inverse requires log_value <= 0");
    }
    validate(f);
    if (log_value == kNegInf) {
        return kPosInf;
    }
    switch (f.family) {
        case FrailtyFamily::None:
            return -log_value;
        case FrailtyFamily::Gamma:
            return std::expm1(-f.sigma2 * log_value) / f.sigma2;
        case FrailtyFamily::InverseGaussian:
            return 0.5 * f.sigma2 * log_value * log_value - log_value;
        case FrailtyFamily::Pvf: {
            if (f.gamma < detail::kPvfGammaSwitch) {
                return std::expm1(-f.sigma2 * log_value) / f.sigma2;
            }
            if (f.gamma == 0.5) {
                return 0.5 * f.sigma2 * log_value * log_value - log_value;
            }
            const double scale = (1.0 - f.gamma) / (f.gamma * f.sigma2);
            const double inner = std::log1p(-log_value / scale) / f.gamma;
            return std::expm1(inner) * (1.0 - f.gamma) / f.sigma2;
        }
    }
    throw std::logic_error("unreachable frailty family");
}

// --- composed DD-PVF model ---------------------------------------------------

inline double ddpvf_log_survival(double t, const DDPVFModel& m) {
    return frailty_log_laplace(-dd_log_survival(t, m.dagum), m.frailty);
}

inline double ddpvf_log_density(double t, const DDPVFModel& m) {
    const double log_s_dd = dd_log_survival(t, m.dagum);
    const double log_hazard_dd = dd_log_density(t, m.dagum) - log_s_dd;
    return log_hazard_dd + frailty_log_neg_laplace_derivative(-log_s_dd, m.frailty);
}

inline double ddpvf_hazard(double t, const DDPVFModel& m) {
    return std::exp(ddpvf_log_density(t, m) - ddpvf_log_survival(t, m));
}

// --- cure fraction / theta bijection ----------------------------------------

inline double cure_fraction_from_theta(double theta, const FrailtySpec& f) {
    if (!(theta > 0.0 && theta <= 1.0)) {
        throw std::invalid_argument("theta must lie in (0, 1]");
    }
    validate(f);
    if (theta == 1.0) {
        return 0.0;
    }
    const double s = -std::log1p(-theta);  // -log(1 - theta), cancellation-safe
    return std::exp(frailty_log_laplace(s, f));
}

inline double theta_from_cure_fraction(double p0, const FrailtySpec& f) {
    if (!(p0 >= 0.0 && p0 < 1.0)) {
        throw std::invalid_argument("cure fraction must lie in [0, 1)");
    }
    validate(f);
    if (p0 == 0.0) {
        return 1.0;
    }
    const double s = frailty_laplace_inverse(std::log(p0), f);
    return -std::expm1(-s);
}

inline double cure_fraction(const DDPVFModel& m) {
    return cure_fraction_from_theta(m.dagum.theta, m.frailty);
}

// --- quantile inversion for data generation ----------------------------------

// Time t with overall survival S(t) = 1 - u. Valid for u below the susceptible
// mass 1 - p0; derived by inverting the composed log-survival symbolically
// (Laplace inverse, then the Dagum survival inverse), not transcribed.
inline double susceptible_quantile(double u, const DDPVFModel& m) {
    if (!(u > 0.0 && u < 1.0)) {
        throw std::invalid_argument("susceptible_quantile requires u in (0, 1)");
    }
    validate(m);
    const double s = frailty_laplace_inverse(std::log1p(-u), m.frailty);
    const double theta = m.dagum.theta;
    // S_DD(t) = exp(-s) requires exp(-s) > 1 - theta
    double log_num_factor;  // log(exp(-s) - (1 - theta))
    if (theta == 1.0) {
        log_num_factor = -s;
    } else {
        const double factor = theta + std::expm1(-s);
        if (!(factor > 0.0)) {
            throw std::invalid_argument(
                "susceptible_quantile: target survival does not exceed the cure fraction");
        }
        log_num_factor = std::log(factor);
    }
    const double log_one_minus_q = std::log(-std::expm1(-s));
    const double log_t_pow = std::log(m.dagum.beta) + log_num_factor -
                             std::log(theta) - log_one_minus_q;
    return std::exp(-log_t_pow / m.dagum.alpha);
}

}  // namespace core_distributions
}  // namespace ddpvf
