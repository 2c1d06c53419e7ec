#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ddpvf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// log(1 + exp(x)) without overflow for large |x|.
inline double log1pexp(double x) {
    if (x > 33.3) {
        return x;
    }
    if (x > -37.0) {
        return std::log1p(std::exp(x));
    }
    return std::exp(x);
}

// log(1 - exp(x)) for x <= 0; switches forms at -log 2 to limit cancellation.
inline double log1mexp(double x) {
    if (x > 0.0) {
        throw std::invalid_argument("log1mexp requires a non-positive argument");
    }
    if (x == 0.0) {
        return kNegInf;
    }
    constexpr double ln2 = 0.6931471805599453;
    if (x > -ln2) {
        return std::log(-std::expm1(x));
    }
    return std::log1p(-std::exp(x));
}

// log(exp(a) + exp(b)) guarded against -inf inputs.
inline double log_sum_exp(double a, double b) {
    if (a == kNegInf) {
        return b;
    }
    if (b == kNegInf) {
        return a;
    }
    const double hi = a > b ? a : b;
    const double lo = a > b ? b : a;
    return hi + std::log1p(std::exp(lo - hi));
}

// Overflow-safe logistic: for x >= 0 uses 1/(1+exp(-x)).
inline double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log of the logistic function, stable for very negative x.
inline double log_logistic(double x) {
    return -log1pexp(-x);
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("logit requires an argument strictly inside (0, 1)");
    }
    return std::log(p) - std::log1p(-p);
}

// Standard normal quantile (Acklam's rational approximation plus one Halley
// refinement through erfc); absolute error well below 1e-14 on (0, 1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("normal_quantile requires p strictly inside (0, 1)");
    }

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};

    const double p_low = 0.02425;
    double x = 0.0;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

}  // namespace ddpvf
