#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddpvf/distributions.hpp"
#include "ddpvf/numeric.hpp"

namespace ddpvf {
inline namespace regression {

// One subject: observed time, event indicator, and the three design rows
// (each with a leading intercept 1) driving alpha, beta and the cure fraction.
struct SurvivalRecord {
    double time = 0.0;
    int event = 0;
    std::vector<double> w;  // alpha covariates
    std::vector<double> x;  // beta covariates
    std::vector<double> z;  // cure-fraction covariates
};

inline void validate(const SurvivalRecord& rec) {
    if (!(rec.time > 0.0)) {
        throw std::invalid_argument("survival record time must be strictly positive");
    }
    if (rec.event != 0 && rec.event != 1) {
        throw std::invalid_argument("event indicator must be 0 or 1");
    }
    for (const auto* row : {&rec.w, &rec.x, &rec.z}) {
        if (row->empty() || (*row)[0] != 1.0) {
            throw std::invalid_argument("design rows must start with an intercept 1");
        }
    }
}

// Full parameter vector: regression coefficients for the three links plus the
// frailty law (whose sigma2/gamma complete the composite parameter).
struct ModelParameters {
    std::vector<double> zeta;  // alpha = exp(w' zeta)
    std::vector<double> eta;   // beta = exp(-x' eta)
    std::vector<double> nu;    // p0 = logistic(z' nu)
    FrailtySpec frailty;
};

namespace detail {

inline double dot_checked(const std::vector<double>& row, const std::vector<double>& coef,
                          const char* what) {
    if (row.size() != coef.size()) {
        throw std::invalid_argument(std::string("design row and coefficient length differ for ") +
                                    what);
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        acc += row[j] * coef[j];
    }
    return acc;
}

}  // namespace detail

inline double link_alpha(const std::vector<double>& w, const std::vector<double>& zeta) {
    return std::exp(detail::dot_checked(w, zeta, "alpha"));
}

inline double link_beta(const std::vector<double>& x, const std::vector<double>& eta) {
    return std::exp(-detail::dot_checked(x, eta, "beta"));
}

inline double link_cure(const std::vector<double>& z, const std::vector<double>& nu) {
    return logistic(detail::dot_checked(z, nu, "cure"));
}

// Per-subject composite model. When the cure link underflows to exactly 0 the
// proper-distribution branch theta = 1 is selected.
inline DDPVFModel subject_model(const SurvivalRecord& rec, const ModelParameters& params) {
    const double alpha = link_alpha(rec.w, params.zeta);
    const double beta = link_beta(rec.x, params.eta);
    const double p0 = link_cure(rec.z, params.nu);
    const double theta = theta_from_cure_fraction(p0, params.frailty);
    return DDPVFModel{DagumParams{alpha, beta, theta}, params.frailty};
}

// Shape of the flattened parameter vector on the unconstrained optimizer
// scale: coefficients pass through unchanged, sigma2 maps through log and a
// free PVF gamma through logit. Profile fits pin gamma via estimate_gamma.
struct ParameterShape {
    std::size_t zeta_size = 0;
    std::size_t eta_size = 0;
    std::size_t nu_size = 0;
    FrailtyFamily family = FrailtyFamily::None;
    bool estimate_gamma = false;   // only meaningful for the PVF family
    double fixed_gamma = 0.5;      // used when family == Pvf and !estimate_gamma

    std::size_t size() const {
        std::size_t n = zeta_size + eta_size + nu_size;
        if (family != FrailtyFamily::None) {
            n += 1;  // log sigma2
        }
        if (family == FrailtyFamily::Pvf && estimate_gamma) {
            n += 1;  // logit gamma
        }
        return n;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> names;
        for (std::size_t j = 0; j < zeta_size; ++j) {
            names.push_back("zeta" + std::to_string(j));
        }
        for (std::size_t j = 0; j < eta_size; ++j) {
            names.push_back("eta" + std::to_string(j));
        }
        for (std::size_t j = 0; j < nu_size; ++j) {
            names.push_back("nu" + std::to_string(j));
        }
        if (family != FrailtyFamily::None) {
            names.push_back("sigma2");
        }
        if (family == FrailtyFamily::Pvf && estimate_gamma) {
            names.push_back("gamma");
        }
        return names;
    }
};

inline ParameterShape parameter_shape(const ModelParameters& params) {
    ParameterShape shape;
    shape.zeta_size = params.zeta.size();
    shape.eta_size = params.eta.size();
    shape.nu_size = params.nu.size();
    shape.family = params.frailty.family;
    shape.estimate_gamma = params.frailty.family == FrailtyFamily::Pvf;
    shape.fixed_gamma = params.frailty.gamma;
    return shape;
}

inline std::vector<double> pack_parameters(const ModelParameters& params,
                                           const ParameterShape& shape) {
    if (params.zeta.size() != shape.zeta_size || params.eta.size() != shape.eta_size ||
        params.nu.size() != shape.nu_size || params.frailty.family != shape.family) {
        throw std::invalid_argument("pack_parameters: shape mismatch");
    }
    std::vector<double> packed;
    packed.reserve(shape.size());
    packed.insert(packed.end(), params.zeta.begin(), params.zeta.end());
    packed.insert(packed.end(), params.eta.begin(), params.eta.end());
    packed.insert(packed.end(), params.nu.begin(), params.nu.end());
    if (shape.family != FrailtyFamily::None) {
        packed.push_back(std::log(params.frailty.sigma2));
    }
    if (shape.family == FrailtyFamily::Pvf && shape.estimate_gamma) {
        packed.push_back(logit(params.frailty.gamma));
    }
    return packed;
}

inline std::vector<double> pack_parameters(const ModelParameters& params) {
    return pack_parameters(params, parameter_shape(params));
}

inline ModelParameters unpack_parameters(const std::vector<double>& packed,
                                         const ParameterShape& shape) {
    if (packed.size() != shape.size()) {
        throw std::invalid_argument("unpack_parameters: shape mismatch");
    }
    ModelParameters params;
    auto it = packed.begin();
    params.zeta.assign(it, it + static_cast<std::ptrdiff_t>(shape.zeta_size));
    it += static_cast<std::ptrdiff_t>(shape.zeta_size);
    params.eta.assign(it, it + static_cast<std::ptrdiff_t>(shape.eta_size));
    it += static_cast<std::ptrdiff_t>(shape.eta_size);
    params.nu.assign(it, it + static_cast<std::ptrdiff_t>(shape.nu_size));
    it += static_cast<std::ptrdiff_t>(shape.nu_size);
    params.frailty.family = shape.family;
    if (shape.family == FrailtyFamily::None) {
        params.frailty.sigma2 = 0.0;
        params.frailty.gamma = 0.5;
        return params;
    }
    params.frailty.sigma2 = std::exp(*it++);
    if (shape.family == FrailtyFamily::Pvf) {
        if (shape.estimate_gamma) {
            // keep gamma strictly inside (0, 1) even when the optimizer scale
            // saturates the logistic in double precision
            const double g = logistic(*it++);
            params.frailty.gamma =
                std::min(std::max(g, 1e-12), std::nextafter(1.0, 0.0));
        } else {
            params.frailty.gamma = shape.fixed_gamma;
        }
    } else {
        params.frailty.gamma = 0.5;
    }
    return params;
}

}  // namespace regression
}  // namespace ddpvf
