#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>

namespace ddpvf {
inline namespace estimation_detail {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimOptions {
    int max_iterations = 500;
    double gradient_tolerance = 1e-5;
    double gradient_step_scale = 1e-5;  // central-difference step per unit coordinate
};

struct OptimResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    Eigen::VectorXd gradient;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

inline Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x,
                                        double step_scale, int* evaluations = nullptr) {
    const Eigen::Index d = x.size();
    Eigen::VectorXd grad(d);
    Eigen::VectorXd probe = x;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double h = step_scale * std::max(1.0, std::abs(x[j]));
        probe[j] = x[j] + h;
        const double up = f(probe);
        probe[j] = x[j] - h;
        const double down = f(probe);
        probe[j] = x[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    if (evaluations != nullptr) {
        *evaluations += static_cast<int>(2 * d);
    }
    return grad;
}

// Central-difference Hessian with per-coordinate steps max(1e-5, 1e-4 |x_j|),
// optionally rescaled; symmetric by construction.
inline Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x,
                                       double step_scale = 1.0) {
    const Eigen::Index d = x.size();
    Eigen::VectorXd h(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        h[j] = step_scale * std::max(1e-5, 1e-4 * std::abs(x[j]));
    }
    const double fx = f(x);
    Eigen::MatrixXd hess(d, d);
    Eigen::VectorXd probe = x;
    for (Eigen::Index j = 0; j < d; ++j) {
        probe[j] = x[j] + h[j];
        const double up = f(probe);
        probe[j] = x[j] - h[j];
        const double down = f(probe);
        probe[j] = x[j];
        hess(j, j) = (up - 2.0 * fx + down) / (h[j] * h[j]);
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index l = j + 1; l < d; ++l) {
            probe[j] = x[j] + h[j];
            probe[l] = x[l] + h[l];
            const double pp = f(probe);
            probe[l] = x[l] - h[l];
            const double pm = f(probe);
            probe[j] = x[j] - h[j];
            const double mm = f(probe);
            probe[l] = x[l] + h[l];
            const double mp = f(probe);
            probe[j] = x[j];
            probe[l] = x[l];
            const double value = (pp - pm - mp + mm) / (4.0 * h[j] * h[l]);
            hess(j, l) = value;
            hess(l, j) = value;
        }
    }
    return hess;
}

// BFGS (inverse-Hessian form) with Armijo backtracking and a curvature-guarded
// update; gradients come from central differences. Non-finite or sentinel
// objective values simply fail the Armijo test and shrink the step.
inline OptimResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0,
                                 const OptimOptions& options = {}) {
    const Eigen::Index d = x0.size();
    OptimResult result;
    result.x = x0;
    result.value = f(x0);
    result.evaluations = 1;
    if (!std::isfinite(result.value)) {
        result.gradient = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
        return result;
    }

    Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd grad =
        numeric_gradient(f, result.x, options.gradient_step_scale, &result.evaluations);
    int stagnation = 0;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter;
        if (!grad.allFinite()) {
            break;
        }
        if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd direction = -(inv_hessian * grad);
        double slope = grad.dot(direction);
        if (!(slope < 0.0) || !direction.allFinite()) {
            inv_hessian.setIdentity();
            direction = -grad;
            slope = -grad.squaredNorm();
        }

        constexpr double armijo = 1e-4;
        double step = 1.0;
        double trial_value = std::numeric_limits<double>::infinity();
        Eigen::VectorXd trial;
        bool accepted = false;
        while (step > 1e-14) {
            trial = result.x + step * direction;
            trial_value = f(trial);
            ++result.evaluations;
            if (std::isfinite(trial_value) &&
                trial_value <= result.value + armijo * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!inv_hessian.isIdentity(0.0)) {
                inv_hessian.setIdentity();
                continue;  // retry along steepest descent
            }
            break;
        }

        Eigen::VectorXd new_grad =
            numeric_gradient(f, trial, options.gradient_step_scale, &result.evaluations);
        const Eigen::VectorXd s = trial - result.x;
        const Eigen::VectorXd y = new_grad - grad;
        const double sy = s.dot(y);
        if (std::isfinite(sy) && sy > 1e-10 * s.norm() * y.norm()) {
            const Eigen::VectorXd hy = inv_hessian * y;
            const double yhy = y.dot(hy);
            inv_hessian += ((sy + yhy) / (sy * sy)) * (s * s.transpose());
            inv_hessian -= (hy * s.transpose() + s * hy.transpose()) / sy;
        }

        if (std::abs(result.value - trial_value) <= 1e-14 * (1.0 + std::abs(result.value))) {
            ++stagnation;
        } else {
            stagnation = 0;
        }
        result.x = trial;
        result.value = trial_value;
        grad = new_grad;
        if (stagnation >= 3) {
            result.converged = grad.cwiseAbs().maxCoeff() < options.gradient_tolerance;
            break;
        }
    }

    if (!result.converged && grad.allFinite()) {
        result.converged = grad.cwiseAbs().maxCoeff() < options.gradient_tolerance;
    }
    result.gradient = grad;
    return result;
}

}  // namespace estimation_detail
}  // namespace ddpvf
