#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ddpvf/regression.hpp"

namespace ddpvf {
inline namespace nonparametric {

// Right-continuous step function with value 1 before the first knot; used for
// Kaplan-Meier curves and exported model survival curves.
struct StepFunction {
    std::vector<double> knots;     // strictly increasing times
    std::vector<double> values;    // value on [knot_j, knot_{j+1})
    std::vector<double> variance;  // Greenwood variance at each knot (KM only)

    double operator()(double t) const {
        auto it = std::upper_bound(knots.begin(), knots.end(), t);
        if (it == knots.begin()) {
            return 1.0;
        }
        return values[static_cast<std::size_t>(it - knots.begin()) - 1];
    }
};

// Product-limit estimator. Ties between events and censorings at the same
// time are resolved events-first: censored subjects at t remain in the risk
// set for the event at t.
inline StepFunction kaplan_meier(const std::vector<SurvivalRecord>& data) {
    if (data.empty()) {
        throw std::invalid_argument("kaplan_meier requires at least one record");
    }
    std::vector<std::pair<double, int>> obs;
    obs.reserve(data.size());
    for (const auto& rec : data) {
        if (!(rec.time > 0.0)) {
            throw std::invalid_argument("kaplan_meier requires strictly positive times");
        }
        obs.emplace_back(rec.time, rec.event);
    }
    std::sort(obs.begin(), obs.end());

    StepFunction curve;
    const std::size_t n = obs.size();
    double survival = 1.0;
    double greenwood_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        const double t = obs[i].first;
        std::size_t events = 0;
        std::size_t j = i;
        while (j < n && obs[j].first == t) {
            events += static_cast<std::size_t>(obs[j].second);
            ++j;
        }
        if (events > 0) {
            const double at_risk = static_cast<double>(n - i);
            const double d = static_cast<double>(events);
            survival *= 1.0 - d / at_risk;
            if (at_risk > d) {
                greenwood_sum += d / (at_risk * (at_risk - d));
            }
            curve.knots.push_back(t);
            curve.values.push_back(survival);
            curve.variance.push_back(survival > 0.0
                                         ? survival * survival * greenwood_sum
                                         : 0.0);
        }
        i = j;
    }
    return curve;
}

struct HazardCurve {
    std::vector<double> times;
    std::vector<double> values;
    double bandwidth = 0.0;
};

// Epanechnikov-smoothed Nelson-Aalen increments on a uniform grid. The grid is
// trimmed by one bandwidth at each end to limit boundary bias; no boundary
// kernel correction is applied. A non-positive bandwidth selects the
// rule-of-thumb (event-time range)/8.
inline HazardCurve kernel_hazard(const std::vector<SurvivalRecord>& data,
                                 double bandwidth = 0.0, std::size_t grid_size = 201) {
    if (data.empty()) {
        throw std::invalid_argument("kernel_hazard requires at least one record");
    }
    std::vector<std::pair<double, int>> obs;
    obs.reserve(data.size());
    for (const auto& rec : data) {
        obs.emplace_back(rec.time, rec.event);
    }
    std::sort(obs.begin(), obs.end());

    // Nelson-Aalen increments d_j / n_j at distinct event times.
    std::vector<double> event_times;
    std::vector<double> increments;
    const std::size_t n = obs.size();
    std::size_t i = 0;
    while (i < n) {
        const double t = obs[i].first;
        std::size_t events = 0;
        std::size_t j = i;
        while (j < n && obs[j].first == t) {
            events += static_cast<std::size_t>(obs[j].second);
            ++j;
        }
        if (events > 0) {
            event_times.push_back(t);
            increments.push_back(static_cast<double>(events) / static_cast<double>(n - i));
        }
        i = j;
    }
    if (event_times.empty()) {
        throw std::invalid_argument("kernel_hazard requires at least one event");
    }

    const double t_min = event_times.front();
    const double t_max = event_times.back();
    if (bandwidth <= 0.0) {
        const double range = t_max - t_min;
        bandwidth = range > 0.0 ? range / 8.0 : std::max(t_max / 8.0, 1e-6);
    }

    HazardCurve curve;
    curve.bandwidth = bandwidth;
    double lo = t_min + bandwidth;
    double hi = t_max - bandwidth;
    if (lo >= hi) {
        lo = hi = 0.5 * (t_min + t_max);
    }
    const std::size_t points = lo == hi ? 1 : grid_size;
    for (std::size_t g = 0; g < points; ++g) {
        const double t =
            points == 1 ? lo : lo + (hi - lo) * static_cast<double>(g) /
                                        static_cast<double>(points - 1);
        double value = 0.0;
        for (std::size_t k = 0; k < event_times.size(); ++k) {
            const double u = (t - event_times[k]) / bandwidth;
            if (u > -1.0 && u < 1.0) {
                value += 0.75 * (1.0 - u * u) / bandwidth * increments[k];
            }
        }
        curve.times.push_back(t);
        curve.values.push_back(value);
    }
    return curve;
}

}  // namespace nonparametric
}  // namespace ddpvf
