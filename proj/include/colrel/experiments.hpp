#pragma once

#include "colrel/objective.hpp"
#include "colrel/protocol.hpp"
#include "colrel/theory.hpp"

#include <cstdint>
#include <vector>

namespace colrel {

struct BoundPoint
{
    int r = 0;
    double bound = 0.0;
    double empirical_mean = 0.0;   // mean of ||x^(r+1) - x*||^2 over replicas
    double empirical_stderr = 0.0;
};

struct BoundCurve
{
    TheoryConstants constants;
    int offset = 0;                // ceil(r0): index of the first simulated round
    double initial_gap = 0.0;
    std::vector<BoundPoint> points;
};

struct BoundSetup
{
    int local_steps = 1;
    int replicas = 200;
    int window = 100;              // rounds checked beyond ceil(r0)
    double initial_gap = 1.0;      // ||x_start - x*||^2
    std::uint64_t seed = 1;        // replica k uses seed + k
    int threads = 0;
};

/// Runs colrel with the theory step rule from round ceil(r0) (momentum 0) on
/// `replicas` seeds, starting at x* + sqrt(gap / d) * 1, and pairs the mean
/// squared distance after each round r with theorem_bound(r).
BoundCurve bound_curve(const ConnectivityModel& model, const WeightMatrix& weights, const Objective& objective,
                       const BoundSetup& setup);

/// Least-squares slope of log(mean) against log(r).
double loglog_slope(const std::vector<BoundPoint>& points);

} // namespace colrel
