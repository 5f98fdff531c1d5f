#pragma once

#include "colrel/common.hpp"
#include "colrel/connectivity.hpp"
#include "colrel/weights.hpp"

#include <cstdint>

namespace colrel {

/// W_i = sum_j tau_j tau_ij alpha_ji: the total coefficient the PS applies to
/// client i's update in one realization.
Vector effective_weights(const WeightMatrix& weights, const LinkRealization& real);

/// E[(W_i - 1)(W_l - 1)] from the closed-form expressions. Requires the
/// unbiasedness constraint to hold within 1e-9 (throws otherwise).
Matrix closed_form_covariance(const ConnectivityModel& model, const WeightMatrix& weights);

/// Same quantity by exact summation over every joint link outcome. Pairs are
/// enumerated through their 4-outcome joint tables; zero-probability outcomes
/// are skipped. Limited to n <= 5.
Matrix enumerate_covariance(const ConnectivityModel& model, const WeightMatrix& weights);

struct WeightMoments
{
    Vector mean;
    Vector std_error;
    long samples = 0;
};

/// Monte Carlo mean and standard error of the effective weights.
WeightMoments sample_effective_weights(const ConnectivityModel& model, const WeightMatrix& weights,
                                       long samples, std::uint64_t seed);

struct TheoryConstants
{
    double s = 0.0;
    double b = 0.0;
    double r0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;
};

struct ProblemConstants
{
    double smoothness = 0.0;        // L
    double strong_convexity = 0.0;  // mu
    double variance = 0.0;          // sigma^2
    int local_steps = 1;            // T
    int clients = 1;                // n
};

TheoryConstants compute_constants(double s, const ProblemConstants& pc);
TheoryConstants compute_constants(const ConnectivityModel& model, const WeightMatrix& weights,
                                  const ProblemConstants& pc);

/// Upper bound on E||x^(r+1) - x*||^2 for r >= r0, where `initial_gap` is
/// ||x^(0) - x*||^2.
double theorem_bound(const TheoryConstants& c, double initial_gap, int local_steps, double r);

} // namespace colrel
