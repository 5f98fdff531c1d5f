#pragma once

#include "colrel/common.hpp"
#include "colrel/connectivity.hpp"

#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

namespace colrel {

/// Relay coefficients. `alpha(i, j)` is the weight client i applies to the
/// update it receives from client j, so row i is what client i relays and
/// column i collects every weight placed on client i's update.
struct WeightMatrix
{
    Matrix alpha;

    int size() const { return static_cast<int>(alpha.rows()); }
    double operator()(int i, int j) const { return alpha(i, j); }
};

/// Clients whose update cannot reach the PS with positive probability
/// (p_j * p_ij = 0 for every j). Empty when the model is feasible.
std::vector<int> unreachable_clients(const ConnectivityModel& model);

class InfeasibleModel : public Error
{
public:
    explicit InfeasibleModel(std::vector<int> clients);
    const std::vector<int>& clients() const { return clients_; }

private:
    std::vector<int> clients_;
};

/// Uniform split of every column over its feasible relays, scaled so each
/// column meets the unbiasedness constraint exactly.
WeightMatrix init_weights(const ConnectivityModel& model);

/// Entry i is p_i alpha_ii + sum_{j != i} p_j p_ij alpha_ji - 1.
Vector unbiasedness_residuals(const ConnectivityModel& model, const WeightMatrix& weights);

/// Variance functional S(p, P, A) governing the convergence bound.
double s_value(const ConnectivityModel& model, const WeightMatrix& weights);

/// Convex upper bound of S: the reciprocity term uses alpha_li^2 in place of
/// alpha_il * alpha_li.
double s_bar_value(const ConnectivityModel& model, const WeightMatrix& weights);

class BracketError : public Error
{
public:
    using Error::Error;
};

/// Finds lambda in [lo, hi] with |g(lambda) - 1| <= tol for nondecreasing g.
/// Returns the closest iterate if `max_iter` is exhausted first.
double bisect_lambda(const std::function<double(double)>& g, double lo, double hi, double tol = 1e-12,
                     int max_iter = 200);

enum class Phase { relaxed, finetune };

/// The constraint value sum_j p_j p_ij alpha_ji(lambda) produced by the
/// column-i update as a function of the multiplier, and the upper end of its
/// bisection interval (the lower end is 0). Not defined for columns with a
/// deterministic relay, which need no multiplier.
struct ConstraintMap
{
    std::function<double(double)> value;
    double upper = 0.0;
};

ConstraintMap column_constraint_map(const ConnectivityModel& model, const WeightMatrix& weights, int i, Phase phase);

/// Exact minimizer of S-bar over column i with the other columns fixed.
Vector solve_column_relaxed(const ConnectivityModel& model, const WeightMatrix& weights, int i);

/// Exact minimizer of S over column i with the other columns fixed.
Vector solve_column_finetune(const ConnectivityModel& model, const WeightMatrix& weights, int i);

struct ColumnUpdate
{
    Phase phase;
    int sweep;
    int column;
    double objective; // S-bar in the relaxed phase, S in fine-tuning
    double residual;  // |constraint residual| of the updated column
};

struct OptimizerOptions
{
    int sweeps = 0;                 // per phase; 0 selects 50 * n
    double stop_change = 1e-10;     // early stop on max entry change per sweep
    bool skip_unreachable = false;  // leave infeasible columns at zero instead of throwing
    std::function<void(const ColumnUpdate&, const WeightMatrix&)> on_update;
};

struct PhaseReport
{
    int sweeps = 0;
    std::vector<double> trace; // objective after every sweep, starting with the initial value
};

struct SolverReport
{
    PhaseReport relaxed;
    PhaseReport finetune;
    double s_bar = 0.0;
    double s = 0.0;
    double max_residual = 0.0;
    std::vector<int> skipped_columns;
};

struct OptimizationResult
{
    WeightMatrix weights;
    SolverReport report;
};

/// Two-phase Gauss-Seidel: cyclic exact column minimization of S-bar from
/// init_weights, then of S warm-started from the relaxed solution.
OptimizationResult optimize_weights(const ConnectivityModel& model, const OptimizerOptions& options = {});

nlohmann::json to_json(const SolverReport& report);
nlohmann::json to_json(const WeightMatrix& weights);
WeightMatrix weights_from_json(const nlohmann::json& j);

/// CSV with one row per client (row i = weights client i applies).
void save_weights_csv(const WeightMatrix& weights, const std::filesystem::path& path);
WeightMatrix load_weights_csv(const std::filesystem::path& path);

} // namespace colrel
