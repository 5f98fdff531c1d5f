#pragma once

#include "colrel/common.hpp"
#include "colrel/connectivity.hpp"
#include "colrel/objective.hpp"
#include "colrel/weights.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace colrel {

/// colrel: relayed combinations, blind PS. blind / nonblind: FedAvg without
/// relaying, PS divides by n or by the success count. perfect: FedAvg with
/// every uplink up.
enum class Mode { colrel, blind, nonblind, perfect };

std::string to_string(Mode mode);
Mode mode_from_string(std::string_view name);

enum class StepRule { constant, theory };

struct Schedule
{
    int rounds = 100;
    int local_steps = 1;
    StepRule rule = StepRule::constant;
    double step = 0.05;       // constant rule
    double mu = 0.0;          // theory rule: eta_r = 4 / (mu ((r + offset) T + 1))
    int round_offset = 0;     // theory rule: index of the first simulated round
    double momentum = 0.9;    // PS momentum beta
    int batch = 64;

    double step_size(int round) const;
    void validate() const;

    bool operator==(const Schedule&) const = default;
};

/// T local SGD steps from x_global; returns x^T - x_global.
Vector local_round(const Objective& objective, int client, const Vector& x_global, double step, int local_steps,
                   int batch, Rng& rng);

/// Client i transmits sum_j tau_ji alpha_ij dx_j (its own update always included).
std::vector<Vector> relay_combine(const WeightMatrix& weights, const LinkRealization& real,
                                  const std::vector<Vector>& deltas);

struct MomentumState
{
    Vector velocity;
};

/// PS step. Inputs are relayed combinations for colrel and raw updates
/// otherwise. u is formed per mode, then v' = beta v + u and x' = x + v'.
Vector aggregate(const Vector& x, const LinkRealization& real, const std::vector<Vector>& inputs, Mode mode,
                 double momentum, MomentumState& state);

struct RoundRecord
{
    int round = 0;
    double dist_sq = 0.0; // NaN when no reference minimizer is tracked
    double loss = 0.0;
    int uplink_successes = 0;
    std::uint64_t seed = 0;
};

struct RoundTrace
{
    std::vector<RoundRecord> rounds;  // R + 1 entries, round 0 first
    std::vector<Vector> iterates;     // filled when requested
};

struct SimulationOptions
{
    std::optional<Vector> initial;  // defaults to the origin
    bool track_distance = true;     // needs objective.minimizer()
    bool record_iterates = false;
};

/// Runs `schedule.rounds` rounds of broadcast, local training, link sampling,
/// relaying and aggregation. Random streams are keyed by the seed alone:
/// gradients by (seed, round, client), uplinks and inter-client pairs by one
/// stream each, so runs that share a seed share their gradient noise and, when
/// the uplink probabilities agree, their uplink outcomes.
///
/// For colrel the PS sum sum_i tau_i dx~_i is evaluated in the equivalent
/// form sum_j W_j dx_j with W_j the effective weight of client j.
RoundTrace run_simulation(const ConnectivityModel& model, const WeightMatrix* weights, const Objective& objective,
                          const Schedule& schedule, Mode mode, std::uint64_t seed,
                          const SimulationOptions& options = {});

/// Runs `job(k)` for k in [0, count) on up to `threads` workers (0 = hardware).
void parallel_for(int count, int threads, const std::function<void(int)>& job);

} // namespace colrel
