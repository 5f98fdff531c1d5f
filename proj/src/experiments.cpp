#include "colrel/experiments.hpp"

#include <cmath>

namespace colrel {

BoundCurve bound_curve(const ConnectivityModel& model, const WeightMatrix& weights, const Objective& objective,
                       const BoundSetup& setup)
{
    const auto x_star = objective.minimizer();
    if (!x_star) {
        throw InvalidArgument("bound curve needs an objective with a known minimizer");
    }
    if (setup.replicas < 2 || setup.window < 0) {
        throw InvalidArgument("bound curve needs replicas >= 2 and window >= 0");
    }
    ProblemConstants pc;
    pc.smoothness = objective.smoothness();
    pc.strong_convexity = objective.strong_convexity();
    pc.variance = objective.variance();
    pc.local_steps = setup.local_steps;
    pc.clients = model.size();

    BoundCurve curve;
    curve.constants = compute_constants(model, weights, pc);
    curve.offset = static_cast<int>(std::ceil(curve.constants.r0));
    curve.initial_gap = setup.initial_gap;

    Schedule schedule;
    schedule.rounds = setup.window + 1;
    schedule.local_steps = setup.local_steps;
    schedule.rule = StepRule::theory;
    schedule.mu = pc.strong_convexity;
    schedule.round_offset = curve.offset;
    schedule.momentum = 0.0;

    SimulationOptions options;
    const double d = objective.dimension();
    options.initial = Vector(*x_star + Vector::Constant(objective.dimension(), std::sqrt(setup.initial_gap / d)));

    std::vector<std::vector<double>> dist(static_cast<std::size_t>(setup.replicas));
    parallel_for(setup.replicas, setup.threads, [&](int k) {
        const RoundTrace trace = run_simulation(model, &weights, objective, schedule, Mode::colrel,
                                                setup.seed + static_cast<std::uint64_t>(k), options);
        auto& out = dist[static_cast<std::size_t>(k)];
        for (const auto& rec : trace.rounds) {
            out.push_back(rec.dist_sq);
        }
    });

    const double reps = setup.replicas;
    for (int k = 0; k <= setup.window; ++k) {
        double mean = 0.0;
        for (const auto& run : dist) {
            mean += run[static_cast<std::size_t>(k + 1)];
        }
        mean /= reps;
        double var = 0.0;
        for (const auto& run : dist) {
            const double dev = run[static_cast<std::size_t>(k + 1)] - mean;
            var += dev * dev;
        }
        var /= reps - 1.0;
        BoundPoint pt;
        pt.r = curve.offset + k;
        pt.bound = theorem_bound(curve.constants, setup.initial_gap, setup.local_steps, pt.r);
        pt.empirical_mean = mean;
        pt.empirical_stderr = std::sqrt(var / reps);
        curve.points.push_back(pt);
    }
    return curve;
}

double loglog_slope(const std::vector<BoundPoint>& points)
{
    if (points.size() < 2) {
        throw InvalidArgument("slope needs at least two points");
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& p : points) {
        const double x = std::log(static_cast<double>(p.r));
        const double y = std::log(p.empirical_mean);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(points.size());
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

} // namespace colrel
