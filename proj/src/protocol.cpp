#include "colrel/protocol.hpp"
#include "colrel/theory.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace colrel {

std::string to_string(Mode mode)
{
    switch (mode) {
    case Mode::colrel: return "colrel";
    case Mode::blind: return "blind";
    case Mode::nonblind: return "nonblind";
    case Mode::perfect: return "perfect";
    }
    return "unknown";
}

Mode mode_from_string(std::string_view name)
{
    if (name == "colrel") return Mode::colrel;
    if (name == "blind") return Mode::blind;
    if (name == "nonblind") return Mode::nonblind;
    if (name == "perfect") return Mode::perfect;
    throw InvalidArgument("unknown mode '" + std::string(name) + "' (expected colrel, blind, nonblind or perfect)");
}

double Schedule::step_size(int round) const
{
    if (rule == StepRule::constant) {
        return step;
    }
    return 4.0 / (mu * (static_cast<double>(round + round_offset) * local_steps + 1.0));
}

void Schedule::validate() const
{
    if (rounds < 1 || local_steps < 1) {
        throw InvalidArgument("schedule needs rounds >= 1 and local_steps >= 1");
    }
    if (rule == StepRule::constant && !(step > 0.0)) {
        throw InvalidArgument("constant step size must be > 0");
    }
    if (rule == StepRule::theory && !(mu > 0.0)) {
        throw InvalidArgument("theory step rule needs mu > 0");
    }
    if (round_offset < 0) {
        throw InvalidArgument("round_offset must be >= 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw InvalidArgument("momentum must lie in [0, 1)");
    }
    if (batch < 1) {
        throw InvalidArgument("batch must be >= 1");
    }
}

Vector local_round(const Objective& objective, int client, const Vector& x_global, double step, int local_steps,
                   int batch, Rng& rng)
{
    Vector x = x_global;
    for (int k = 0; k < local_steps; ++k) {
        x -= step * objective.stochastic_gradient(client, x, batch, rng);
    }
    return x - x_global;
}

std::vector<Vector> relay_combine(const WeightMatrix& weights, const LinkRealization& real,
                                  const std::vector<Vector>& deltas)
{
    const int n = weights.size();
    if (real.size() != n || static_cast<int>(deltas.size()) != n) {
        throw InvalidArgument("relay_combine: size mismatch");
    }
    std::vector<Vector> out;
    out.reserve(deltas.size());
    for (int i = 0; i < n; ++i) {
        Vector acc = Vector::Zero(deltas[static_cast<std::size_t>(i)].size());
        for (int j = 0; j < n; ++j) {
            if (real.link(j, i) && weights.alpha(i, j) != 0.0) {
                acc += weights.alpha(i, j) * deltas[static_cast<std::size_t>(j)];
            }
        }
        out.push_back(std::move(acc));
    }
    return out;
}

namespace {

Vector apply_momentum(const Vector& x, const Vector& u, double momentum, MomentumState& state)
{
    if (state.velocity.size() != u.size()) {
        state.velocity = Vector::Zero(u.size());
    }
    state.velocity = momentum * state.velocity + u;
    return x + state.velocity;
}

} // namespace

Vector aggregate(const Vector& x, const LinkRealization& real, const std::vector<Vector>& inputs, Mode mode,
                 double momentum, MomentumState& state)
{
    const int n = static_cast<int>(inputs.size());
    if (real.size() != n) {
        throw InvalidArgument("aggregate: size mismatch");
    }
    Vector sum = Vector::Zero(x.size());
    int received = 0;
    for (int i = 0; i < n; ++i) {
        if (mode == Mode::perfect || real.uplink(i)) {
            sum += inputs[static_cast<std::size_t>(i)];
            ++received;
        }
    }
    Vector u;
    if (mode == Mode::nonblind) {
        u = received == 0 ? Vector::Zero(x.size()) : Vector(sum / static_cast<double>(received));
    } else {
        u = sum / static_cast<double>(n);
    }
    return apply_momentum(x, u, momentum, state);
}

RoundTrace run_simulation(const ConnectivityModel& model, const WeightMatrix* weights, const Objective& objective,
                          const Schedule& schedule, Mode mode, std::uint64_t seed, const SimulationOptions& options)
{
    schedule.validate();
    require_valid(model);
    const int n = model.size();
    const int d = objective.dimension();
    if (objective.clients() != n) {
        throw InvalidArgument("objective has " + std::to_string(objective.clients()) + " clients, model has " +
                              std::to_string(n));
    }
    if (mode == Mode::colrel) {
        if (weights == nullptr) {
            throw InvalidArgument("colrel mode requires a weight matrix");
        }
        if (weights->size() != n) {
            throw InvalidArgument("weight matrix size does not match the model");
        }
    }
    Vector x = options.initial.value_or(Vector::Zero(d));
    if (x.size() != d) {
        throw InvalidArgument("initial point has the wrong dimension");
    }
    std::optional<Vector> x_star;
    if (options.track_distance) {
        x_star = objective.minimizer();
    }

    RoundTrace trace;
    auto record = [&](int round, int successes) {
        RoundRecord rec;
        rec.round = round;
        rec.dist_sq = x_star ? (x - *x_star).squaredNorm() : std::numeric_limits<double>::quiet_NaN();
        rec.loss = objective.global_loss(x);
        rec.uplink_successes = successes;
        rec.seed = seed;
        trace.rounds.push_back(rec);
        if (options.record_iterates) {
            trace.iterates.push_back(x);
        }
    };
    record(0, 0);

    Rng uplink_rng = derive_stream(seed, {kTagUplink});
    Rng pair_rng = derive_stream(seed, {kTagPairs});
    MomentumState state;
    std::vector<Vector> deltas(static_cast<std::size_t>(n));

    for (int r = 0; r < schedule.rounds; ++r) {
        const double eta = schedule.step_size(r);
        for (int i = 0; i < n; ++i) {
            Rng grad_rng = derive_stream(seed, {kTagGradient, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(i)});
            deltas[static_cast<std::size_t>(i)] =
                local_round(objective, i, x, eta, schedule.local_steps, schedule.batch, grad_rng);
        }

        int successes = n;
        if (mode == Mode::perfect) {
            LinkRealization all_up(n);
            for (int i = 0; i < n; ++i) {
                all_up.set_uplink(i, true);
            }
            x = aggregate(x, all_up, deltas, mode, schedule.momentum, state);
        } else {
            const LinkRealization real = sample_realization(model, uplink_rng, pair_rng);
            successes = real.uplink_successes();
            if (mode == Mode::colrel) {
                const Vector w = effective_weights(*weights, real);
                Vector sum = Vector::Zero(d);
                for (int j = 0; j < n; ++j) {
                    if (w(j) != 0.0) {
                        sum += w(j) * deltas[static_cast<std::size_t>(j)];
                    }
                }
                x = apply_momentum(x, sum / static_cast<double>(n), schedule.momentum, state);
            } else {
                x = aggregate(x, real, deltas, mode, schedule.momentum, state);
            }
        }
        record(r + 1, successes);
    }
    return trace;
}

void parallel_for(int count, int threads, const std::function<void(int)>& job)
{
    if (count <= 0) {
        return;
    }
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int k = 0; k < count; ++k) {
            job(k);
        }
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int k = next++; k < count; k = next++) {
                try {
                    job(k);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace colrel
