// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include "colrel/commands.hpp"
#include "colrel/connectivity.hpp"
#include "colrel/experiments.hpp"
#include "colrel/objective.hpp"
#include "colrel/protocol.hpp"
#include "colrel/rng.hpp"
#include "colrel/theory.hpp"
#include "colrel/weights.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

using namespace colrel;

namespace {

struct Outcome
{
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// Random nonnegative weights on every feasible relay, rescaled per column so
// the unbiasedness constraint holds.
WeightMatrix random_feasible_weights(const ConnectivityModel& m, Rng& rng)
{
    const int n = m.size();
    WeightMatrix w{Matrix::Zero(n, n)};
    for (int i = 0; i < n; ++i) {
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            const double g = j == i ? m.uplink(i) : m.uplink(j) * m.link(i, j);
            if (g > 0.0) {
                w.alpha(j, i) = 0.1 + 0.9 * rng.uniform();
                total += g * w.alpha(j, i);
            }
        }
        w.alpha.col(i) /= total;
    }
    return w;
}

Outcome covariance_oracle()
{
    const auto t0 = Clock::now();
    Rng rng(2024);
    double worst_entry = 0.0;
    double worst_sum = 0.0;
    for (int k = 0; k < 200; ++k) {
        const int n = 2 + k % 3;
        RandomModelOptions opts;
        opts.deterministic = k % 10 == 9;
        const auto m = build_random(n, opts, rng);
        const auto w = random_feasible_weights(m, rng);
        const Matrix closed = closed_form_covariance(m, w);
        const Matrix exact = enumerate_covariance(m, w);
        worst_entry = std::max(worst_entry, (closed - exact).cwiseAbs().maxCoeff());
        worst_sum = std::max(worst_sum, std::abs(exact.sum() - s_value(m, w)));
    }
    const double secs = seconds_since(t0);
    return {worst_entry <= 1e-12 && worst_sum <= 1e-12 && secs < 30.0,
            fmt("max entry diff %.3g, max |sum - S| %.3g, %.1f s", worst_entry, worst_sum, secs)};
}

Outcome unbiasedness()
{
    const auto t0 = Clock::now();
    Rng rng(7);
    double worst_z = 0.0;
    int failures = 0;
    for (int k = 0; k < 20; ++k) {
        const auto m = build_random(10, RandomModelOptions{}, rng);
        const auto w = optimize_weights(m).weights;
        const auto mom = sample_effective_weights(m, w, 100000, 500 + k);
        for (int i = 0; i < 10; ++i) {
            const double dev = std::abs(mom.mean(i) - 1.0);
            if (dev > std::max(4.0 * mom.std_error(i), 1e-9)) {
                ++failures;
            }
            if (mom.std_error(i) > 0.0) {
                worst_z = std::max(worst_z, dev / mom.std_error(i));
            }
        }
    }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs < 60.0,
            fmt("%d of 200 clients outside 4 stderr, worst |z| %.2f, %.1f s", failures, worst_z, secs)};
}

Outcome optimizer_correctness()
{
    const auto t0 = Clock::now();
    Rng rng(99);
    int monotone_breaks = 0;
    double worst_residual = 0.0;
    for (int k = 0; k < 50; ++k) {
        const int n = 3 + k % 8;
        const auto m = build_random(n, RandomModelOptions{}, rng);
        double prev = s_bar_value(m, init_weights(m));
        double first_finetune = NAN;
        Phase phase = Phase::relaxed;
        OptimizerOptions opts;
        opts.on_update = [&](const ColumnUpdate& u, const WeightMatrix& w) {
            if (u.phase != phase) {
                phase = u.phase;
                first_finetune = u.objective;
            } else if (u.objective > prev + 1e-12 * std::max(1.0, std::abs(prev))) {
                ++monotone_breaks;
            }
            prev = u.objective;
            worst_residual = std::max(worst_residual, unbiasedness_residuals(m, w).cwiseAbs().maxCoeff());
        };
        const auto result = optimize_weights(m, opts);
        // The fine-tuning trace starts at S of the relaxed output.
        const double start = result.report.finetune.trace.front();
        if (first_finetune > start + 1e-12 * std::max(1.0, start)) {
            ++monotone_breaks;
        }
    }

    double diag_err = 0.0;
    for (int k = 0; k < 10; ++k) {
        const int n = 2 + k;
        Vector p(n);
        for (int i = 0; i < n; ++i) {
            p(i) = 0.05 + 0.95 * rng.uniform();
        }
        const ConnectivityModel m{p, Matrix::Identity(n, n), Matrix::Identity(n, n)};
        const Matrix expected = p.cwiseInverse().asDiagonal();
        diag_err = std::max(diag_err, (optimize_weights(m).weights.alpha - expected).cwiseAbs().maxCoeff());
    }

    double perfect_s = 0.0;
    for (int n = 2; n <= 10; ++n) {
        const ConnectivityModel m{Vector::Ones(n), Matrix::Ones(n, n), Matrix::Ones(n, n)};
        perfect_s = std::max(perfect_s, std::abs(s_value(m, optimize_weights(m).weights)));
    }

    const ConnectivityModel two{Vector::Constant(2, 0.5), Matrix::Ones(2, 2), Matrix::Ones(2, 2)};
    const double s_two = s_value(two, optimize_weights(two).weights);

    const double secs = seconds_since(t0);
    const bool ok = monotone_breaks == 0 && worst_residual <= 1e-9 && diag_err <= 1e-9 && perfect_s <= 1e-12 &&
                    std::abs(s_two - 2.0) <= 1e-9 && secs < 60.0;
    return {ok, fmt("monotonicity breaks %d, max residual %.3g, P=I error %.3g, perfect S %.3g, n=2 S %.12g, %.1f s",
                    monotone_breaks, worst_residual, diag_err, perfect_s, s_two, secs)};
}

Outcome degenerate_links()
{
    Rng rng(31);
    int mismatched = 0;
    int columns = 0;
    for (int k = 0; k < 20; ++k) {
        RandomModelOptions opts;
        opts.deterministic = true;
        const int n = 3 + k % 6;
        const auto m = build_random(n, opts, rng);
        WeightMatrix w = init_weights(m);
        for (int i = 0; i < n; ++i) {
            const Vector a = solve_column_relaxed(m, w, i);
            const Vector b = solve_column_finetune(m, w, i);
            if (std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(n)) != 0) {
                ++mismatched;
            }
            ++columns;
            w.alpha.col(i) = a;
        }
    }
    return {mismatched == 0, fmt("%d of %d column updates differ", mismatched, columns)};
}

Outcome theorem_bound_check()
{
    const auto t0 = Clock::now();
    const Vector p{{0.2, 0.3, 0.5, 0.9}};
    const auto m = build_erdos_renyi(4, 0.5, p, false);
    const auto w = optimize_weights(m).weights;
    const auto f = make_quadratic(Matrix::Zero(10, 4), spectrum_curvature(10, 0.5, 2.0), 1.0);
    bool ok = true;
    std::string detail;
    for (int T : {1, 4}) {
        BoundSetup setup;
        setup.local_steps = T;
        setup.replicas = 200;
        setup.window = 100;
        setup.initial_gap = 0.1;
        setup.seed = 1;
        setup.threads = threads_from_env();
        const auto curve = bound_curve(m, w, *f, setup);
        int violations = 0;
        double worst_ratio = 0.0;
        for (const auto& pt : curve.points) {
            const double limit = pt.bound + 4.0 * pt.empirical_stderr;
            violations += pt.empirical_mean > limit;
            worst_ratio = std::max(worst_ratio, pt.empirical_mean / limit);
        }
        const double slope = loglog_slope(curve.points);
        ok = ok && violations == 0 && slope >= -2.2 && slope <= -0.7;
        detail += fmt("T=%d: r0 %.2f, violations %d, worst mean/limit %.3f, slope %.3f; ", T, curve.constants.r0,
                      violations, worst_ratio, slope);
    }
    const double secs = seconds_since(t0);
    return {ok && secs < 300.0, detail + fmt("%.1f s", secs)};
}

// One-sided paired t statistic for mean(hi - lo) > 0.
double paired_t(const std::vector<double>& lo, const std::vector<double>& hi)
{
    const auto n = static_cast<double>(lo.size());
    double mean = 0.0;
    for (std::size_t k = 0; k < lo.size(); ++k) {
        mean += hi[k] - lo[k];
    }
    mean /= n;
    double ss = 0.0;
    for (std::size_t k = 0; k < lo.size(); ++k) {
        const double d = hi[k] - lo[k] - mean;
        ss += d * d;
    }
    const double se = std::sqrt(ss / (n - 1.0) / n);
    return se > 0.0 ? mean / se : (mean > 0.0 ? INFINITY : (mean == 0.0 ? 0.0 : -INFINITY));
}

double mean_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

Outcome ordering()
{
    const auto t0 = Clock::now();
    const int n = 10;
    const int d = 5;
    Rng rng(77);
    Matrix centers(d, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            centers(k, i) = 0.5 * rng.normal();
        }
    }
    const auto f = make_quadratic(centers, spectrum_curvature(d, 0.5, 2.0), 0.5);
    Vector p = Vector::Constant(n, 0.1);
    p(8) = 0.8;
    p(9) = 0.9;
    const auto dense = build_erdos_renyi(n, 0.9, p, true);
    const auto sparse = build_erdos_renyi(n, 0.5, p, true);
    const auto w_dense = optimize_weights(dense).weights;
    const auto w_sparse = optimize_weights(sparse).weights;

    Schedule s;
    s.rounds = 80;
    s.step = 0.02;
    s.momentum = 0.9;
    SimulationOptions opts;
    opts.initial = Vector::Constant(d, 5.0);

    const int seeds = 20;
    enum { colrel9, colrel5, nonblind, blind, perfect, kinds };
    std::vector<std::vector<double>> final_gap(kinds, std::vector<double>(seeds));
    parallel_for(seeds, threads_from_env(), [&](int k) {
        const std::uint64_t seed = 100 + static_cast<std::uint64_t>(k);
        auto last = [&](const ConnectivityModel& m, const WeightMatrix* w, Mode mode) {
            return run_simulation(m, w, *f, s, mode, seed, opts).rounds.back().dist_sq;
        };
        final_gap[colrel9][k] = last(dense, &w_dense, Mode::colrel);
        final_gap[colrel5][k] = last(sparse, &w_sparse, Mode::colrel);
        final_gap[nonblind][k] = last(sparse, nullptr, Mode::nonblind);
        final_gap[blind][k] = last(sparse, nullptr, Mode::blind);
        final_gap[perfect][k] = last(sparse, nullptr, Mode::perfect);
    });

    const double t_crit = 1.729;  // one-sided 95%, 19 degrees of freedom
    const double t1 = paired_t(final_gap[colrel9], final_gap[colrel5]);
    const double t2 = paired_t(final_gap[colrel5], final_gap[nonblind]);
    const double t3 = paired_t(final_gap[nonblind], final_gap[blind]);
    bool perfect_lowest = true;
    for (int kind = colrel9; kind < perfect; ++kind) {
        perfect_lowest = perfect_lowest && mean_of(final_gap[perfect]) <= mean_of(final_gap[kind]);
    }
    const double secs = seconds_since(t0);
    const bool ok = t1 >= t_crit && t2 >= t_crit && t3 >= t_crit && perfect_lowest && secs < 120.0;
    return {ok, fmt("means colrel(0.9) %.4g, colrel(0.5) %.4g, nonblind %.4g, blind %.4g, perfect %.4g; "
                    "paired t %.2f, %.2f, %.2f (need >= %.3f); %.1f s",
                    mean_of(final_gap[colrel9]), mean_of(final_gap[colrel5]), mean_of(final_gap[nonblind]),
                    mean_of(final_gap[blind]), mean_of(final_gap[perfect]), t1, t2, t3, t_crit, secs)};
}

int count_links(const ConnectivityModel& m)
{
    int links = 0;
    for (int i = 0; i < m.size(); ++i) {
        for (int j = 0; j < m.size(); ++j) {
            links += i != j && m.link(i, j) > 0.0;
        }
    }
    return links;
}

Outcome topology_comparison()
{
    const auto t0 = Clock::now();
    // Three hubs near the PS; the other clients sit 165 m beyond a hub, so
    // their links to it are intermittent and fail the 0.99 threshold.
    std::vector<Point> pos;
    const double pi = std::numbers::pi;
    for (int h = 0; h < 3; ++h) {
        pos.push_back({80.0 * std::cos(2 * pi * h / 3), 80.0 * std::sin(2 * pi * h / 3)});
    }
    for (int k = 0; k < 7; ++k) {
        const int h = k % 3;
        const double a = 2 * pi * h / 3 + (k / 3 - 1) * 0.45;
        pos.push_back({pos[h].x + 165.0 * std::cos(a), pos[h].y + 165.0 * std::sin(a)});
    }
    const Point ps{0.0, 0.0};
    const auto intermittent = build_mmwave(pos, ps, 0.5);
    const auto threshold = build_threshold(pos, ps, true);
    const auto w_int = optimize_weights(intermittent).weights;
    const auto w_thr = optimize_weights(threshold).weights;
    const int links_int = count_links(intermittent);
    const int links_thr = count_links(threshold);

    Schedule s;
    s.rounds = 30;
    s.step = 0.1;
    s.momentum = 0.9;
    s.batch = 64;
    SimulationOptions opts;
    opts.track_distance = false;

    const int seeds = 5;
    std::vector<double> loss_int(seeds), loss_thr(seeds), loss_none(seeds);
    parallel_for(seeds, threads_from_env(), [&](int k) {
        const auto f = make_logistic_synthetic(LogisticSetup{}, 10 + static_cast<std::uint64_t>(k));
        const auto seed = static_cast<std::uint64_t>(k);
        loss_int[k] = run_simulation(intermittent, &w_int, *f, s, Mode::colrel, seed, opts).rounds.back().loss;
        loss_thr[k] = run_simulation(threshold, &w_thr, *f, s, Mode::colrel, seed, opts).rounds.back().loss;
        loss_none[k] = run_simulation(intermittent, nullptr, *f, s, Mode::blind, seed, opts).rounds.back().loss;
    });
    const double a = mean_of(loss_int);
    const double b = mean_of(loss_thr);
    const double c = mean_of(loss_none);
    const double secs = seconds_since(t0);
    return {links_int > links_thr && a <= b && b <= c && secs < 300.0,
            fmt("links %d vs %d; mean final loss intermittent %.5g, threshold %.5g, no collaboration %.5g; %.1f s",
                links_int, links_thr, a, b, c, secs)};
}

bool same_trajectory(const RoundTrace& a, const RoundTrace& b)
{
    if (a.iterates.size() != b.iterates.size()) {
        return false;
    }
    for (std::size_t r = 0; r < a.iterates.size(); ++r) {
        const auto& x = a.iterates[r];
        const auto& y = b.iterates[r];
        if (x.size() != y.size() ||
            std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0) {
            return false;
        }
    }
    return true;
}

Outcome reductions()
{
    const int n = 4;
    const int d = 6;
    Rng rng(5);
    Matrix centers(d, n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) {
            centers(k, i) = rng.normal();
        }
    }
    const auto f = make_quadratic(centers, spectrum_curvature(d, 0.5, 2.0), 0.3);
    Schedule s;
    s.rounds = 50;
    s.local_steps = 2;
    s.step = 0.05;
    SimulationOptions opts;
    opts.record_iterates = true;

    const ConnectivityModel isolated{Vector{{0.2, 0.5, 0.7, 0.9}}, Matrix::Identity(n, n), Matrix::Identity(n, n)};
    const WeightMatrix eye{Matrix::Identity(n, n)};
    const bool blind_ok = same_trajectory(run_simulation(isolated, &eye, *f, s, Mode::colrel, 9, opts),
                                          run_simulation(isolated, nullptr, *f, s, Mode::blind, 9, opts));

    const ConnectivityModel full{Vector::Ones(n), Matrix::Ones(n, n), Matrix::Ones(n, n)};
    const auto w = optimize_weights(full).weights;
    const bool perfect_ok = same_trajectory(run_simulation(full, &w, *f, s, Mode::colrel, 9, opts),
                                            run_simulation(full, nullptr, *f, s, Mode::perfect, 9, opts));
    return {blind_ok && perfect_ok, fmt("A=I, P=I vs blind: %s; perfect links vs perfect FedAvg: %s",
                                        blind_ok ? "identical" : "differs", perfect_ok ? "identical" : "differs")};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"covariance oracle", covariance_oracle},
        {"unbiasedness", unbiasedness},
        {"optimizer correctness", optimizer_correctness},
        {"degenerate links", degenerate_links},
        {"convergence bound", theorem_bound_check},
        {"mode ordering", ordering},
        {"intermittent vs threshold topology", topology_comparison},
        {"reduction identities", reductions},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome out;
        try {
            out = criteria[k].second();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        failed += !out.pass;
        std::printf("[%s] %zu. %s: %s\n", out.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, out.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
