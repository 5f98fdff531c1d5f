#include "colrel/commands.hpp"
#include "colrel/experiments.hpp"
#include "colrel/theory.hpp"
#include "colrel/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace colrel {

namespace {

constexpr const char* kVersion = "1.0.0";

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw Error("write failed for " + path.string());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::filesystem::path output_dir(const ExperimentConfig& config, const CommandContext& ctx)
{
    std::filesystem::path dir = ctx.out_dir.empty() ? std::filesystem::path(config.output) : ctx.out_dir;
    std::filesystem::create_directories(dir);
    return dir;
}

std::uint64_t replica_seed(const ExperimentConfig& config, int k) { return config.seed + static_cast<std::uint64_t>(k); }

OptimizationResult optimize(const ExperimentConfig& config, const ConnectivityModel& model,
                            const OptimizerOptions* base = nullptr)
{
    OptimizerOptions opts = base ? *base : OptimizerOptions{};
    opts.sweeps = config.sweeps;
    opts.skip_unreachable = config.skip_unreachable;
    return optimize_weights(model, opts);
}

void log_line(const CommandContext& ctx, const std::string& line)
{
    if (ctx.log) {
        *ctx.log << line << '\n';
    }
}

std::string fmt(double v)
{
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

// ---------------------------------------------------------------- optimize

int cmd_optimize(const ExperimentConfig& config, const CommandContext& ctx)
{
    const auto dir = output_dir(config, ctx);
    const ConnectivityModel model = build_model(config);
    const OptimizationResult res = optimize(config, model);
    save_model(model, dir / "model.json");
    save_weights_csv(res.weights, dir / "weights.csv");
    write_json(dir / "weights.json", to_json(res.weights));
    write_json(dir / "solver_report.json", to_json(res.report));
    write_json(dir / "manifest.json", make_manifest(config, "optimize"));
    log_line(ctx, "S = " + fmt(res.report.s) + ", S_bar = " + fmt(res.report.s_bar) +
                      ", max residual = " + fmt(res.report.max_residual));
    return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const ExperimentConfig& config, const CommandContext& ctx)
{
    const auto dir = output_dir(config, ctx);
    const ConnectivityModel base = build_model(config);
    const auto objective = build_objective(config, base.size());
    Schedule schedule = config.schedule;
    if (schedule.rule == StepRule::theory) {
        schedule.mu = objective->strong_convexity();
    }
    const bool needs_weights = std::find(config.modes.begin(), config.modes.end(), Mode::colrel) != config.modes.end();

    // One model (and weight matrix) per replica in frozen mode, else shared.
    const int replicas = config.replicas;
    std::vector<ConnectivityModel> models;
    std::vector<WeightMatrix> weights;
    if (config.topology.frozen) {
        for (int k = 0; k < replicas; ++k) {
            Rng rng = derive_stream(replica_seed(config, k), {kTagTopology});
            models.push_back(freeze_links(base, rng));
        }
    } else {
        models.push_back(base);
    }
    if (needs_weights) {
        for (const auto& m : models) {
            weights.push_back(optimize(config, m).weights);
        }
    }
    SimulationOptions options;
    options.track_distance = config.objective.kind == ObjectiveKind::quadratic;

    const int modes = static_cast<int>(config.modes.size());
    std::vector<RoundTrace> traces(static_cast<std::size_t>(modes * replicas));
    parallel_for(modes * replicas, ctx.threads, [&](int job) {
        const int m = job / replicas;
        const int k = job % replicas;
        const std::size_t idx = config.topology.frozen ? static_cast<std::size_t>(k) : 0;
        const Mode mode = config.modes[static_cast<std::size_t>(m)];
        traces[static_cast<std::size_t>(job)] =
            run_simulation(models[idx], mode == Mode::colrel ? &weights[idx] : nullptr, *objective, schedule, mode,
                           replica_seed(config, k), options);
    });

    std::ostringstream summary;
    summary << "mode,seed,final_dist_sq,final_loss\n" << std::setprecision(17);
    for (int m = 0; m < modes; ++m) {
        const std::string name = to_string(config.modes[static_cast<std::size_t>(m)]);
        for (int k = 0; k < replicas; ++k) {
            const RoundTrace& trace = traces[static_cast<std::size_t>(m * replicas + k)];
            const std::uint64_t seed = replica_seed(config, k);
            emit_metrics(trace, dir / ("trace_" + name + "_seed" + std::to_string(seed) + ".csv"));
            summary << name << ',' << seed << ',' << trace.rounds.back().dist_sq << ',' << trace.rounds.back().loss
                    << '\n';
        }
    }
    write_text(dir / "summary.csv", summary.str());
    write_json(dir / "manifest.json", make_manifest(config, "simulate"));
    log_line(ctx, "wrote " + std::to_string(modes * replicas) + " traces to " + dir.string());
    return 0;
}

// ---------------------------------------------------------------- verify

struct Check
{
    std::string name;
    bool passed = false;
    std::string detail;
};

bool monotone(const std::vector<double>& values)
{
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] > values[k - 1] + 1e-12 * std::max(1.0, std::abs(values[k - 1]))) {
            return false;
        }
    }
    return true;
}

int cmd_verify(const ExperimentConfig& config, const CommandContext& ctx)
{
    const auto dir = output_dir(config, ctx);
    const double tol = config.verify.tolerance;
    std::vector<Check> checks;

    const ConnectivityModel model = build_model(config);
    const auto issues = validate_model(model);
    checks.push_back({"model_valid", issues.empty(), issues.empty() ? "ok" : issues.front()});

    std::vector<double> relaxed;
    std::vector<double> finetune;
    double worst_residual = 0.0;
    OptimizerOptions hooks;
    hooks.on_update = [&](const ColumnUpdate& u, const WeightMatrix&) {
        (u.phase == Phase::relaxed ? relaxed : finetune).push_back(u.objective);
        worst_residual = std::max(worst_residual, u.residual);
    };
    const OptimizationResult res = optimize(config, model, &hooks);
    relaxed.insert(relaxed.begin(), res.report.relaxed.trace.front());
    finetune.insert(finetune.begin(), res.report.finetune.trace.front());
    checks.push_back({"relaxed_monotone", monotone(relaxed), std::to_string(relaxed.size() - 1) + " column updates"});
    checks.push_back({"finetune_monotone", monotone(finetune), std::to_string(finetune.size() - 1) + " column updates"});
    checks.push_back({"update_residuals", worst_residual <= tol, "max residual " + fmt(worst_residual)});

    const double s = s_value(model, res.weights);
    const double s_bar = s_bar_value(model, res.weights);
    checks.push_back({"s_below_s_bar", s <= s_bar + 1e-12 * std::max(1.0, s_bar),
                      "S = " + fmt(s) + ", S_bar = " + fmt(s_bar)});

    if (res.report.skipped_columns.empty()) {
        const Matrix closed = closed_form_covariance(model, res.weights);
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(closed, Eigen::EigenvaluesOnly);
        const double min_eig = eig.eigenvalues().minCoeff();
        checks.push_back({"covariance_psd", min_eig >= -1e-10 * std::max(1.0, closed.norm()),
                          "min eigenvalue " + fmt(min_eig)});
        const double sum_gap = std::abs(closed.sum() - s);
        checks.push_back({"covariance_sum_equals_s", sum_gap <= 1e-12 * std::max(1.0, s), "gap " + fmt(sum_gap)});
        if (model.size() <= 5) {
            const Matrix exact = enumerate_covariance(model, res.weights);
            const double gap = (exact - closed).cwiseAbs().maxCoeff();
            checks.push_back({"covariance_oracle", gap <= 1e-12 * std::max(1.0, closed.cwiseAbs().maxCoeff()),
                              "max entry gap " + fmt(gap)});
        }

        const WeightMoments mom = sample_effective_weights(model, res.weights, config.verify.samples, config.seed);
        bool unbiased = true;
        double worst = 0.0;
        for (int i = 0; i < model.size(); ++i) {
            const double dev = std::abs(mom.mean(i) - 1.0);
            const double allowed = std::max(4.0 * mom.std_error(i), tol);
            unbiased = unbiased && dev <= allowed;
            worst = std::max(worst, dev / allowed);
        }
        checks.push_back({"unbiasedness_mc", unbiased, "worst |mean-1| / allowance " + fmt(worst)});
    } else {
        checks.push_back({"covariance_oracle", true, "skipped: unreachable clients present"});
    }

    nlohmann::json report = nlohmann::json::array();
    bool all = true;
    for (const auto& c : checks) {
        all = all && c.passed;
        report.push_back({{"check", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        log_line(ctx, std::string(c.passed ? "PASS " : "FAIL ") + c.name + ": " + c.detail);
    }
    write_json(dir / "verify.json", {{"passed", all}, {"checks", report}});
    write_json(dir / "manifest.json", make_manifest(config, "verify"));
    return all ? 0 : 1;
}

// ---------------------------------------------------------------- bound

int cmd_bound(const ExperimentConfig& config, const CommandContext& ctx)
{
    if (config.objective.kind != ObjectiveKind::quadratic) {
        throw ConfigError("bound requires objective.kind = \"quadratic\"");
    }
    const auto dir = output_dir(config, ctx);
    const ConnectivityModel model = build_model(config);
    const auto objective = build_objective(config, model.size());
    const WeightMatrix weights = optimize(config, model).weights;

    BoundSetup setup;
    setup.local_steps = config.schedule.local_steps;
    setup.replicas = config.bound.replicas;
    setup.window = config.bound.window;
    setup.initial_gap = config.bound.initial_gap;
    setup.seed = config.seed;
    setup.threads = ctx.threads;
    const BoundCurve curve = bound_curve(model, weights, *objective, setup);

    std::ostringstream csv;
    csv << "r,bound,empirical_mean,empirical_stderr\n" << std::setprecision(17);
    int violations = 0;
    for (const auto& p : curve.points) {
        csv << p.r << ',' << p.bound << ',' << p.empirical_mean << ',' << p.empirical_stderr << '\n';
        if (p.empirical_mean > p.bound + 4.0 * p.empirical_stderr) {
            ++violations;
        }
    }
    write_text(dir / "bound.csv", csv.str());
    const auto& c = curve.constants;
    write_json(dir / "constants.json",
               {{"S", c.s}, {"B", c.b}, {"r0", c.r0}, {"C1", c.c1}, {"C2", c.c2}, {"C3", c.c3},
                {"offset", curve.offset}, {"violations", violations}, {"loglog_slope", loglog_slope(curve.points)}});
    write_json(dir / "manifest.json", make_manifest(config, "bound"));
    log_line(ctx, "r0 = " + fmt(c.r0) + ", S = " + fmt(c.s) + ", rounds above bound + 4 stderr: " +
                      std::to_string(violations));
    return 0;
}

} // namespace

ConnectivityModel build_model(const ExperimentConfig& config)
{
    const auto& t = config.topology;
    ConnectivityModel model;
    switch (t.kind) {
    case TopologyKind::erdos_renyi: {
        const Vector p_up = t.p_up.empty() ? Vector(Vector::Ones(t.n))
                                           : Vector(Eigen::Map<const Vector>(t.p_up.data(), static_cast<Eigen::Index>(t.p_up.size())));
        model = build_erdos_renyi(t.n, t.p_c, p_up, t.reciprocal);
        break;
    }
    case TopologyKind::mmwave:
    case TopologyKind::threshold: {
        const auto pos = load_positions(t.positions);
        const Point ps{t.ps[0], t.ps[1]};
        model = t.kind == TopologyKind::mmwave ? build_mmwave(pos, ps, t.prune_below) : build_threshold(pos, ps, t.mmwave_uplinks);
        break;
    }
    case TopologyKind::random: {
        Rng rng = derive_stream(t.seed, {kTagTopology});
        model = build_random(t.n, RandomModelOptions{}, rng);
        break;
    }
    case TopologyKind::file:
        model = load_model(t.model);
        break;
    }
    require_valid(model);
    return model;
}

std::shared_ptr<Objective> build_objective(const ExperimentConfig& config, int clients)
{
    const auto& o = config.objective;
    if (o.kind == ObjectiveKind::quadratic) {
        Matrix centers = Matrix::Zero(o.d, clients);
        if (o.spread > 0.0) {
            Rng rng = derive_stream(o.seed, {kTagModel});
            for (int i = 0; i < clients; ++i) {
                for (int k = 0; k < o.d; ++k) {
                    centers(k, i) = o.spread * rng.normal();
                }
            }
        }
        return make_quadratic(centers, spectrum_curvature(o.d, o.mu, o.smoothness), o.sigma);
    }
    LogisticSetup setup;
    setup.d = o.d;
    setup.clients = clients;
    setup.samples_per_client = o.samples_per_client;
    setup.label_count = o.labels;
    setup.skew = o.skew;
    setup.separation = o.separation;
    setup.l2 = o.l2;
    return make_logistic_synthetic(setup, o.seed);
}

std::string format_metrics(const RoundTrace& trace)
{
    if (trace.rounds.empty()) {
        throw InvalidArgument("cannot emit an empty trace");
    }
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << std::setprecision(17);
    out << "round,dist_sq,loss,uplink_successes,seed\n";
    for (const auto& r : trace.rounds) {
        out << r.round << ',' << r.dist_sq << ',' << r.loss << ',' << r.uplink_successes << ',' << r.seed << '\n';
    }
    return out.str();
}

void emit_metrics(const RoundTrace& trace, const std::filesystem::path& path)
{
    write_text(path, format_metrics(trace));
}

std::uint64_t config_hash(const ExperimentConfig& config)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_toml(config)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

nlohmann::json make_manifest(const ExperimentConfig& config, std::string_view command)
{
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << config_hash(config);
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < config.replicas; ++k) {
        seeds.push_back(replica_seed(config, k));
    }
    return {
        {"command", command},
        {"config_hash", hash.str()},
        {"config", to_toml(config)},
        {"seeds", seeds},
        {"versions", {{"colrel", kVersion}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                      std::to_string(EIGEN_MINOR_VERSION)}}},
    };
}

int run_command(std::string_view command, const ExperimentConfig& config, const CommandContext& context)
{
    if (command == "optimize") return cmd_optimize(config, context);
    if (command == "simulate") return cmd_simulate(config, context);
    if (command == "verify") return cmd_verify(config, context);
    if (command == "bound") return cmd_bound(config, context);
    throw InvalidArgument("unknown command '" + std::string(command) + "'");
}

int threads_from_env()
{
    const char* v = std::getenv("COLREL_THREADS");
    if (!v) {
        return 0;
    }
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    return (end != v && *end == '\0' && n > 0 && n < 4096) ? static_cast<int>(n) : 0;
}

} // namespace colrel
