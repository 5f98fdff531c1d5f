#include "colrel/weights.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace colrel {

InfeasibleModel::InfeasibleModel(std::vector<int> clients)
    : Error([&] {
          std::string msg = "infeasible model: no relay path to the PS for client(s)";
          for (int c : clients) {
              msg += " " + std::to_string(c);
          }
          return msg;
      }()),
      clients_(std::move(clients))
{
}

namespace {

// Probability that client j forwards client i's update to the PS.
double relay_gain(const ConnectivityModel& m, int i, int j) { return m.uplink(j) * m.link(i, j); }

bool column_feasible(const ConnectivityModel& m, int i)
{
    for (int j = 0; j < m.size(); ++j) {
        if (relay_gain(m, i, j) > 0.0) {
            return true;
        }
    }
    return false;
}

void check_shapes(const ConnectivityModel& m, const WeightMatrix& w)
{
    if (w.alpha.rows() != m.size() || w.alpha.cols() != m.size()) {
        throw InvalidArgument("weight matrix shape does not match the model");
    }
}

void init_column(const ConnectivityModel& m, int i, Matrix& alpha)
{
    const int n = m.size();
    int count = 0;
    for (int k = 0; k < n; ++k) {
        if (m.uplink(k) > 0.0 && m.link(i, k) > 0.0) {
            ++count;
        }
    }
    for (int j = 0; j < n; ++j) {
        const double gain = relay_gain(m, i, j);
        alpha(j, i) = gain > 0.0 ? 1.0 / (count * gain) : 0.0;
    }
}

// alpha_j(lambda) = max(0, (lambda - offset_j) / (2 curvature_j)) for the
// entries with relay gain in (0, 1).
struct ColumnSystem
{
    std::vector<int> index;
    std::vector<double> gain;
    std::vector<double> offset;
    std::vector<double> curvature;

    double entry(std::size_t k, double lambda) const
    {
        return std::max(0.0, (lambda - offset[k]) / (2.0 * curvature[k]));
    }

    double constraint(double lambda) const
    {
        double total = 0.0;
        for (std::size_t k = 0; k < index.size(); ++k) {
            total += gain[k] * entry(k, lambda);
        }
        return total;
    }

    // Solves the constraint exactly on the active set at `lambda`.
    double polish(double lambda) const
    {
        double slope = 0.0;
        double shift = 0.0;
        for (std::size_t k = 0; k < index.size(); ++k) {
            if (lambda > offset[k]) {
                const double w = gain[k] / (2.0 * curvature[k]);
                slope += w;
                shift += w * offset[k];
            }
        }
        return slope > 0.0 ? (1.0 + shift) / slope : lambda;
    }
};

void check_column(const ConnectivityModel& m, const WeightMatrix& w, int i)
{
    check_shapes(m, w);
    if (i < 0 || i >= m.size()) {
        throw InvalidArgument("column index out of range");
    }
    if (!column_feasible(m, i)) {
        throw InfeasibleModel({i});
    }
}

int deterministic_relays(const ConnectivityModel& m, int i)
{
    int count = 0;
    for (int j = 0; j < m.size(); ++j) {
        if (relay_gain(m, i, j) == 1.0) {
            ++count;
        }
    }
    return count;
}

ColumnSystem build_system(const ConnectivityModel& m, const WeightMatrix& w, int i, Phase phase)
{
    const int n = m.size();
    const double p_i = m.uplink(i);
    ColumnSystem sys;
    for (int j = 0; j < n; ++j) {
        const double gain = relay_gain(m, i, j);
        if (gain <= 0.0) {
            continue;
        }
        const double p_j = m.uplink(j);
        double load = 0.0;
        for (int l = 0; l < n; ++l) {
            if (l != i) {
                load += m.link(l, j) * w.alpha(j, l);
            }
        }
        const double base = 2.0 * (1.0 - p_j) * load;
        const double excess = m.reciprocity(i, j) / m.link(i, j) - m.link(j, i);

        double offset = base;
        double curvature = 1.0 - gain;
        if (phase == Phase::relaxed) {
            curvature += p_i * excess;
        } else {
            offset += 2.0 * p_i * excess * w.alpha(i, j);
        }
        if (!(curvature > 0.0)) {
            throw Error("nonpositive curvature in column " + std::to_string(i));
        }
        sys.index.push_back(j);
        sys.gain.push_back(gain);
        sys.offset.push_back(offset);
        sys.curvature.push_back(curvature);
    }
    return sys;
}

double upper_bracket(const ColumnSystem& sys)
{
    double hi = 0.0;
    for (std::size_t k = 0; k < sys.index.size(); ++k) {
        hi = std::max(hi, 2.0 * sys.curvature[k] / sys.gain[k] + sys.offset[k]);
    }
    return hi;
}

Vector solve_column(const ConnectivityModel& m, const WeightMatrix& w, int i, Phase phase)
{
    check_column(m, w, i);
    const int n = m.size();
    Vector column = Vector::Zero(n);

    const int deterministic = deterministic_relays(m, i);
    if (deterministic > 0) {
        for (int j = 0; j < n; ++j) {
            if (relay_gain(m, i, j) == 1.0) {
                column(j) = 1.0 / deterministic;
            }
        }
        return column;
    }

    const ColumnSystem sys = build_system(m, w, i, phase);
    const auto g = [&sys](double lambda) { return sys.constraint(lambda); };
    double lambda = bisect_lambda(g, 0.0, upper_bracket(sys));
    if (std::abs(g(lambda) - 1.0) > 1e-14) {
        const double refined = sys.polish(lambda);
        if (std::abs(g(refined) - 1.0) < std::abs(g(lambda) - 1.0)) {
            lambda = refined;
        }
    }
    for (std::size_t k = 0; k < sys.index.size(); ++k) {
        column(sys.index[k]) = sys.entry(k, lambda);
    }
    return column;
}

} // namespace

std::vector<int> unreachable_clients(const ConnectivityModel& model)
{
    std::vector<int> out;
    for (int i = 0; i < model.size(); ++i) {
        if (!column_feasible(model, i)) {
            out.push_back(i);
        }
    }
    return out;
}

WeightMatrix init_weights(const ConnectivityModel& model)
{
    auto bad = unreachable_clients(model);
    if (!bad.empty()) {
        throw InfeasibleModel(std::move(bad));
    }
    const int n = model.size();
    WeightMatrix w{Matrix::Zero(n, n)};
    for (int i = 0; i < n; ++i) {
        init_column(model, i, w.alpha);
    }
    return w;
}

Vector unbiasedness_residuals(const ConnectivityModel& model, const WeightMatrix& weights)
{
    check_shapes(model, weights);
    const int n = model.size();
    Vector r(n);
    for (int i = 0; i < n; ++i) {
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            total += relay_gain(model, i, j) * weights.alpha(j, i);
        }
        r(i) = total - 1.0;
    }
    return r;
}

namespace {

// First two sums of S, shared with S-bar.
double variance_terms(const ConnectivityModel& m, const Matrix& a)
{
    const int n = m.size();
    double shared = 0.0;
    for (int j = 0; j < n; ++j) {
        const double p_j = m.uplink(j);
        double load = 0.0;
        for (int i = 0; i < n; ++i) {
            load += m.link(i, j) * a(j, i);
        }
        shared += p_j * (1.0 - p_j) * load * load;
    }
    double link_terms = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double pij = m.link(i, j);
            link_terms += pij * m.uplink(j) * (1.0 - pij) * a(j, i) * a(j, i);
        }
    }
    return shared + link_terms;
}

double reciprocity_weight(const ConnectivityModel& m, int i, int l)
{
    return m.uplink(i) * m.uplink(l) * (m.reciprocity(i, l) - m.link(i, l) * m.link(l, i));
}

} // namespace

double s_value(const ConnectivityModel& model, const WeightMatrix& weights)
{
    check_shapes(model, weights);
    const Matrix& a = weights.alpha;
    double recip = 0.0;
    for (int i = 0; i < model.size(); ++i) {
        for (int l = 0; l < model.size(); ++l) {
            recip += reciprocity_weight(model, i, l) * a(i, l) * a(l, i);
        }
    }
    return variance_terms(model, a) + recip;
}

double s_bar_value(const ConnectivityModel& model, const WeightMatrix& weights)
{
    check_shapes(model, weights);
    const Matrix& a = weights.alpha;
    double recip = 0.0;
    for (int i = 0; i < model.size(); ++i) {
        for (int l = 0; l < model.size(); ++l) {
            recip += reciprocity_weight(model, i, l) * a(l, i) * a(l, i);
        }
    }
    return variance_terms(model, a) + recip;
}

double bisect_lambda(const std::function<double(double)>& g, double lo, double hi, double tol, int max_iter)
{
    if (!(lo <= hi)) {
        throw BracketError("bisection interval is empty");
    }
    const double g_lo = g(lo);
    if (std::abs(g_lo - 1.0) <= tol) {
        return lo;
    }
    const double g_hi = g(hi);
    if (std::abs(g_hi - 1.0) <= tol) {
        return hi;
    }
    if (g_hi < 1.0) {
        throw BracketError("bisection bracket failure: g(hi) < 1");
    }
    if (g_lo > 1.0) {
        throw BracketError("bisection bracket failure: g(lo) > 1");
    }

    double best = hi;
    double best_gap = std::abs(g_hi - 1.0);
    for (int it = 0; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double v = g(mid);
        const double gap = std::abs(v - 1.0);
        if (gap < best_gap) {
            best = mid;
            best_gap = gap;
        }
        if (gap <= tol) {
            return mid;
        }
        if (mid <= lo || mid >= hi) {
            break; // interval exhausted at double resolution
        }
        (v < 1.0 ? lo : hi) = mid;
    }
    return best;
}

ConstraintMap column_constraint_map(const ConnectivityModel& model, const WeightMatrix& weights, int i, Phase phase)
{
    check_column(model, weights, i);
    if (deterministic_relays(model, i) > 0) {
        throw InvalidArgument("column " + std::to_string(i) + " has deterministic relays; no multiplier is needed");
    }
    auto sys = std::make_shared<const ColumnSystem>(build_system(model, weights, i, phase));
    return ConstraintMap{[sys](double lambda) { return sys->constraint(lambda); }, upper_bracket(*sys)};
}

Vector solve_column_relaxed(const ConnectivityModel& model, const WeightMatrix& weights, int i)
{
    return solve_column(model, weights, i, Phase::relaxed);
}

Vector solve_column_finetune(const ConnectivityModel& model, const WeightMatrix& weights, int i)
{
    return solve_column(model, weights, i, Phase::finetune);
}

OptimizationResult optimize_weights(const ConnectivityModel& model, const OptimizerOptions& options)
{
    require_valid(model);
    const int n = model.size();
    auto skipped = unreachable_clients(model);
    if (!skipped.empty() && !options.skip_unreachable) {
        throw InfeasibleModel(skipped);
    }
    std::vector<bool> active(static_cast<std::size_t>(n), true);
    for (int c : skipped) {
        active[static_cast<std::size_t>(c)] = false;
    }

    OptimizationResult result;
    WeightMatrix& w = result.weights;
    w.alpha = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (active[static_cast<std::size_t>(i)]) {
            init_column(model, i, w.alpha);
        }
    }

    const int sweeps = options.sweeps > 0 ? options.sweeps : 50 * n;
    for (Phase phase : {Phase::relaxed, Phase::finetune}) {
        const auto objective = [&](const WeightMatrix& a) {
            return phase == Phase::relaxed ? s_bar_value(model, a) : s_value(model, a);
        };
        PhaseReport& rep = phase == Phase::relaxed ? result.report.relaxed : result.report.finetune;
        rep.trace.push_back(objective(w));
        for (int s = 0; s < sweeps; ++s) {
            double change = 0.0;
            for (int i = 0; i < n; ++i) {
                if (!active[static_cast<std::size_t>(i)]) {
                    continue;
                }
                Vector col = solve_column(model, w, i, phase);
                change = std::max(change, (col - w.alpha.col(i)).cwiseAbs().maxCoeff());
                w.alpha.col(i) = col;
                if (options.on_update) {
                    double res = 0.0;
                    for (int j = 0; j < n; ++j) {
                        res += relay_gain(model, i, j) * col(j);
                    }
                    options.on_update(ColumnUpdate{phase, s, i, objective(w), std::abs(res - 1.0)}, w);
                }
            }
            rep.sweeps = s + 1;
            rep.trace.push_back(objective(w));
            if (change < options.stop_change) {
                break;
            }
        }
    }

    SolverReport& report = result.report;
    report.s_bar = s_bar_value(model, w);
    report.s = s_value(model, w);
    const Vector res = unbiasedness_residuals(model, w);
    for (int i = 0; i < n; ++i) {
        if (active[static_cast<std::size_t>(i)]) {
            report.max_residual = std::max(report.max_residual, std::abs(res(i)));
        }
    }
    report.skipped_columns = std::move(skipped);
    return result;
}

nlohmann::json to_json(const SolverReport& report)
{
    auto phase = [](const PhaseReport& p) { return nlohmann::json{{"sweeps", p.sweeps}, {"trace", p.trace}}; };
    return {
        {"relaxed", phase(report.relaxed)},
        {"finetune", phase(report.finetune)},
        {"s_bar", report.s_bar},
        {"s", report.s},
        {"max_residual", report.max_residual},
        {"skipped_columns", report.skipped_columns},
    };
}

nlohmann::json to_json(const WeightMatrix& weights)
{
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < weights.size(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (int j = 0; j < weights.size(); ++j) {
            r.push_back(weights.alpha(i, j));
        }
        rows.push_back(std::move(r));
    }
    return {{"n", weights.size()}, {"alpha", rows}};
}

WeightMatrix weights_from_json(const nlohmann::json& j)
{
    try {
        const auto rows = j.at("alpha").get<std::vector<std::vector<double>>>();
        const int n = static_cast<int>(rows.size());
        WeightMatrix w{Matrix(n, n)};
        for (int r = 0; r < n; ++r) {
            if (static_cast<int>(rows[r].size()) != n) {
                throw InvalidArgument("weights: alpha must be square");
            }
            for (int c = 0; c < n; ++c) {
                w.alpha(r, c) = rows[r][c];
            }
        }
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("weights: ") + e.what());
    }
}

void save_weights_csv(const WeightMatrix& weights, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << std::setprecision(17);
    for (int i = 0; i < weights.size(); ++i) {
        for (int j = 0; j < weights.size(); ++j) {
            out << (j ? "," : "") << weights.alpha(i, j);
        }
        out << '\n';
    }
}

WeightMatrix load_weights_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open weights file " + path.string());
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        rows.push_back(std::move(row));
    }
    const int n = static_cast<int>(rows.size());
    WeightMatrix w{Matrix(n, n)};
    for (int r = 0; r < n; ++r) {
        if (static_cast<int>(rows[r].size()) != n) {
            throw InvalidArgument(path.string() + ": weights must be a square matrix");
        }
        for (int c = 0; c < n; ++c) {
            w.alpha(r, c) = rows[r][c];
        }
    }
    return w;
}

} // namespace colrel
