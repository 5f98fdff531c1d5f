#include "colrel/theory.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace colrel {

Vector effective_weights(const WeightMatrix& weights, const LinkRealization& real)
{
    const int n = weights.size();
    Vector w = Vector::Zero(n);
    for (int j = 0; j < n; ++j) {
        if (!real.uplink(j)) {
            continue;
        }
        for (int i = 0; i < n; ++i) {
            if (real.link(i, j)) {
                w(i) += weights.alpha(j, i);
            }
        }
    }
    return w;
}

Matrix closed_form_covariance(const ConnectivityModel& model, const WeightMatrix& weights)
{
    const Vector res = unbiasedness_residuals(model, weights);
    if (res.cwiseAbs().maxCoeff() > 1e-9) {
        throw InvalidArgument("closed-form covariance requires the unbiasedness constraint (residual " +
                              std::to_string(res.cwiseAbs().maxCoeff()) + ")");
    }
    const int n = model.size();
    const Matrix& a = weights.alpha;
    const Vector& p = model.uplink;
    const Matrix& link = model.link;
    Matrix cov = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double g = p(j) * link(i, j);
            var += g * (1.0 - g) * a(j, i) * a(j, i);
        }
        cov(i, i) = var;
        for (int l = i + 1; l < n; ++l) {
            double c = 0.0;
            for (int j = 0; j < n; ++j) {
                c += p(j) * (1.0 - p(j)) * link(i, j) * link(l, j) * a(j, i) * a(j, l);
            }
            c += p(i) * p(l) * (model.reciprocity(i, l) - link(i, l) * link(l, i)) * a(i, l) * a(l, i);
            cov(i, l) = c;
            cov(l, i) = c;
        }
    }
    return cov;
}

Matrix enumerate_covariance(const ConnectivityModel& model, const WeightMatrix& weights)
{
    const int n = model.size();
    if (n > 5) {
        throw InvalidArgument("enumerate_covariance supports n <= 5");
    }
    if (weights.size() != n) {
        throw InvalidArgument("weight matrix shape does not match the model");
    }

    struct PairOutcome
    {
        bool ij;
        bool ji;
        double prob;
    };
    struct Pair
    {
        int i;
        int j;
        std::vector<PairOutcome> outcomes;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double pij = model.link(i, j);
            const double pji = model.link(j, i);
            const double both = model.reciprocity(i, j);
            const PairOutcome table[4] = {
                {true, true, both},
                {true, false, pij - both},
                {false, true, pji - both},
                {false, false, 1.0 - pij - pji + both},
            };
            Pair pair{i, j, {}};
            for (const auto& o : table) {
                if (o.prob > 0.0) {
                    pair.outcomes.push_back(o);
                }
            }
            pairs.push_back(std::move(pair));
        }
    }

    using Acc = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    Acc acc = Acc::Zero(n, n);
    LinkRealization real(n);
    Vector centered(n);

    std::function<void(std::size_t, long double)> visit_pairs = [&](std::size_t k, long double prob) {
        if (k == pairs.size()) {
            centered = effective_weights(weights, real).array() - 1.0;
            for (int i = 0; i < n; ++i) {
                for (int l = i; l < n; ++l) {
                    acc(i, l) += prob * static_cast<long double>(centered(i)) * centered(l);
                }
            }
            return;
        }
        const Pair& pair = pairs[k];
        for (const auto& o : pair.outcomes) {
            real.set_link(pair.i, pair.j, o.ij);
            real.set_link(pair.j, pair.i, o.ji);
            visit_pairs(k + 1, prob * o.prob);
        }
    };
    std::function<void(int, long double)> visit_uplinks = [&](int i, long double prob) {
        if (i == n) {
            visit_pairs(0, prob);
            return;
        }
        const double p = model.uplink(i);
        if (p > 0.0) {
            real.set_uplink(i, true);
            visit_uplinks(i + 1, prob * p);
        }
        if (p < 1.0) {
            real.set_uplink(i, false);
            visit_uplinks(i + 1, prob * (1.0L - p));
        }
    };
    visit_uplinks(0, 1.0L);

    Matrix cov(n, n);
    for (int i = 0; i < n; ++i) {
        for (int l = i; l < n; ++l) {
            cov(i, l) = static_cast<double>(acc(i, l));
            cov(l, i) = cov(i, l);
        }
    }
    return cov;
}

WeightMoments sample_effective_weights(const ConnectivityModel& model, const WeightMatrix& weights,
                                       long samples, std::uint64_t seed)
{
    if (samples < 2) {
        throw InvalidArgument("need at least two samples");
    }
    const int n = model.size();
    Rng uplink_rng = derive_stream(seed, {kTagUplink});
    Rng pair_rng = derive_stream(seed, {kTagPairs});
    Vector mean = Vector::Zero(n);
    Vector m2 = Vector::Zero(n);
    for (long s = 1; s <= samples; ++s) {
        const Vector w = effective_weights(weights, sample_realization(model, uplink_rng, pair_rng));
        const Vector delta = w - mean;
        mean += delta / static_cast<double>(s);
        m2.array() += delta.array() * (w - mean).array();
    }
    WeightMoments out;
    out.mean = mean;
    out.std_error = (m2 / static_cast<double>(samples - 1) / static_cast<double>(samples)).cwiseSqrt();
    out.samples = samples;
    return out;
}

TheoryConstants compute_constants(double s, const ProblemConstants& pc)
{
    const double mu = pc.strong_convexity;
    if (!(mu > 0.0)) {
        throw InvalidArgument("theory constants need mu > 0");
    }
    if (pc.local_steps < 1 || pc.clients < 1) {
        throw InvalidArgument("theory constants need T >= 1 and n >= 1");
    }
    const double L = pc.smoothness;
    const double sigma2 = pc.variance;
    const double n = pc.clients;
    const double T = pc.local_steps;
    constexpr double e = std::numbers::e;

    TheoryConstants c;
    c.s = s;
    c.b = 2.0 * L * L * s / (n * n);
    c.r0 = std::max({L / mu, 4.0 * (c.b / (mu * mu) + 1.0), 1.0 / T, 4.0 * n / (mu * mu * T)});
    c.c1 = 16.0 / (mu * mu) * (2.0 * sigma2 / (n * n)) * s;
    c.c2 = 16.0 / (mu * mu) * L * L * sigma2 * e / n;
    c.c3 = 256.0 / (mu * mu * mu * mu) * (L * L * sigma2 * e + 2.0 * L * L * sigma2 * e * s / (n * n));
    return c;
}

TheoryConstants compute_constants(const ConnectivityModel& model, const WeightMatrix& weights,
                                  const ProblemConstants& pc)
{
    return compute_constants(s_value(model, weights), pc);
}

double theorem_bound(const TheoryConstants& c, double initial_gap, int local_steps, double r)
{
    if (r < c.r0) {
        throw InvalidArgument("theorem bound holds only for r >= r0 = " + std::to_string(c.r0));
    }
    const double T = local_steps;
    const double denom = r * T + 1.0;
    return (c.r0 * T + 1.0) / (denom * denom) * initial_gap + c.c1 * T / denom +
           c.c2 * (T - 1.0) * (T - 1.0) / denom + c.c3 * (T - 1.0) / (denom * denom);
}

} // namespace colrel
