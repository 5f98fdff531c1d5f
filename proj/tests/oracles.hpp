// Independent reference implementations used as test oracles. They follow
// the defining formulas literally and share no code with the library beyond
// its data types.
#pragma once

#include "colrel/connectivity.hpp"
#include "colrel/weights.hpp"

#include <cmath>
#include <vector>

namespace oracle {

using colrel::ConnectivityModel;
using colrel::Matrix;
using colrel::Vector;
using colrel::WeightMatrix;

/// Triple-sum definition of S (and of S-bar when `relaxed`).
inline double s_triple_sum(const ConnectivityModel& m, const WeightMatrix& w, bool relaxed = false)
{
    const int n = m.size();
    const auto& p = m.uplink;
    const auto& P = m.link;
    const auto& E = m.reciprocity;
    const auto& a = w.alpha;
    double t1 = 0.0, t2 = 0.0, t3 = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int l = 0; l < n; ++l)
                t1 += p(j) * (1 - p(j)) * P(i, j) * P(l, j) * a(j, i) * a(j, l);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            t2 += P(i, j) * p(j) * (1 - P(i, j)) * a(j, i) * a(j, i);
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < n; ++l)
            t3 += p(i) * p(l) * (E(i, l) - P(i, l) * P(l, i)) * (relaxed ? a(l, i) * a(l, i) : a(i, l) * a(l, i));
    return t1 + t2 + t3;
}

/// Every joint outcome with its probability: uplinks as a bitmask, each
/// unordered pair as a base-4 digit (0: both up, 1: i->j only, 2: j->i only,
/// 3: both down). Visits `fn(prob, tau_up, tau)`.
template <typename Fn>
void for_each_outcome(const ConnectivityModel& m, Fn&& fn)
{
    const int n = m.size();
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            pairs.emplace_back(i, j);
    long pair_states = 1;
    for (std::size_t k = 0; k < pairs.size(); ++k)
        pair_states *= 4;

    std::vector<int> up(static_cast<std::size_t>(n));
    Matrix tau(n, n);
    for (long mask = 0; mask < (1L << n); ++mask) {
        long double pu = 1.0L;
        for (int i = 0; i < n; ++i) {
            up[static_cast<std::size_t>(i)] = static_cast<int>((mask >> i) & 1);
            pu *= up[static_cast<std::size_t>(i)] ? m.uplink(i) : 1.0L - m.uplink(i);
        }
        if (pu == 0.0L)
            continue;
        for (long code = 0; code < pair_states; ++code) {
            long double pr = pu;
            tau.setIdentity();
            long c = code;
            for (const auto& [i, j] : pairs) {
                const int digit = static_cast<int>(c % 4);
                c /= 4;
                const long double e = m.reciprocity(i, j);
                const long double cell[4] = {e, m.link(i, j) - e, m.link(j, i) - e,
                                             1.0L - m.link(i, j) - m.link(j, i) + e};
                pr *= cell[digit];
                tau(i, j) = (digit == 0 || digit == 1) ? 1.0 : 0.0;
                tau(j, i) = (digit == 0 || digit == 2) ? 1.0 : 0.0;
            }
            if (pr == 0.0L)
                continue;
            fn(pr, up, tau);
        }
    }
}

/// W_i = sum_j tau_j tau_ij alpha_ji for one outcome.
inline Vector effective(const WeightMatrix& w, const std::vector<int>& up, const Matrix& tau)
{
    const int n = w.size();
    Vector out = Vector::Zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i) += up[static_cast<std::size_t>(j)] * tau(i, j) * w.alpha(j, i);
    return out;
}

/// Exact E[(W_i - 1)(W_l - 1)] by flat enumeration.
inline Matrix covariance(const ConnectivityModel& m, const WeightMatrix& w)
{
    const int n = m.size();
    std::vector<long double> acc(static_cast<std::size_t>(n * n), 0.0L);
    for_each_outcome(m, [&](long double pr, const std::vector<int>& up, const Matrix& tau) {
        const Vector c = effective(w, up, tau).array() - 1.0;
        for (int i = 0; i < n; ++i)
            for (int l = 0; l < n; ++l)
                acc[static_cast<std::size_t>(i * n + l)] += pr * c(i) * c(l);
    });
    Matrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < n; ++l)
            out(i, l) = static_cast<double>(acc[static_cast<std::size_t>(i * n + l)]);
    return out;
}

/// Relay gain of entry j in column i.
inline double gain(const ConnectivityModel& m, int i, int j)
{
    return i == j ? m.uplink(i) : m.uplink(j) * m.link(i, j);
}

inline double column_residual(const ConnectivityModel& m, const WeightMatrix& w, int i)
{
    double s = 0.0;
    for (int j = 0; j < m.size(); ++j)
        s += gain(m, i, j) * w.alpha(j, i);
    return s - 1.0;
}

} // namespace oracle
