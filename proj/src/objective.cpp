#include "colrel/objective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace colrel {

// ---------------------------------------------------------------- Objective

double Objective::global_loss(const Vector& x) const
{
    double sum = 0.0;
    for (int i = 0; i < clients(); ++i) {
        sum += loss(i, x);
    }
    return sum / clients();
}

Vector Objective::global_gradient(const Vector& x) const
{
    Vector sum = Vector::Zero(dimension());
    for (int i = 0; i < clients(); ++i) {
        sum += gradient(i, x);
    }
    return sum / clients();
}

void Objective::check_client(int client) const
{
    if (client < 0 || client >= clients()) {
        throw InvalidArgument("client index " + std::to_string(client) + " out of range");
    }
}

// ---------------------------------------------------------------- quadratic

QuadraticObjective::QuadraticObjective(Matrix centers, Matrix curvature, double sigma)
    : centers_(std::move(centers)), curvature_(std::move(curvature)), sigma_(sigma)
{
    const auto d = centers_.rows();
    if (d < 1 || centers_.cols() < 1) {
        throw InvalidArgument("quadratic objective needs d >= 1 and n >= 1");
    }
    if (curvature_.rows() != d || curvature_.cols() != d) {
        throw InvalidArgument("curvature matrix must be d x d");
    }
    if (!(sigma_ >= 0.0) || !std::isfinite(sigma_)) {
        throw InvalidArgument("noise level sigma must be finite and >= 0");
    }
    if ((curvature_ - curvature_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + curvature_.cwiseAbs().maxCoeff())) {
        throw InvalidArgument("curvature matrix must be symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(curvature_, Eigen::EigenvaluesOnly);
    strong_convexity_ = eig.eigenvalues().minCoeff();
    smoothness_ = eig.eigenvalues().maxCoeff();
    if (!(strong_convexity_ > 0.0)) {
        throw InvalidArgument("curvature matrix must be positive definite");
    }
    minimizer_ = centers_.rowwise().mean();
}

double QuadraticObjective::loss(int client, const Vector& x) const
{
    check_client(client);
    const Vector r = x - centers_.col(client);
    return 0.5 * r.dot(curvature_ * r);
}

Vector QuadraticObjective::gradient(int client, const Vector& x) const
{
    check_client(client);
    return curvature_ * (x - centers_.col(client));
}

Vector QuadraticObjective::stochastic_gradient(int client, const Vector& x, int /*batch*/, Rng& rng) const
{
    Vector g = gradient(client, x);
    if (sigma_ == 0.0) {
        return g;
    }
    const double std = sigma_ / std::sqrt(static_cast<double>(dimension()));
    for (Eigen::Index k = 0; k < g.size(); ++k) {
        double z = rng.normal();
        while (std::abs(z) > 3.0) {
            z = rng.normal();
        }
        g(k) += std * z;
    }
    return g;
}

std::shared_ptr<QuadraticObjective> make_quadratic(const Matrix& centers, const Matrix& curvature, double sigma)
{
    return std::make_shared<QuadraticObjective>(centers, curvature, sigma);
}

Matrix spectrum_curvature(int d, double mu, double smoothness)
{
    if (d < 1 || !(mu > 0.0) || smoothness < mu) {
        throw InvalidArgument("spectrum_curvature needs d >= 1 and 0 < mu <= L");
    }
    Vector diag(d);
    for (int k = 0; k < d; ++k) {
        const double t = d == 1 ? 0.0 : static_cast<double>(k) / (d - 1);
        diag(k) = mu * std::pow(smoothness / mu, t);
    }
    diag(d - 1) = smoothness; // exact endpoint
    return diag.asDiagonal();
}

// ---------------------------------------------------------------- partitions

Partition sort_and_partition(const std::vector<int>& labels, int n, int s, Rng& rng)
{
    const long total = static_cast<long>(labels.size());
    if (n < 1 || s < 1) {
        throw InvalidArgument("sort_and_partition needs n >= 1 and s >= 1");
    }
    const long blocks = static_cast<long>(n) * s;
    if (total == 0 || total % blocks != 0) {
        throw InvalidArgument("infeasible (n, s) combination: " + std::to_string(total) +
                              " samples cannot be cut into " + std::to_string(blocks) + " equal blocks");
    }
    std::vector<int> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return labels[a] < labels[b]; });

    const long block_size = total / blocks;
    for (long b = 0; b < blocks; ++b) {
        const int first = labels[order[b * block_size]];
        const int last = labels[order[(b + 1) * block_size - 1]];
        if (first != last) {
            throw InvalidArgument("infeasible (n, s) combination: block " + std::to_string(b) +
                                  " spans labels " + std::to_string(first) + " and " + std::to_string(last));
        }
    }

    std::vector<int> deal(static_cast<std::size_t>(blocks));
    std::iota(deal.begin(), deal.end(), 0);
    std::shuffle(deal.begin(), deal.end(), rng);

    Partition part;
    part.skew = s;
    part.shards.resize(n);
    for (int c = 0; c < n; ++c) {
        auto& shard = part.shards[c];
        for (int k = 0; k < s; ++k) {
            const long b = deal[static_cast<std::size_t>(c * s + k)];
            shard.insert(shard.end(), order.begin() + b * block_size, order.begin() + (b + 1) * block_size);
        }
        std::sort(shard.begin(), shard.end());
    }
    return part;
}

Partition iid_partition(int samples, int n, Rng& rng)
{
    if (n < 1 || samples < n || samples % n != 0) {
        throw InvalidArgument("iid_partition needs sample count divisible by n");
    }
    std::vector<int> order(static_cast<std::size_t>(samples));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Partition part;
    part.shards.resize(n);
    const int size = samples / n;
    for (int c = 0; c < n; ++c) {
        part.shards[c].assign(order.begin() + c * size, order.begin() + (c + 1) * size);
        std::sort(part.shards[c].begin(), part.shards[c].end());
    }
    return part;
}

nlohmann::json to_json(const Partition& partition)
{
    return {{"skew", partition.skew}, {"shards", partition.shards}};
}

Partition partition_from_json(const nlohmann::json& j)
{
    Partition p;
    p.skew = j.at("skew").get<int>();
    p.shards = j.at("shards").get<std::vector<std::vector<int>>>();
    return p;
}

// ---------------------------------------------------------------- datasets

Dataset make_synthetic_dataset(int samples, int d, int label_count, double separation, Rng& rng)
{
    if (samples < 1 || d < 1 || label_count < 1) {
        throw InvalidArgument("synthetic dataset needs positive counts");
    }
    if (samples % label_count != 0) {
        throw InvalidArgument("sample count must be divisible by the label count");
    }
    Matrix means(label_count, d);
    for (int k = 0; k < label_count; ++k) {
        for (int j = 0; j < d; ++j) {
            means(k, j) = separation * rng.normal();
        }
    }
    Dataset data;
    data.label_count = label_count;
    data.features.resize(samples, d);
    data.labels.resize(static_cast<std::size_t>(samples));
    for (int s = 0; s < samples; ++s) {
        const int y = s % label_count;
        data.labels[static_cast<std::size_t>(s)] = y;
        for (int j = 0; j < d; ++j) {
            data.features(s, j) = means(y, j) + rng.normal();
        }
    }
    return data;
}

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.precision(17);
    out << "label";
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
        out << ",x" << j;
    }
    out << '\n';
    for (Eigen::Index s = 0; s < data.features.rows(); ++s) {
        out << data.labels[static_cast<std::size_t>(s)];
        for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
            out << ',' << data.features(s, j);
        }
        out << '\n';
    }
}

Dataset load_dataset_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::string line;
    std::getline(in, line); // header
    std::vector<int> labels;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        labels.push_back(std::stoi(cell));
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error("ragged dataset row in " + path.string());
        }
        rows.push_back(std::move(row));
    }
    Dataset data;
    const auto d = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
    data.features.resize(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t s = 0; s < rows.size(); ++s) {
        for (Eigen::Index j = 0; j < d; ++j) {
            data.features(static_cast<Eigen::Index>(s), j) = rows[s][static_cast<std::size_t>(j)];
        }
    }
    data.labels = std::move(labels);
    data.label_count = data.labels.empty() ? 0 : *std::max_element(data.labels.begin(), data.labels.end()) + 1;
    return data;
}

// ---------------------------------------------------------------- logistic

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Replaces each row of scores by softmax(row) - onehot(label).
void softmax_residual(Matrix& scores, const std::vector<int>& y, const std::vector<int>& rows)
{
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double peak = scores.row(r).maxCoeff();
        scores.row(r).array() = (scores.row(r).array() - peak).exp();
        scores.row(r) /= scores.row(r).sum();
        scores(r, y[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])]) -= 1.0;
    }
}

} // namespace

LogisticObjective::LogisticObjective(const Dataset& data, const Partition& partition, double l2)
    : label_count_(data.label_count), features_(static_cast<int>(data.features.cols())), l2_(l2)
{
    if (!(l2 > 0.0)) {
        throw InvalidArgument("l2 coefficient must be positive for strong convexity");
    }
    if (label_count_ < 2) {
        throw InvalidArgument("degenerate labels: need at least two classes");
    }
    if (partition.shards.empty()) {
        throw InvalidArgument("partition has no shards");
    }
    const auto total = static_cast<int>(data.labels.size());
    for (const auto& idx : partition.shards) {
        if (idx.empty()) {
            throw InvalidArgument("empty shard");
        }
        Shard shard;
        shard.z.resize(static_cast<Eigen::Index>(idx.size()), features_);
        shard.y.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] < 0 || idx[r] >= total) {
                throw InvalidArgument("partition references a missing sample");
            }
            shard.z.row(static_cast<Eigen::Index>(r)) = data.features.row(idx[r]);
            shard.y[r] = data.labels[static_cast<std::size_t>(idx[r])];
        }
        shards_.push_back(std::move(shard));
    }

    // Per-sample Hessian is (diag(p) - p p^T) (x) z z^T, whose first factor has
    // spectral norm <= 1/2.
    double gram = 0.0;
    for (const auto& shard : shards_) {
        const Matrix g = shard.z.transpose() * shard.z / static_cast<double>(shard.z.rows());
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
        gram = std::max(gram, eig.eigenvalues().maxCoeff());
    }
    smoothness_ = 0.5 * gram + l2_;

    // Single-sample gradient variance, estimated at the origin.
    const Vector origin = Vector::Zero(dimension());
    for (const auto& shard : shards_) {
        std::vector<int> all(shard.y.size());
        std::iota(all.begin(), all.end(), 0);
        const Vector mean = batch_gradient(shard, all, origin);
        double acc = 0.0;
        for (int r : all) {
            acc += (batch_gradient(shard, {r}, origin) - mean).squaredNorm();
        }
        variance_ = std::max(variance_, acc / static_cast<double>(all.size()));
    }
}

int LogisticObjective::shard_size(int client) const
{
    check_client(client);
    return static_cast<int>(shards_[static_cast<std::size_t>(client)].y.size());
}

Vector LogisticObjective::batch_gradient(const Shard& shard, const std::vector<int>& rows, const Vector& x) const
{
    const Eigen::Map<const RowMatrix> w(x.data(), label_count_, features_);
    Matrix z(static_cast<Eigen::Index>(rows.size()), features_);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        z.row(static_cast<Eigen::Index>(r)) = shard.z.row(rows[r]);
    }
    Matrix scores = z * w.transpose();
    softmax_residual(scores, shard.y, rows);
    const RowMatrix g = scores.transpose() * z / static_cast<double>(rows.size());
    Vector out = Eigen::Map<const Vector>(g.data(), g.size());
    out += l2_ * x;
    return out;
}

double LogisticObjective::loss(int client, const Vector& x) const
{
    check_client(client);
    const Shard& shard = shards_[static_cast<std::size_t>(client)];
    const Eigen::Map<const RowMatrix> w(x.data(), label_count_, features_);
    const Matrix scores = shard.z * w.transpose();
    double total = 0.0;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double peak = scores.row(r).maxCoeff();
        const double lse = peak + std::log((scores.row(r).array() - peak).exp().sum());
        total += lse - scores(r, shard.y[static_cast<std::size_t>(r)]);
    }
    return total / static_cast<double>(scores.rows()) + 0.5 * l2_ * x.squaredNorm();
}

Vector LogisticObjective::gradient(int client, const Vector& x) const
{
    check_client(client);
    const Shard& shard = shards_[static_cast<std::size_t>(client)];
    std::vector<int> all(shard.y.size());
    std::iota(all.begin(), all.end(), 0);
    return batch_gradient(shard, all, x);
}

Vector LogisticObjective::stochastic_gradient(int client, const Vector& x, int batch, Rng& rng) const
{
    check_client(client);
    if (batch < 1) {
        throw InvalidArgument("batch size must be >= 1");
    }
    const Shard& shard = shards_[static_cast<std::size_t>(client)];
    const int size = static_cast<int>(shard.y.size());
    if (batch >= size) {
        return gradient(client, x);
    }
    // Partial Fisher-Yates: the first `batch` slots form a uniform subset.
    std::vector<int> pool(static_cast<std::size_t>(size));
    std::iota(pool.begin(), pool.end(), 0);
    for (int k = 0; k < batch; ++k) {
        const auto pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(size - k)));
        std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick)]);
    }
    pool.resize(static_cast<std::size_t>(batch));
    return batch_gradient(shard, pool, x);
}

std::optional<Vector> LogisticObjective::minimizer() const
{
    std::call_once(minimizer_once_, [this] {
        // Nesterov's method for strongly convex objectives, step 1/L.
        const double step = 1.0 / smoothness_;
        const double q = std::sqrt(l2_ / smoothness_);
        const double momentum = (1.0 - q) / (1.0 + q);
        Vector x = Vector::Zero(dimension());
        Vector y = x;
        for (int it = 0; it < 200000; ++it) {
            const Vector g = global_gradient(y);
            if (g.norm() < 1e-10) {
                x = y;
                break;
            }
            const Vector next = y - step * g;
            y = next + momentum * (next - x);
            x = next;
        }
        minimizer_ = x;
    });
    return minimizer_;
}

std::shared_ptr<LogisticObjective> make_logistic_synthetic(const LogisticSetup& setup, std::uint64_t seed)
{
    if (setup.clients < 1 || setup.samples_per_client < 1) {
        throw InvalidArgument("logistic setup needs positive client and sample counts");
    }
    Rng data_rng = derive_stream(seed, {kTagData, 0});
    Rng part_rng = derive_stream(seed, {kTagData, 1});
    const int total = setup.clients * setup.samples_per_client;
    const Dataset data = make_synthetic_dataset(total, setup.d, setup.label_count, setup.separation, data_rng);
    const Partition part = setup.skew > 0 ? sort_and_partition(data.labels, setup.clients, setup.skew, part_rng)
                                          : iid_partition(total, setup.clients, part_rng);
    return std::make_shared<LogisticObjective>(data, part, setup.l2);
}

} // namespace colrel
