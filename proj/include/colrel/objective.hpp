#pragma once

#include "colrel/common.hpp"
#include "colrel/rng.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include <json.hpp>

namespace colrel {

/// Per-client empirical risk f_i with gradient oracles and problem constants.
/// The global objective is f = (1/n) sum_i f_i. Implementations are immutable
/// after construction (lazy caches are internally synchronized).
class Objective
{
public:
    virtual ~Objective() = default;

    virtual int dimension() const = 0;
    virtual int clients() const = 0;

    virtual double loss(int client, const Vector& x) const = 0;
    virtual Vector gradient(int client, const Vector& x) const = 0;

    /// Unbiased estimate of gradient(client, x). Draws only from `rng`.
    virtual Vector stochastic_gradient(int client, const Vector& x, int batch, Rng& rng) const = 0;

    virtual double smoothness() const = 0;
    virtual double strong_convexity() const = 0;
    /// Bound on E||g_i(x) - grad f_i(x)||^2 for a single-sample oracle call.
    virtual double variance() const = 0;
    virtual std::optional<Vector> minimizer() const = 0;

    double global_loss(const Vector& x) const;
    Vector global_gradient(const Vector& x) const;

protected:
    void check_client(int client) const;
};

/// f_i(x) = 0.5 (x - c_i)^T Q (x - c_i). Stochastic gradients add isotropic
/// Gaussian noise with per-component std sigma/sqrt(d), truncated at three
/// standard deviations, so E||noise||^2 <= sigma^2. The batch argument is
/// ignored: the noise level is a property of the oracle.
class QuadraticObjective final : public Objective
{
public:
    /// `centers` holds one column per client.
    QuadraticObjective(Matrix centers, Matrix curvature, double sigma);

    int dimension() const override { return static_cast<int>(centers_.rows()); }
    int clients() const override { return static_cast<int>(centers_.cols()); }

    double loss(int client, const Vector& x) const override;
    Vector gradient(int client, const Vector& x) const override;
    Vector stochastic_gradient(int client, const Vector& x, int batch, Rng& rng) const override;

    double smoothness() const override { return smoothness_; }
    double strong_convexity() const override { return strong_convexity_; }
    double variance() const override { return sigma_ * sigma_; }
    std::optional<Vector> minimizer() const override { return minimizer_; }

    const Matrix& centers() const { return centers_; }
    const Matrix& curvature() const { return curvature_; }
    double sigma() const { return sigma_; }

private:
    Matrix centers_;
    Matrix curvature_;
    double sigma_;
    double smoothness_ = 0.0;
    double strong_convexity_ = 0.0;
    Vector minimizer_;
};

std::shared_ptr<QuadraticObjective> make_quadratic(const Matrix& centers, const Matrix& curvature, double sigma);

/// Diagonal curvature with eigenvalues spread geometrically over [mu, L].
Matrix spectrum_curvature(int d, double mu, double smoothness);

/// Assignment of sample indices to clients.
struct Partition
{
    std::vector<std::vector<int>> shards;
    int skew = 0; // max labels per shard (0 for an unrestricted split)
};

/// Sorts samples by label, cuts them into n*s equal blocks and deals s random
/// blocks to each client. Every block must hold a single label, which bounds
/// the labels per client by s.
Partition sort_and_partition(const std::vector<int>& labels, int n, int s, Rng& rng);

/// Uniformly shuffled equal-size split.
Partition iid_partition(int samples, int n, Rng& rng);

nlohmann::json to_json(const Partition& partition);
Partition partition_from_json(const nlohmann::json& j);

struct Dataset
{
    Matrix features;         // one row per sample
    std::vector<int> labels; // in [0, label_count)
    int label_count = 0;
};

/// Gaussian class clusters: label k has mean m_k ~ N(0, separation^2 I) and
/// unit-variance noise. Labels are balanced.
Dataset make_synthetic_dataset(int samples, int d, int label_count, double separation, Rng& rng);

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path);

/// Multinomial logistic regression with an l2 term, model laid out as a
/// row-major label_count x d weight matrix. f_i is the mean cross-entropy over
/// client i's shard plus (l2/2)||x||^2.
class LogisticObjective final : public Objective
{
public:
    LogisticObjective(const Dataset& data, const Partition& partition, double l2);

    int dimension() const override { return label_count_ * features_; }
    int clients() const override { return static_cast<int>(shards_.size()); }

    double loss(int client, const Vector& x) const override;
    Vector gradient(int client, const Vector& x) const override;
    /// Mean gradient over `batch` samples drawn without replacement; a batch
    /// covering the shard gives the exact gradient.
    Vector stochastic_gradient(int client, const Vector& x, int batch, Rng& rng) const override;

    double smoothness() const override { return smoothness_; }
    double strong_convexity() const override { return l2_; }
    double variance() const override { return variance_; }
    /// Computed on first use by accelerated gradient descent on f.
    std::optional<Vector> minimizer() const override;

    int shard_size(int client) const;
    int label_count() const { return label_count_; }

private:
    struct Shard
    {
        Matrix z;
        std::vector<int> y;
    };

    Vector batch_gradient(const Shard& shard, const std::vector<int>& rows, const Vector& x) const;

    std::vector<Shard> shards_;
    int label_count_ = 0;
    int features_ = 0;
    double l2_ = 0.0;
    double smoothness_ = 0.0;
    double variance_ = 0.0;

    mutable std::once_flag minimizer_once_;
    mutable Vector minimizer_;
};

struct LogisticSetup
{
    int d = 20;
    int clients = 10;
    int samples_per_client = 300;
    int label_count = 10;
    int skew = 3;            // labels per client; 0 selects an IID split
    double separation = 1.0;
    double l2 = 1e-4;
};

std::shared_ptr<LogisticObjective> make_logistic_synthetic(const LogisticSetup& setup, std::uint64_t seed);

} // namespace colrel
