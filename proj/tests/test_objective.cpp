#include "colrel/objective.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

using namespace colrel;

namespace {

Vector random_vector(int d, Rng& rng, double scale = 1.0)
{
    Vector v(d);
    for (int k = 0; k < d; ++k) {
        v(k) = scale * rng.normal();
    }
    return v;
}

/// Central finite-difference gradient.
Vector fd_gradient(const Objective& f, int client, const Vector& x, double h)
{
    Vector g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vector a = x, b = x;
        a(k) += h;
        b(k) -= h;
        g(k) = (f.loss(client, a) - f.loss(client, b)) / (2.0 * h);
    }
    return g;
}

Matrix random_spd(int d, Rng& rng)
{
    Matrix b(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            b(i, j) = rng.normal();
    return b * b.transpose() + Matrix::Identity(d, d);
}

} // namespace

TEST_CASE("quadratic worked example")
{
    const Matrix c{{0.0, 2.0}};
    const auto f = make_quadratic(c, Matrix::Identity(1, 1), 0.0);
    const Vector x_star = *f->minimizer();
    CHECK(x_star(0) == 1.0);
    CHECK(f->gradient(0, x_star)(0) == 1.0);
    CHECK(f->gradient(1, x_star)(0) == -1.0);
    CHECK(f->global_gradient(x_star)(0) == 0.0);
    CHECK(f->smoothness() == 1.0);
    CHECK(f->strong_convexity() == 1.0);
}

TEST_CASE("quadratic homogeneous minimizer and constants")
{
    Rng rng(1);
    const Vector c = random_vector(4, rng);
    const Matrix centers = c.replicate(1, 3);
    const Matrix q = spectrum_curvature(4, 0.5, 2.0);
    const auto f = make_quadratic(centers, q, 1.0);
    CHECK((*f->minimizer() - c).norm() <= 1e-15);
    CHECK(f->smoothness() == doctest::Approx(2.0));
    CHECK(f->strong_convexity() == doctest::Approx(0.5));
    CHECK(f->variance() == 1.0);
    CHECK_THROWS_AS(make_quadratic(centers, -q, 0.0), InvalidArgument);
    CHECK_THROWS_AS(make_quadratic(centers, q, -1.0), InvalidArgument);
}

TEST_CASE("quadratic gradients: finite differences and strong convexity")
{
    Rng rng(2);
    const int d = 5;
    const Matrix q = random_spd(d, rng);
    Matrix centers(d, 3);
    for (int i = 0; i < 3; ++i)
        centers.col(i) = random_vector(d, rng);
    const auto f = make_quadratic(centers, q, 0.0);
    for (int t = 0; t < 20; ++t) {
        const int i = t % 3;
        const Vector x = random_vector(d, rng, 2.0);
        const Vector g = f->gradient(i, x);
        CHECK((fd_gradient(*f, i, x, 1e-5) - g).norm() <= 1e-5 * std::max(1.0, g.norm()));
        const Vector y = random_vector(d, rng, 2.0);
        CHECK((f->gradient(i, x) - f->gradient(i, y)).dot(x - y) >=
              f->strong_convexity() * (x - y).squaredNorm() * (1.0 - 1e-12));
    }
}

TEST_CASE("quadratic stochastic gradient")
{
    Rng rng(3);
    const int d = 6;
    const Matrix centers = Matrix::Zero(d, 2);
    SUBCASE("zero noise is exact")
    {
        const auto f = make_quadratic(centers, Matrix::Identity(d, d), 0.0);
        const Vector x = random_vector(d, rng);
        CHECK(f->stochastic_gradient(0, x, 1, rng) == f->gradient(0, x));
    }
    SUBCASE("unbiased with bounded variance")
    {
        const double sigma = 1.5;
        const auto f = make_quadratic(centers, spectrum_curvature(d, 1.0, 3.0), sigma);
        const Vector x = random_vector(d, rng);
        const Vector g = f->gradient(1, x);
        const int N = 10000;
        Vector mean = Vector::Zero(d);
        Vector sq = Vector::Zero(d);
        double noise = 0.0;
        for (int k = 0; k < N; ++k) {
            const Vector s = f->stochastic_gradient(1, x, 1, rng);
            mean += s;
            sq += s.cwiseProduct(s);
            noise += (s - g).squaredNorm();
            CHECK((s - g).cwiseAbs().maxCoeff() <= 3.0 * sigma / std::sqrt(d) + 1e-12);
        }
        mean /= N;
        const Vector var = sq / N - mean.cwiseProduct(mean);
        for (int k = 0; k < d; ++k) {
            CHECK(std::abs(mean(k) - g(k)) <= 4.0 * std::sqrt(var(k) / N));
        }
        CHECK(noise / N <= sigma * sigma);
    }
}

TEST_CASE("sort_and_partition")
{
    Rng rng(4);
    SUBCASE("one label per client")
    {
        std::vector<int> labels;
        for (int s = 0; s < 1000; ++s)
            labels.push_back(s % 10);
        const auto part = sort_and_partition(labels, 10, 1, rng);
        for (const auto& shard : part.shards) {
            std::set<int> seen;
            for (int idx : shard)
                seen.insert(labels[static_cast<std::size_t>(idx)]);
            CHECK(seen.size() == 1);
            CHECK(shard.size() == 100);
        }
    }
    SUBCASE("single client with s = label count gets everything")
    {
        std::vector<int> labels{0, 1, 2, 0, 1, 2};
        const auto part = sort_and_partition(labels, 1, 3, rng);
        REQUIRE(part.shards.size() == 1);
        CHECK(part.shards[0].size() == 6);
    }
    SUBCASE("s = 3 partitions are disjoint, exhaustive, equal and capped")
    {
        std::vector<int> labels;
        for (int s = 0; s < 3000; ++s)
            labels.push_back(s % 10);
        const auto part = sort_and_partition(labels, 10, 3, rng);
        std::set<int> all;
        for (const auto& shard : part.shards) {
            CHECK(shard.size() == 300);
            std::set<int> seen;
            for (int idx : shard) {
                seen.insert(labels[static_cast<std::size_t>(idx)]);
                CHECK(all.insert(idx).second);
            }
            CHECK(seen.size() <= 3);
        }
        CHECK(all.size() == 3000);
        CHECK(partition_from_json(to_json(part)).shards == part.shards);
    }
    SUBCASE("infeasible combinations")
    {
        std::vector<int> labels(100, 0);
        CHECK_THROWS_AS(sort_and_partition(labels, 3, 3, rng), InvalidArgument);
        std::vector<int> mixed;
        for (int s = 0; s < 30; ++s)
            mixed.push_back(s % 4);
        CHECK_THROWS_AS(sort_and_partition(mixed, 3, 2, rng), InvalidArgument);
    }
}

TEST_CASE("logistic objective")
{
    LogisticSetup setup;
    setup.d = 5;
    setup.clients = 4;
    setup.samples_per_client = 60;
    setup.label_count = 4;
    setup.skew = 2;
    const auto f = make_logistic_synthetic(setup, 7);
    CHECK(f->dimension() == 20);
    CHECK(f->strong_convexity() >= 1e-4);
    CHECK(f->smoothness() >= f->strong_convexity());

    const Vector zero = Vector::Zero(f->dimension());
    for (int i = 0; i < 4; ++i) {
        CHECK(f->loss(i, zero) == doctest::Approx(std::log(4.0)));
    }

    Rng rng(8);
    for (int t = 0; t < 20; ++t) {
        const int i = t % 4;
        const Vector x = random_vector(f->dimension(), rng, 0.5);
        const Vector g = f->gradient(i, x);
        CHECK((fd_gradient(*f, i, x, 1e-5) - g).norm() <= 1e-5 * std::max(1.0, g.norm()));
    }

    SUBCASE("full batch is exact and minibatches are unbiased")
    {
        const Vector x = random_vector(f->dimension(), rng, 0.3);
        CHECK(f->stochastic_gradient(2, x, f->shard_size(2), rng) == f->gradient(2, x));
        CHECK(f->stochastic_gradient(2, x, 10 * f->shard_size(2), rng) == f->gradient(2, x));
        const Vector g = f->gradient(2, x);
        const int N = 10000;
        Vector mean = Vector::Zero(g.size());
        Vector sq = Vector::Zero(g.size());
        for (int k = 0; k < N; ++k) {
            const Vector s = f->stochastic_gradient(2, x, 8, rng);
            mean += s;
            sq += s.cwiseProduct(s);
        }
        mean /= N;
        const Vector var = sq / N - mean.cwiseProduct(mean);
        for (Eigen::Index k = 0; k < g.size(); ++k) {
            CHECK(std::abs(mean(k) - g(k)) <= 4.0 * std::sqrt(var(k) / N) + 1e-12);
        }
        CHECK_THROWS_AS(f->stochastic_gradient(2, x, 0, rng), InvalidArgument);
    }

    SUBCASE("reference minimizer is stationary")
    {
        const Vector x_star = *f->minimizer();
        CHECK(f->global_gradient(x_star).norm() <= 1e-8);
    }
}

TEST_CASE("single class data: minimizer raises that class score")
{
    Dataset data;
    data.label_count = 2;
    data.features = Matrix::Ones(10, 1);
    data.labels.assign(10, 0);
    Partition part;
    part.shards = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
    LogisticObjective f(data, part, 1e-2);
    const Vector x = *f.minimizer();
    CHECK(x(0) > x(1));
    CHECK(f.loss(0, x) < std::log(2.0));

    Dataset one = data;
    one.label_count = 1;
    CHECK_THROWS_AS(LogisticObjective(one, part, 1e-2), InvalidArgument);
}

TEST_CASE("dataset CSV round trip")
{
    Rng rng(9);
    const Dataset d = make_synthetic_dataset(12, 3, 3, 1.0, rng);
    const auto path = std::filesystem::temp_directory_path() / "colrel_dataset.csv";
    save_dataset_csv(d, path);
    const Dataset back = load_dataset_csv(path);
    CHECK(back.labels == d.labels);
    CHECK(back.features == d.features);
    CHECK(back.label_count == 3);
}
