#pragma once

#include "colrel/common.hpp"
#include "colrel/protocol.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace colrel {

class ConfigError : public Error
{
public:
    using Error::Error;
};

enum class TopologyKind { erdos_renyi, mmwave, threshold, random, file };

struct TopologyConfig
{
    TopologyKind kind = TopologyKind::erdos_renyi;
    int n = 10;
    std::vector<double> p_up;        // erdos_renyi; empty means all ones
    double p_c = 0.5;                // erdos_renyi
    bool reciprocal = true;          // erdos_renyi
    bool frozen = false;             // draw the inter-client graph once per run
    std::string positions;           // mmwave / threshold: CSV id,x,y
    std::array<double, 2> ps{0.0, 0.0};
    double prune_below = 0.5;        // mmwave
    bool mmwave_uplinks = false;     // threshold: keep intermittent client-PS links
    std::string model;               // file: model JSON
    std::uint64_t seed = 0;          // random models and frozen graphs

    bool operator==(const TopologyConfig&) const = default;
};

enum class ObjectiveKind { quadratic, logistic };

struct ObjectiveConfig
{
    ObjectiveKind kind = ObjectiveKind::quadratic;
    int d = 10;
    std::uint64_t seed = 0;
    // quadratic
    double mu = 1.0;
    double smoothness = 1.0;
    double sigma = 0.0;
    double spread = 0.0;             // centers ~ N(0, spread^2 I); 0 is homogeneous
    // logistic
    int samples_per_client = 300;
    int labels = 10;
    int skew = 3;
    double separation = 1.0;
    double l2 = 1e-4;

    bool operator==(const ObjectiveConfig&) const = default;
};

struct VerifyConfig
{
    long samples = 100000;           // Monte Carlo realizations
    double tolerance = 1e-9;         // residual and oracle tolerance

    bool operator==(const VerifyConfig&) const = default;
};

struct BoundConfig
{
    int replicas = 200;
    int window = 100;
    double initial_gap = 1.0;        // ||x_start - x*||^2

    bool operator==(const BoundConfig&) const = default;
};

struct ExperimentConfig
{
    TopologyConfig topology;
    ObjectiveConfig objective;
    Schedule schedule;
    std::vector<Mode> modes{Mode::colrel, Mode::blind, Mode::nonblind, Mode::perfect};
    std::uint64_t seed = 1;          // replica k uses seed + k
    int replicas = 1;
    int sweeps = 0;                  // optimizer sweeps per phase, 0 = 50 n
    bool skip_unreachable = false;
    std::string output = "out";
    VerifyConfig verify;
    BoundConfig bound;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Parses TOML text. Unknown keys, wrong types and out-of-range values raise
/// ConfigError naming the key. Relative file paths resolve against `base_dir`.
ExperimentConfig parse_config_string(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

/// TOML text that parses back to an equal config.
std::string to_toml(const ExperimentConfig& config);

/// Validates cross-field constraints (throws ConfigError).
void validate_config(const ExperimentConfig& config);

std::string to_string(TopologyKind kind);
std::string to_string(ObjectiveKind kind);

} // namespace colrel
