#pragma once

#include "colrel/common.hpp"
#include "colrel/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace colrel {

/// Link statistics of the network.
///
/// `uplink(i)` is the probability that client i reaches the PS in a round.
/// `link(i, j)` is the probability that a transmission from client i reaches
/// client j; the diagonal is 1. `reciprocity(i, j)` is E[tau_ij * tau_ji],
/// symmetric with unit diagonal.
struct ConnectivityModel
{
    Vector uplink;
    Matrix link;
    Matrix reciprocity;

    int size() const { return static_cast<int>(uplink.size()); }
};

/// Every violated invariant, one message each. Empty means the model is valid.
std::vector<std::string> validate_model(const ConnectivityModel& model);

class InvalidModel : public Error
{
public:
    explicit InvalidModel(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const { return issues_; }

private:
    std::vector<std::string> issues_;
};

/// Throws InvalidModel listing all issues when the model is not valid.
void require_valid(const ConnectivityModel& model);

/// Erdos-Renyi collaboration graph: every ordered pair is linked with
/// probability `p_c`. With `reciprocal` both directions fail together
/// (E = p_c), otherwise they are independent (E = p_c^2).
ConnectivityModel build_erdos_renyi(int n, double p_c, const Vector& p_up, bool reciprocal);

struct RandomModelOptions
{
    double min_uplink = 0.1;    // uplinks uniform on [min_uplink, 1]
    double min_link = 0.1;      // present links uniform on [min_link, 1]
    double link_density = 0.7;  // chance that an ordered pair has a link at all
    bool deterministic = false; // links in {0, 1}
};

/// Random valid model. Reciprocity is uniform between the independent and the
/// fully reciprocal value for each pair.
ConnectivityModel build_random(int n, const RandomModelOptions& options, Rng& rng);

struct Point
{
    double x = 0.0;
    double y = 0.0;
};

double distance(Point a, Point b);

/// min(1, exp(-d/30 + 5.2)) for a link of length d meters.
double mmwave_probability(double meters);

/// Distance at which the mmWave link probability drops to 0.99.
double threshold_distance();

/// Intermittent mmWave topology. Inter-client links below `prune_below` are
/// dropped; surviving links are fully reciprocal (E_ij = p_ij).
ConnectivityModel build_mmwave(std::span<const Point> clients, Point ps, double prune_below);

/// Deterministic topology: a link exists iff its length is at most
/// threshold_distance(). With `mmwave_uplinks` the client-PS links keep their
/// intermittent mmWave probabilities and only client-client links are
/// thresholded.
ConnectivityModel build_threshold(std::span<const Point> clients, Point ps, bool mmwave_uplinks = false);

/// One round of link outcomes. `uplink(i)` is tau_i, `link(i, j)` is tau_ij.
class LinkRealization
{
public:
    LinkRealization() = default;
    explicit LinkRealization(int n);

    int size() const { return n_; }
    bool uplink(int i) const { return up_[static_cast<std::size_t>(i)] != 0; }
    bool link(int i, int j) const { return links_[index(i, j)] != 0; }

    void set_uplink(int i, bool on) { up_[static_cast<std::size_t>(i)] = on ? 1 : 0; }
    void set_link(int i, int j, bool on) { links_[index(i, j)] = on ? 1 : 0; }

    int uplink_successes() const;

private:
    std::size_t index(int i, int j) const
    {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j);
    }

    int n_ = 0;
    std::vector<std::uint8_t> up_;
    std::vector<std::uint8_t> links_;
};

/// Draws uplinks from `uplink_rng` (one uniform per client) and each unordered
/// pair {i, j} from `pair_rng` (one uniform per pair) through the 2x2 joint
/// table with marginals p_ij, p_ji and cross moment E_ij. Draw counts do not
/// depend on the probabilities, so models sharing uplink probabilities share
/// uplink outcomes under the same stream.
LinkRealization sample_realization(const ConnectivityModel& model, Rng& uplink_rng, Rng& pair_rng);

/// Samples one realization of the inter-client links and returns a model whose
/// inter-client links are fixed to it (frozen-graph mode).
ConnectivityModel freeze_links(const ConnectivityModel& model, Rng& rng);

// Serialization: {"n":..., "p":[...], "P":[[...]], "E":[[...]]}.
nlohmann::json to_json(const ConnectivityModel& model);
ConnectivityModel model_from_json(const nlohmann::json& j);
ConnectivityModel load_model(const std::filesystem::path& path);
void save_model(const ConnectivityModel& model, const std::filesystem::path& path);

/// Reads "id,x,y" rows (optional header). Rows are ordered by id.
std::vector<Point> load_positions(const std::filesystem::path& path);

} // namespace colrel
