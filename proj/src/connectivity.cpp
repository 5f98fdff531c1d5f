#include "colrel/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace colrel {

namespace {

constexpr double kTol = 1e-12;

bool is_probability(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

std::string pair_name(const char* sym, int i, int j)
{
    std::ostringstream os;
    os << sym << "(" << i << "," << j << ")";
    return os.str();
}

} // namespace

InvalidModel::InvalidModel(std::vector<std::string> issues)
    : Error([&] {
          std::string msg = "invalid connectivity model:";
          for (const auto& s : issues) {
              msg += "\n  - " + s;
          }
          return msg;
      }()),
      issues_(std::move(issues))
{
}

std::vector<std::string> validate_model(const ConnectivityModel& model)
{
    std::vector<std::string> issues;
    const auto n = model.uplink.size();
    if (model.link.rows() != n || model.link.cols() != n) {
        issues.push_back("P must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    if (model.reciprocity.rows() != n || model.reciprocity.cols() != n) {
        issues.push_back("E must be " + std::to_string(n) + "x" + std::to_string(n));
    }
    if (!issues.empty()) {
        return issues;
    }

    for (int i = 0; i < n; ++i) {
        if (!is_probability(model.uplink(i))) {
            issues.push_back("p(" + std::to_string(i) + ") out of range [0,1]");
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double pij = model.link(i, j);
            if (!is_probability(pij)) {
                issues.push_back(pair_name("P", i, j) + " out of range [0,1]");
            }
            if (!std::isfinite(model.reciprocity(i, j))) {
                issues.push_back(pair_name("E", i, j) + " is not finite");
            }
        }
        if (model.link(i, i) != 1.0) {
            issues.push_back("p_ii must be 1 (" + pair_name("P", i, i) + " = " +
                             std::to_string(model.link(i, i)) + ")");
        }
        if (model.reciprocity(i, i) != 1.0) {
            issues.push_back("E_ii must be 1 (" + pair_name("E", i, i) + ")");
        }
    }

    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double eij = model.reciprocity(i, j);
            if (std::abs(eij - model.reciprocity(j, i)) > kTol) {
                issues.push_back("E not symmetric at " + pair_name("E", i, j));
                continue;
            }
            const double pij = model.link(i, j);
            const double pji = model.link(j, i);
            const double upper = std::min(pij, pji);
            const double lower = std::max(0.0, pij + pji - 1.0);
            std::ostringstream os;
            if (eij > upper + kTol) {
                os << pair_name("E", i, j) << " = " << eij << ": E exceeds min(p_ij,p_ji) = " << upper;
            } else if (eij < lower - kTol) {
                os << pair_name("E", i, j) << " = " << eij
                   << ": E below max(0, p_ij+p_ji-1) = " << lower;
            } else if (eij < pij * pji - kTol) {
                // Negative reciprocity correlation breaks the convex relaxation.
                os << pair_name("E", i, j) << " = " << eij << ": E below p_ij*p_ji = " << pij * pji;
            }
            if (!os.str().empty()) {
                issues.push_back(os.str());
            }
        }
    }
    return issues;
}

void require_valid(const ConnectivityModel& model)
{
    auto issues = validate_model(model);
    if (!issues.empty()) {
        throw InvalidModel(std::move(issues));
    }
}

ConnectivityModel build_erdos_renyi(int n, double p_c, const Vector& p_up, bool reciprocal)
{
    if (n <= 0) {
        throw InvalidArgument("erdos_renyi: client count must be positive");
    }
    if (!is_probability(p_c)) {
        throw InvalidArgument("erdos_renyi: p_c out of range [0,1]");
    }
    if (p_up.size() != n) {
        throw InvalidArgument("erdos_renyi: uplink vector must have n entries");
    }
    for (int i = 0; i < n; ++i) {
        if (!is_probability(p_up(i))) {
            throw InvalidArgument("erdos_renyi: uplink probability out of range [0,1]");
        }
    }

    ConnectivityModel m;
    m.uplink = p_up;
    m.link = Matrix::Constant(n, n, p_c);
    m.link.diagonal().setOnes();
    m.reciprocity = Matrix::Constant(n, n, reciprocal ? p_c : p_c * p_c);
    m.reciprocity.diagonal().setOnes();
    return m;
}

ConnectivityModel build_random(int n, const RandomModelOptions& options, Rng& rng)
{
    if (n <= 0) {
        throw InvalidArgument("build_random: client count must be positive");
    }
    if (!is_probability(options.min_uplink) || !is_probability(options.min_link) ||
        !is_probability(options.link_density)) {
        throw InvalidArgument("build_random: option out of range [0,1]");
    }
    ConnectivityModel m;
    m.uplink.resize(n);
    m.link = Matrix::Identity(n, n);
    m.reciprocity = Matrix::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        m.uplink(i) = options.min_uplink + (1.0 - options.min_uplink) * rng.uniform();
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const bool present = rng.uniform() < options.link_density;
            const double value = options.min_link + (1.0 - options.min_link) * rng.uniform();
            m.link(i, j) = present ? (options.deterministic ? 1.0 : value) : 0.0;
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double lo = m.link(i, j) * m.link(j, i);
            const double hi = std::min(m.link(i, j), m.link(j, i));
            const double e = lo + (hi - lo) * rng.uniform();
            m.reciprocity(i, j) = e;
            m.reciprocity(j, i) = e;
        }
    }
    return m;
}

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double mmwave_probability(double meters) { return std::min(1.0, std::exp(-meters / 30.0 + 5.2)); }

double threshold_distance() { return 30.0 * (5.2 - std::log(0.99)); }

namespace {

void check_positions(std::span<const Point> clients, Point ps)
{
    if (clients.empty()) {
        throw InvalidArgument("topology needs at least one client");
    }
    auto finite = [](Point p) { return std::isfinite(p.x) && std::isfinite(p.y); };
    if (!finite(ps) || !std::all_of(clients.begin(), clients.end(), finite)) {
        throw InvalidArgument("positions must be finite");
    }
}

} // namespace

ConnectivityModel build_mmwave(std::span<const Point> clients, Point ps, double prune_below)
{
    check_positions(clients, ps);
    if (!is_probability(prune_below)) {
        throw InvalidArgument("mmwave: prune_below out of range [0,1]");
    }
    const int n = static_cast<int>(clients.size());
    ConnectivityModel m;
    m.uplink.resize(n);
    m.link = Matrix::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        m.uplink(i) = mmwave_probability(distance(clients[i], ps));
        for (int j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const double p = mmwave_probability(distance(clients[i], clients[j]));
            m.link(i, j) = p < prune_below ? 0.0 : p;
        }
    }
    m.reciprocity = m.link;
    require_valid(m);
    return m;
}

ConnectivityModel build_threshold(std::span<const Point> clients, Point ps, bool mmwave_uplinks)
{
    check_positions(clients, ps);
    const double d_th = threshold_distance();
    const int n = static_cast<int>(clients.size());
    ConnectivityModel m;
    m.uplink.resize(n);
    m.link = Matrix::Identity(n, n);
    for (int i = 0; i < n; ++i) {
        const double d = distance(clients[i], ps);
        m.uplink(i) = mmwave_uplinks ? mmwave_probability(d) : (d <= d_th ? 1.0 : 0.0);
        for (int j = 0; j < n; ++j) {
            if (i != j) {
                m.link(i, j) = distance(clients[i], clients[j]) <= d_th ? 1.0 : 0.0;
            }
        }
    }
    m.reciprocity = m.link.cwiseProduct(m.link.transpose());
    m.reciprocity.diagonal().setOnes();
    return m;
}

LinkRealization::LinkRealization(int n)
    : n_(n),
      up_(static_cast<std::size_t>(n), 0),
      links_(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0)
{
    for (int i = 0; i < n; ++i) {
        set_link(i, i, true);
    }
}

int LinkRealization::uplink_successes() const
{
    return static_cast<int>(std::count(up_.begin(), up_.end(), std::uint8_t{1}));
}

LinkRealization sample_realization(const ConnectivityModel& model, Rng& uplink_rng, Rng& pair_rng)
{
    const int n = model.size();
    LinkRealization real(n);
    for (int i = 0; i < n; ++i) {
        real.set_uplink(i, uplink_rng.uniform() < model.uplink(i));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double pij = model.link(i, j);
            const double pji = model.link(j, i);
            const double both = model.reciprocity(i, j);
            const double only_ij = pij - both;
            const double only_ji = pji - both;
            if (both < -kTol || only_ij < -kTol || only_ji < -kTol || 1.0 - pij - pji + both < -kTol) {
                throw InvalidModel({"negative joint-table cell for pair (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")"});
            }
            const double u = pair_rng.uniform();
            bool ij = false;
            bool ji = false;
            if (u < both) {
                ij = ji = true;
            } else if (u < both + only_ij) {
                ij = true;
            } else if (u < both + only_ij + only_ji) {
                ji = true;
            }
            real.set_link(i, j, ij);
            real.set_link(j, i, ji);
        }
    }
    return real;
}

ConnectivityModel freeze_links(const ConnectivityModel& model, Rng& rng)
{
    const int n = model.size();
    Rng unused(0);
    LinkRealization real = sample_realization(model, unused, rng);
    ConnectivityModel frozen = model;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            frozen.link(i, j) = real.link(i, j) ? 1.0 : 0.0;
        }
    }
    frozen.reciprocity = frozen.link.cwiseProduct(frozen.link.transpose());
    frozen.reciprocity.diagonal().setOnes();
    return frozen;
}

nlohmann::json to_json(const ConnectivityModel& model)
{
    const int n = model.size();
    auto rows = [n](const Matrix& m) {
        nlohmann::json out = nlohmann::json::array();
        for (int i = 0; i < n; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int j = 0; j < n; ++j) {
                row.push_back(m(i, j));
            }
            out.push_back(std::move(row));
        }
        return out;
    };
    nlohmann::json p = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        p.push_back(model.uplink(i));
    }
    return {{"n", n}, {"p", p}, {"P", rows(model.link)}, {"E", rows(model.reciprocity)}};
}

ConnectivityModel model_from_json(const nlohmann::json& j)
{
    try {
        const int n = j.at("n").get<int>();
        if (n <= 0) {
            throw InvalidArgument("model: n must be positive");
        }
        auto vec = j.at("p").get<std::vector<double>>();
        auto p_rows = j.at("P").get<std::vector<std::vector<double>>>();
        auto e_rows = j.at("E").get<std::vector<std::vector<double>>>();
        auto square = [n](const std::vector<std::vector<double>>& rows, const char* name) {
            if (static_cast<int>(rows.size()) != n) {
                throw InvalidArgument(std::string("model: ") + name + " must have n rows");
            }
            Matrix m(n, n);
            for (int r = 0; r < n; ++r) {
                if (static_cast<int>(rows[r].size()) != n) {
                    throw InvalidArgument(std::string("model: ") + name + " must have n columns");
                }
                for (int c = 0; c < n; ++c) {
                    m(r, c) = rows[r][c];
                }
            }
            return m;
        };
        if (static_cast<int>(vec.size()) != n) {
            throw InvalidArgument("model: p must have n entries");
        }
        ConnectivityModel m;
        m.uplink = Eigen::Map<const Vector>(vec.data(), n);
        m.link = square(p_rows, "P");
        m.reciprocity = square(e_rows, "E");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("model: ") + e.what());
    }
}

ConnectivityModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open model file " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("model file " + path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

void save_model(const ConnectivityModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << to_json(model).dump(2) << '\n';
}

std::vector<Point> load_positions(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open positions file " + path.string());
    }
    std::map<long, Point> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::stringstream ss(line);
        std::string id_s, x_s, y_s;
        std::getline(ss, id_s, ',');
        std::getline(ss, x_s, ',');
        std::getline(ss, y_s, ',');
        try {
            std::size_t used = 0;
            const long id = std::stol(id_s, &used);
            rows[id] = Point{std::stod(x_s), std::stod(y_s)};
        } catch (const std::exception&) {
            if (lineno == 1) {
                continue; // header
            }
            throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": expected id,x,y");
        }
    }
    std::vector<Point> out;
    out.reserve(rows.size());
    for (const auto& [id, p] : rows) {
        out.push_back(p);
    }
    return out;
}

} // namespace colrel
