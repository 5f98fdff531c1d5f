#include "colrel/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace colrel {

std::string to_string(TopologyKind kind)
{
    switch (kind) {
    case TopologyKind::erdos_renyi: return "erdos_renyi";
    case TopologyKind::mmwave: return "mmwave";
    case TopologyKind::threshold: return "threshold";
    case TopologyKind::random: return "random";
    case TopologyKind::file: return "file";
    }
    return "unknown";
}

std::string to_string(ObjectiveKind kind)
{
    return kind == ObjectiveKind::quadratic ? "quadratic" : "logistic";
}

namespace {

/// Typed, strict access to one TOML table. Every key read is remembered so
/// that leftovers can be reported as unknown.
class Section
{
public:
    Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

    bool has(const std::string& key) const { return table_ && table_->contains(key); }

    void read(const std::string& key, double& out)
    {
        if (const auto* node = fetch(key)) {
            if (auto v = node->as_floating_point()) {
                out = v->get();
            } else if (auto i = node->as_integer()) {
                out = static_cast<double>(i->get());
            } else {
                fail(key, "expected a number");
            }
        }
    }

    void read(const std::string& key, int& out)
    {
        if (const auto* node = fetch(key)) {
            const auto v = node->as_integer();
            if (!v) {
                fail(key, "expected an integer");
            }
            if (v->get() < std::numeric_limits<int>::min() || v->get() > std::numeric_limits<int>::max()) {
                fail(key, "integer out of range");
            }
            out = static_cast<int>(v->get());
        }
    }

    void read(const std::string& key, long& out)
    {
        if (const auto* node = fetch(key)) {
            const auto v = node->as_integer();
            if (!v) {
                fail(key, "expected an integer");
            }
            out = static_cast<long>(v->get());
        }
    }

    void read(const std::string& key, std::uint64_t& out)
    {
        if (const auto* node = fetch(key)) {
            const auto v = node->as_integer();
            if (!v || v->get() < 0) {
                fail(key, "expected a nonnegative integer");
            }
            out = static_cast<std::uint64_t>(v->get());
        }
    }

    void read(const std::string& key, bool& out)
    {
        if (const auto* node = fetch(key)) {
            const auto v = node->as_boolean();
            if (!v) {
                fail(key, "expected a boolean");
            }
            out = v->get();
        }
    }

    void read(const std::string& key, std::string& out)
    {
        if (const auto* node = fetch(key)) {
            const auto v = node->as_string();
            if (!v) {
                fail(key, "expected a string");
            }
            out = v->get();
        }
    }

    void read(const std::string& key, std::vector<double>& out)
    {
        if (const auto* node = fetch(key)) {
            const auto arr = node->as_array();
            if (!arr) {
                fail(key, "expected an array of numbers");
            }
            out.clear();
            for (const auto& item : *arr) {
                if (auto v = item.as_floating_point()) {
                    out.push_back(v->get());
                } else if (auto i = item.as_integer()) {
                    out.push_back(static_cast<double>(i->get()));
                } else {
                    fail(key, "expected an array of numbers");
                }
            }
        }
    }

    void read(const std::string& key, std::vector<std::string>& out)
    {
        if (const auto* node = fetch(key)) {
            const auto arr = node->as_array();
            if (!arr) {
                fail(key, "expected an array of strings");
            }
            out.clear();
            for (const auto& item : *arr) {
                const auto v = item.as_string();
                if (!v) {
                    fail(key, "expected an array of strings");
                }
                out.push_back(v->get());
            }
        }
    }

    void finish() const
    {
        if (!table_) {
            return;
        }
        for (const auto& [key, node] : *table_) {
            const std::string k(key.str());
            if (!seen_.contains(k)) {
                throw ConfigError("unknown key '" + qualified(k) + "'");
            }
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        throw ConfigError(qualified(key) + ": " + what);
    }

    std::string qualified(const std::string& key) const { return name_ + "." + key; }

private:
    const toml::node* fetch(const std::string& key)
    {
        seen_.insert(key);
        return table_ ? table_->get(key) : nullptr;
    }

    const toml::table* table_;
    std::string name_;
    std::set<std::string> seen_;
};

void check_probability(const std::string& key, double v)
{
    if (!(std::isfinite(v) && v >= 0.0 && v <= 1.0)) {
        std::ostringstream msg;
        msg << key << " = " << v << " out of range [0, 1]";
        throw ConfigError(msg.str());
    }
}

void check_positive(const std::string& key, double v)
{
    if (!(std::isfinite(v) && v > 0.0)) {
        std::ostringstream msg;
        msg << key << " = " << v << " must be > 0";
        throw ConfigError(msg.str());
    }
}

void check_at_least(const std::string& key, long v, long lo)
{
    if (v < lo) {
        throw ConfigError(key + " = " + std::to_string(v) + " must be >= " + std::to_string(lo));
    }
}

std::string resolve(const std::string& path, const std::filesystem::path& base_dir)
{
    if (path.empty() || base_dir.empty()) {
        return path;
    }
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (base_dir / p).lexically_normal().string();
}

TopologyKind topology_kind(const Section& s, const std::string& name)
{
    for (auto k : {TopologyKind::erdos_renyi, TopologyKind::mmwave, TopologyKind::threshold, TopologyKind::random,
                   TopologyKind::file}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    s.fail("kind", "unknown topology kind '" + name + "'");
}

} // namespace

void validate_config(const ExperimentConfig& c)
{
    const auto& t = c.topology;
    check_at_least("topology.n", t.n, 1);
    check_probability("topology.p_c", t.p_c);
    check_probability("topology.prune_below", t.prune_below);
    for (double p : t.p_up) {
        check_probability("topology.p_up", p);
    }
    if (t.kind == TopologyKind::erdos_renyi && !t.p_up.empty() && static_cast<int>(t.p_up.size()) != t.n) {
        throw ConfigError("topology.p_up has " + std::to_string(t.p_up.size()) + " entries, expected topology.n = " +
                          std::to_string(t.n));
    }
    if ((t.kind == TopologyKind::mmwave || t.kind == TopologyKind::threshold) && t.positions.empty()) {
        throw ConfigError("topology.positions is required for kind '" + to_string(t.kind) + "'");
    }
    if (t.kind == TopologyKind::file && t.model.empty()) {
        throw ConfigError("topology.model is required for kind 'file'");
    }
    for (const auto* path : {&t.positions, &t.model}) {
        if (!path->empty() && !std::filesystem::exists(*path)) {
            throw ConfigError("referenced file does not exist: " + *path);
        }
    }

    const auto& o = c.objective;
    check_at_least("objective.d", o.d, 1);
    if (o.kind == ObjectiveKind::quadratic) {
        check_positive("objective.mu", o.mu);
        check_positive("objective.smoothness", o.smoothness);
        if (o.smoothness < o.mu) {
            throw ConfigError("objective.smoothness must be >= objective.mu");
        }
    }
    if (!(o.sigma >= 0.0) || !(o.spread >= 0.0)) {
        throw ConfigError("objective.sigma and objective.spread must be >= 0");
    }
    check_at_least("objective.samples_per_client", o.samples_per_client, 1);
    check_at_least("objective.labels", o.labels, 2);
    check_at_least("objective.skew", o.skew, 0);
    check_positive("objective.l2", o.l2);
    check_positive("objective.separation", o.separation);

    const auto& s = c.schedule;
    check_at_least("schedule.rounds", s.rounds, 1);
    check_at_least("schedule.local_steps", s.local_steps, 1);
    check_at_least("schedule.batch", s.batch, 1);
    check_at_least("schedule.round_offset", s.round_offset, 0);
    check_positive("schedule.step", s.step);
    if (!(s.momentum >= 0.0 && s.momentum < 1.0)) {
        throw ConfigError("schedule.momentum must lie in [0, 1)");
    }
    if (s.rule == StepRule::theory && s.momentum != 0.0) {
        throw ConfigError("schedule.momentum must be 0 with step_rule = \"theory\"");
    }

    if (c.modes.empty()) {
        throw ConfigError("experiment.modes must list at least one mode");
    }
    check_at_least("experiment.replicas", c.replicas, 1);
    check_at_least("experiment.sweeps", c.sweeps, 0);
    check_at_least("verify.samples", c.verify.samples, 2);
    check_positive("verify.tolerance", c.verify.tolerance);
    check_at_least("bound.replicas", c.bound.replicas, 2);
    check_at_least("bound.window", c.bound.window, 1);
    if (!(c.bound.initial_gap >= 0.0)) {
        throw ConfigError("bound.initial_gap must be >= 0");
    }
}

ExperimentConfig parse_config_string(std::string_view text, const std::filesystem::path& base_dir)
{
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "TOML syntax error: " << e.description() << " (line " << e.source().begin.line << ")";
        throw ConfigError(msg.str());
    }
    static const std::set<std::string> sections{"topology", "objective", "schedule", "experiment", "verify", "bound"};
    for (const auto& [key, node] : root) {
        const std::string k(key.str());
        if (!sections.contains(k)) {
            throw ConfigError("unknown key '" + k + "'");
        }
        if (!node.is_table()) {
            throw ConfigError(k + ": expected a table");
        }
    }

    ExperimentConfig c;

    Section topo(root["topology"].as_table(), "topology");
    std::string kind = to_string(c.topology.kind);
    topo.read("kind", kind);
    c.topology.kind = topology_kind(topo, kind);
    topo.read("n", c.topology.n);
    topo.read("p_up", c.topology.p_up);
    topo.read("p_c", c.topology.p_c);
    topo.read("reciprocal", c.topology.reciprocal);
    topo.read("frozen", c.topology.frozen);
    topo.read("positions", c.topology.positions);
    std::vector<double> ps{c.topology.ps[0], c.topology.ps[1]};
    topo.read("ps", ps);
    if (ps.size() != 2) {
        topo.fail("ps", "expected [x, y]");
    }
    c.topology.ps = {ps[0], ps[1]};
    topo.read("prune_below", c.topology.prune_below);
    topo.read("mmwave_uplinks", c.topology.mmwave_uplinks);
    topo.read("model", c.topology.model);
    topo.read("seed", c.topology.seed);
    topo.finish();
    c.topology.positions = resolve(c.topology.positions, base_dir);
    c.topology.model = resolve(c.topology.model, base_dir);

    Section obj(root["objective"].as_table(), "objective");
    std::string okind = to_string(c.objective.kind);
    obj.read("kind", okind);
    if (okind == "quadratic") {
        c.objective.kind = ObjectiveKind::quadratic;
    } else if (okind == "logistic") {
        c.objective.kind = ObjectiveKind::logistic;
    } else {
        obj.fail("kind", "unknown objective kind '" + okind + "'");
    }
    obj.read("d", c.objective.d);
    obj.read("seed", c.objective.seed);
    obj.read("mu", c.objective.mu);
    obj.read("smoothness", c.objective.smoothness);
    obj.read("sigma", c.objective.sigma);
    obj.read("spread", c.objective.spread);
    obj.read("samples_per_client", c.objective.samples_per_client);
    obj.read("labels", c.objective.labels);
    obj.read("skew", c.objective.skew);
    obj.read("separation", c.objective.separation);
    obj.read("l2", c.objective.l2);
    obj.finish();

    Section sched(root["schedule"].as_table(), "schedule");
    sched.read("rounds", c.schedule.rounds);
    sched.read("local_steps", c.schedule.local_steps);
    std::string rule = "constant";
    sched.read("step_rule", rule);
    if (rule == "constant") {
        c.schedule.rule = StepRule::constant;
    } else if (rule == "theory") {
        c.schedule.rule = StepRule::theory;
        c.schedule.momentum = 0.0;
    } else {
        sched.fail("step_rule", "expected \"constant\" or \"theory\"");
    }
    sched.read("step", c.schedule.step);
    sched.read("round_offset", c.schedule.round_offset);
    sched.read("momentum", c.schedule.momentum);
    sched.read("batch", c.schedule.batch);
    sched.finish();

    Section exp(root["experiment"].as_table(), "experiment");
    if (exp.has("modes")) {
        std::vector<std::string> names;
        exp.read("modes", names);
        c.modes.clear();
        for (const auto& name : names) {
            try {
                c.modes.push_back(mode_from_string(name));
            } catch (const InvalidArgument& e) {
                exp.fail("modes", e.what());
            }
        }
    }
    exp.read("seed", c.seed);
    exp.read("replicas", c.replicas);
    exp.read("sweeps", c.sweeps);
    exp.read("skip_unreachable", c.skip_unreachable);
    exp.read("output", c.output);
    exp.finish();

    Section ver(root["verify"].as_table(), "verify");
    ver.read("samples", c.verify.samples);
    ver.read("tolerance", c.verify.tolerance);
    ver.finish();

    Section bnd(root["bound"].as_table(), "bound");
    bnd.read("replicas", c.bound.replicas);
    bnd.read("window", c.bound.window);
    bnd.read("initial_gap", c.bound.initial_gap);
    bnd.finish();

    validate_config(c);
    return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_string(buf.str(), path.parent_path());
}

std::string to_toml(const ExperimentConfig& c)
{
    auto doubles = [](const auto& values) {
        toml::array arr;
        for (double v : values) {
            arr.push_back(v);
        }
        return arr;
    };
    auto seed = [](std::uint64_t v) { return static_cast<std::int64_t>(v); };

    const auto& t = c.topology;
    toml::table topo{
        {"kind", to_string(t.kind)},     {"n", t.n},
        {"p_up", doubles(t.p_up)},       {"p_c", t.p_c},
        {"reciprocal", t.reciprocal},    {"frozen", t.frozen},
        {"positions", t.positions},      {"ps", doubles(t.ps)},
        {"prune_below", t.prune_below},  {"model", t.model},
        {"mmwave_uplinks", t.mmwave_uplinks},
        {"seed", seed(t.seed)},
    };
    const auto& o = c.objective;
    toml::table obj{
        {"kind", to_string(o.kind)},
        {"d", o.d},
        {"seed", seed(o.seed)},
        {"mu", o.mu},
        {"smoothness", o.smoothness},
        {"sigma", o.sigma},
        {"spread", o.spread},
        {"samples_per_client", o.samples_per_client},
        {"labels", o.labels},
        {"skew", o.skew},
        {"separation", o.separation},
        {"l2", o.l2},
    };
    const auto& s = c.schedule;
    toml::table sched{
        {"rounds", s.rounds},
        {"local_steps", s.local_steps},
        {"step_rule", s.rule == StepRule::theory ? "theory" : "constant"},
        {"step", s.step},
        {"round_offset", s.round_offset},
        {"momentum", s.momentum},
        {"batch", s.batch},
    };
    toml::array modes;
    for (Mode m : c.modes) {
        modes.push_back(to_string(m));
    }
    toml::table exp{
        {"modes", modes},
        {"seed", seed(c.seed)},
        {"replicas", c.replicas},
        {"sweeps", c.sweeps},
        {"skip_unreachable", c.skip_unreachable},
        {"output", c.output},
    };
    toml::table ver{{"samples", static_cast<std::int64_t>(c.verify.samples)}, {"tolerance", c.verify.tolerance}};
    toml::table bnd{{"replicas", c.bound.replicas}, {"window", c.bound.window}, {"initial_gap", c.bound.initial_gap}};

    toml::table root{{"topology", topo}, {"objective", obj}, {"schedule", sched},
                     {"experiment", exp}, {"verify", ver},  {"bound", bnd}};
    std::ostringstream out;
    out << root << '\n';
    return out.str();
}

} // namespace colrel
