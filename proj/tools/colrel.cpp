// Command-line front end: colrel optimize|simulate|verify|bound --config FILE.
#include "colrel/commands.hpp"
#include "colrel/weights.hpp"

#include <iostream>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

namespace {

void report_error(const std::string& kind, const std::string& message, const nlohmann::json& extra = {})
{
    nlohmann::json err{{"error", kind}, {"message", message}};
    if (!extra.is_null()) {
        err.update(extra);
    }
    std::cerr << err.dump() << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Collaborative relaying for federated learning over intermittent links"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;

    const std::pair<const char*, const char*> commands[] = {
        {"optimize", "compute relay weights for the configured topology"},
        {"simulate", "run federated training for each configured mode and seed"},
        {"verify", "check weight invariants and the covariance identities"},
        {"bound", "compare simulated error with the analytic convergence bound"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "experiment TOML file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides experiment.output)");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](const std::uint64_t& s) { seed = s; seed_set = true; }, "base seed (overrides experiment.seed)");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        colrel::ExperimentConfig config = colrel::parse_config(config_path);
        if (seed_set) {
            config.seed = seed;
        }
        colrel::CommandContext ctx;
        ctx.out_dir = out_dir;
        ctx.threads = colrel::threads_from_env();
        ctx.log = &std::cout;
        return colrel::run_command(command, config, ctx);
    } catch (const colrel::InfeasibleModel& e) {
        report_error("infeasible_model", e.what(), {{"unreachable_clients", e.clients()}});
    } catch (const colrel::InvalidModel& e) {
        report_error("invalid_model", e.what(), {{"issues", e.issues()}});
    } catch (const colrel::ConfigError& e) {
        report_error("config", e.what());
    } catch (const std::exception& e) {
        report_error("runtime", e.what());
    }
    return 2;
}
