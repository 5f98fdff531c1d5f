#pragma once

#include "colrel/config.hpp"
#include "colrel/connectivity.hpp"
#include "colrel/objective.hpp"
#include "colrel/protocol.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>

namespace colrel {

/// Model described by the [topology] table (inter-client links not frozen).
ConnectivityModel build_model(const ExperimentConfig& config);

/// Objective described by the [objective] table for `clients` clients.
std::shared_ptr<Objective> build_objective(const ExperimentConfig& config, int clients);

/// CSV text: header round,dist_sq,loss,uplink_successes,seed and one row per
/// record, reals at 17 significant digits.
std::string format_metrics(const RoundTrace& trace);
void emit_metrics(const RoundTrace& trace, const std::filesystem::path& path);

/// FNV-1a hash of the canonical TOML form.
std::uint64_t config_hash(const ExperimentConfig& config);

nlohmann::json make_manifest(const ExperimentConfig& config, std::string_view command);

struct CommandContext
{
    std::filesystem::path out_dir;  // overrides experiment.output when set
    int threads = 0;                // replica workers, 0 = hardware
    std::ostream* log = nullptr;
};

/// Runs optimize, simulate, verify or bound. Returns the process exit status
/// (0 on success, 1 when a verification check fails). Errors propagate as
/// exceptions.
int run_command(std::string_view command, const ExperimentConfig& config, const CommandContext& context);

/// Thread cap from COLREL_THREADS (0 when unset or invalid).
int threads_from_env();

} // namespace colrel
