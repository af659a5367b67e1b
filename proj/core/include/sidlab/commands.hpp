#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace sidlab::cli {

// Input/usage problems exit with code 2; validation failures with 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json default_config(const std::string& command);

// Runs one subcommand with a fully resolved config, writing results and the
// config snapshot under `outdir`. Timestamps go only to <outdir>/run.log.
void run_command(const std::string& command, const nlohmann::json& cfg,
                 const std::string& outdir);

void cmd_train_primal(const nlohmann::json& cfg, const std::string& outdir);
void cmd_train_dual(const nlohmann::json& cfg, const std::string& outdir);
void cmd_attack(const nlohmann::json& cfg, const std::string& outdir);
void cmd_train_sid(const nlohmann::json& cfg, const std::string& outdir);
void cmd_eval_sid(const nlohmann::json& cfg, const std::string& outdir);
void cmd_verify_bounds(const nlohmann::json& cfg, const std::string& outdir);
void cmd_emit_features(const nlohmann::json& cfg, const std::string& outdir);

}  // namespace sidlab::cli
