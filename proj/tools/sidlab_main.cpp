// sidlab: train the primal/dual classifier pair, craft adversarial examples,
// train and evaluate the sensitivity-inconsistency detector, and verify the
// tail bounds against Monte Carlo estimates. All results are CSV files.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sidlab/commands.hpp"

using nlohmann::json;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in)
    throw sidlab::cli::UsageError("config file not found: " + path);
  json cfg;
  try {
    in >> cfg;
  } catch (const std::exception& e) {
    throw sidlab::cli::UsageError("config parse error in " + path + ": " +
                                  e.what());
  }
  return cfg;
}

// --set a.b.c=VALUE overrides; VALUE parsed as JSON, falling back to string.
void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw sidlab::cli::UsageError("override must look like key.path=value: " + kv);
  std::string pointer = "/" + kv.substr(0, eq);
  for (auto& c : pointer)
    if (c == '.') c = '/';
  const std::string raw = kv.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (...) {
    value = raw;
  }
  cfg[json::json_pointer(pointer)] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sensitivity-inconsistency detection laboratory"};
  app.require_subcommand(1);

  const std::vector<std::string> commands = {
      "train-primal", "train-dual", "attack",        "train-sid",
      "eval-sid",     "verify-bounds", "emit-features"};

  struct Args {
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    long long seed = -1;
  };
  std::map<std::string, Args> args;
  for (const std::string& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    Args& a = args[name];
    sub->add_option("--config", a.config, "JSON config file");
    sub->add_option("--out", a.out, "output directory")->required();
    sub->add_option("--seed", a.seed, "override the config seed");
    sub->add_option("--set", a.sets,
                    "config override key.path=value (repeatable)");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().at(0)->get_name();
  const Args& a = args[name];
  try {
    json cfg = load_config(a.config);
    for (const std::string& kv : a.sets) apply_override(cfg, kv);
    if (a.seed >= 0) cfg["seed"] = static_cast<std::uint64_t>(a.seed);
    sidlab::cli::run_command(name, cfg, a.out);
  } catch (const sidlab::cli::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
