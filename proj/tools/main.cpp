#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>

#include "fair/cli.hpp"

namespace {

// FAIR_THREADS caps intra-round parallelism; 0 means hardware concurrency.
std::optional<unsigned> threads_from_env() {
  const char* raw = std::getenv("FAIR_THREADS");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto value = std::stoul(raw, &used);
    if (used == std::string(raw).size()) return static_cast<unsigned>(value);
  } catch (const std::exception&) {
  }
  std::cerr << "warning: ignoring malformed FAIR_THREADS='" << raw << "'\n";
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated averaging in random subspaces for collaborative filtering"};
  app.set_version_flag("--version", fair::version());
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Train a federated model from a JSON config");
  std::string config_path;
  run->add_option("--config", config_path, "Path to the run config")->required();

  auto* verify = app.add_subcommand("verify", "Run the dense-oracle verification suites");
  bool list_only = false;
  verify->add_flag("--list", list_only, "Print the suite names without running them");

  auto* quad = app.add_subcommand("quadratic", "Convergence bench on strongly convex quadratics");
  fair::QuadraticBenchParams params;
  std::string csv_path = "quadratic.csv";
  quad->add_option("--n", params.n, "Parameter dimension (<= 256)")->capture_default_str();
  quad->add_option("--m", params.m, "Subspace dimension")->capture_default_str();
  quad->add_option("--devices", params.num_devices, "Number of devices")->capture_default_str();
  quad->add_option("--rounds", params.rounds, "Rounds T")->capture_default_str();
  quad->add_option("--local-steps", params.local_steps, "Local steps per round")
      ->capture_default_str();
  quad->add_option("--seed", params.seed, "Seed")->capture_default_str();
  quad->add_option("--out", csv_path, "CSV output path")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    fair::RunOptions options;
    options.threads = threads_from_env();
    return fair::cmd_run(config_path, options, std::cout, std::cerr);
  }
  if (*verify) return fair::cmd_verify(list_only, {}, std::cout, std::cerr);
  return fair::cmd_quadratic(params, csv_path, std::cout, std::cerr);
}
