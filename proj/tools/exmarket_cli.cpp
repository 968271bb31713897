// Command-line front end: `exmarket <engine> --config file.json [overrides]`.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "exmarket/config.hpp"
#include "exmarket/experiments.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> replications;
  std::optional<unsigned> threads;
};

int run(const std::string& engine, const Overrides& o) {
  using namespace exmarket;
  json doc;
  try {
    std::ifstream in(o.config_path);
    if (!in) {
      std::cerr << "error: cannot read config " << o.config_path << '\n';
      return kExitValidation;
    }
    doc = json::parse(in);
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");
    if (doc.contains("engine") && doc.at("engine").get<std::string>() != engine)
      throw ValidationError("config engine '" + doc.at("engine").get<std::string>() +
                            "' does not match subcommand '" + engine + "'");
    doc["engine"] = engine;
    if (o.seed) doc["run"]["seed"] = *o.seed;
    if (o.replications) doc["run"]["replications"] = *o.replications;
    if (o.threads) doc["run"]["threads"] = *o.threads;
    if (o.out) doc["output"]["dir"] = *o.out;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed config: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  ExperimentConfig cfg;
  try {
    cfg = parse_config(doc);
    validate_experiment(cfg);
  } catch (const json::exception& e) {
    std::cerr << "error: invalid config: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    const RunOutcome outcome = run_experiment(cfg);
    std::cout << outcome.summary.dump(2) << '\n';
    return outcome.exit_code;
  } catch (const BudgetExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBudget;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Excitement-market simulator: micro engine, diffusion limit and diagnostics"};
  app.require_subcommand(1);

  Overrides o;
  std::string chosen;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "base seed (u64)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--replications", o.replications, "number of replications");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->callback([&chosen, name] { chosen = name; });
  };
  add("micro", "finite-n jump-Markov simulation");
  add("sde", "diffusion-limit Euler-Maruyama paths");
  add("coeffs", "finite-n coefficients against their limits");
  add("converge", "weak convergence of micro samples to the SDE");
  add("spikes", "jump and spike statistics of a long run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exmarket::kExitValidation;
  }
  return run(chosen, o);
}
