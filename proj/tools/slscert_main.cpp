#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slscert/harness.hpp"

namespace {

int run_command(const std::string& name, const std::string& config_path, long long seed_override,
                const std::string& out_override) {
  sls::ExperimentConfig cfg = sls::ExperimentConfig::load_file(config_path);
  if (cfg.command != name)
    throw std::runtime_error("config.command is '" + cfg.command + "' but the '" + name +
                             "' subcommand was invoked");
  if (seed_override >= 0) cfg.seeds = {std::uint64_t(seed_override)};
  if (!out_override.empty()) cfg.output_dir = out_override;

  sls::RunResult rr = sls::run(cfg);
  const auto& violations = rr.report.at("violations");
  std::cout << name << ": wrote " << cfg.output_dir << "/report.json";
  if (violations.empty()) {
    std::cout << ", all checks passed\n";
  } else {
    std::cout << ", " << violations.size() << " violation"
              << (violations.size() == 1 ? "" : "s") << ":";
    for (const auto& v : violations) std::cout << ' ' << v.get<std::string>();
    std::cout << '\n';
  }
  return rr.exit_code;
}

int run_compare(const std::string& dir_a, const std::string& dir_b) {
  sls::DiffReport d = sls::compare_runs(dir_a, dir_b);
  nlohmann::json out;
  out["identical_bytes"] = d.identical_bytes;
  out["version_match"] = d.version_match;
  if (!d.note.empty()) out["note"] = d.note;
  nlohmann::json numeric = nlohmann::json::array();
  for (const auto& e : d.numeric)
    numeric.push_back({{"path", e.path}, {"a", e.a}, {"b", e.b}, {"severity", e.severity}});
  out["numeric"] = numeric;
  out["structural"] = d.structural;
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finite-sample certificates for penalized estimators and Laplace approximations"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pmle-cert", "fit a penalized model and certify its concentration and expansions"},
      {"laplace-cert", "Laplace report with TV bounds, checked against a grid oracle"},
      {"marginal-cert", "mixed Laplace marginal: separability, mixture, homogenization"},
      {"eio-demo", "error-in-operator fit, constants and marginal certificate"},
      {"gauss-suite", "randomized Gaussian comparison and anti-concentration sweep"},
      {"sobolev-rate", "sequence-model risk rate against the minimax exponent"}};

  std::string config_path, out_override;
  long long seed_override = -1;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "json experiment config")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed-override", seed_override, "replace the config seeds with this one");
    sub->add_option("--out", out_override, "override the config output_dir");
  }

  std::string dir_a, dir_b;
  CLI::App* cmp = app.add_subcommand("compare", "field-wise diff of two run directories");
  cmp->add_option("dir_a", dir_a, "first run directory")->required();
  cmp->add_option("dir_b", dir_b, "second run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const CLI::App* sub = app.get_subcommands().front();
    if (sub->get_name() == "compare") return run_compare(dir_a, dir_b);
    return run_command(sub->get_name(), config_path, seed_override, out_override);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
