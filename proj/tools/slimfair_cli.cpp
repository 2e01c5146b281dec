#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slimfair/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (s.find_first_not_of(" \t\r", used) != std::string::npos) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Numeric rows of a small CSV. A non-numeric first row is a header.
std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw slimfair::ConfigError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    bool numeric = true;
    for (const auto& f : split_fields(line)) {
      auto v = parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw slimfair::ConfigError(path + ": non-numeric row '" + line + "'");
    }
    first = false;
    rows.push_back(std::move(row));
  }
  return rows;
}

int report_diagnostics(const std::vector<std::string>& diags) {
  for (const auto& d : diags) std::cerr << "config: " << d << '\n';
  return diags.empty() ? 0 : kExitConfig;
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  auto cfg = slimfair::load_config(path);
  if (seed) cfg.seed = *seed;
  if (out) cfg.output_dir = *out;
  if (int rc = report_diagnostics(slimfair::validate(cfg))) return rc;
  auto res = slimfair::run(cfg);
  std::cout << "wrote " << cfg.output_dir << " (" << res.allocation.size() << " clients";
  if (res.report && res.report->pearson) std::cout << ", pearson " << *res.report->pearson;
  std::cout << ")\n";
  if (res.feasibility_warning) std::cerr << "warning: lowest menu level over-rewards the weakest contributors\n";
  return 0;
}

int cmd_validate(const std::string& path) {
  auto cfg = slimfair::load_config(path);
  int rc = report_diagnostics(slimfair::validate(cfg));
  if (rc == 0) std::cout << "ok\n";
  return rc;
}

int cmd_allocate(const std::string& contrib_path, const std::string& menu_path, double epsilon,
                 std::uint64_t seed, std::size_t steps, const std::string& out) {
  slimfair::ExperimentConfig cfg;
  cfg.mode = slimfair::RunMode::AllocateOnly;
  cfg.epsilon = epsilon;
  cfg.seed = seed;
  cfg.anneal_steps = steps;
  // contributions: one value per row, last column; menu: accuracy or width,accuracy
  for (const auto& row : read_numeric_csv(contrib_path)) {
    if (row.empty()) continue;
    cfg.inline_contributions.push_back(row.back());
  }
  for (const auto& row : read_numeric_csv(menu_path)) {
    if (row.size() >= 2) {
      cfg.inline_menu_widths.push_back(row[0]);
      cfg.inline_menu.push_back(row[1]);
    } else if (row.size() == 1) {
      cfg.inline_menu.push_back(row[0]);
    }
  }
  if (!cfg.inline_menu_widths.empty() && cfg.inline_menu_widths.size() != cfg.inline_menu.size()) {
    throw slimfair::ConfigError(menu_path + ": mix of one- and two-column rows");
  }
  if (int rc = report_diagnostics(slimfair::validate(cfg))) return rc;
  auto res = slimfair::execute(cfg);
  if (res.feasibility_warning) std::cerr << "warning: lowest menu level over-rewards the weakest contributors\n";
  if (out.empty() || out == "-") {
    slimfair::write_allocation_csv(std::cout, res.allocation);
  } else {
    std::ofstream f(out);
    if (!f) throw slimfair::ConfigError("cannot write " + out);
    slimfair::write_allocation_csv(f, res.allocation);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slimmable-network federated reward simulator"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  auto* run = app.add_subcommand("run", "train, allocate and write a run directory");
  run->add_option("--config", config, "JSON config file")->required();
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--out", out_dir, "override the output directory");

  auto* val = app.add_subcommand("validate", "check a config without running it");
  val->add_option("--config", config, "JSON config file")->required();

  std::string contributions, menu, alloc_out;
  double epsilon = slimfair::kDefaultEpsilon;
  std::uint64_t alloc_seed = 0;
  std::size_t steps = 0;
  auto* alloc = app.add_subcommand("allocate", "allocate a menu of accuracies to contributions");
  alloc->add_option("--contributions", contributions, "CSV of contributions")->required();
  alloc->add_option("--menu", menu, "CSV of menu accuracies (optionally width,accuracy)")->required();
  alloc->add_option("--epsilon", epsilon, "variance regularizer");
  alloc->add_option("--seed", alloc_seed, "annealer seed");
  alloc->add_option("--steps", steps, "annealer budget (0 = automatic)");
  alloc->add_option("--out", alloc_out, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, seed, out_dir);
    if (*val) return cmd_validate(config);
    if (*alloc) return cmd_allocate(contributions, menu, epsilon, alloc_seed, steps, alloc_out);
  } catch (const slimfair::FeasibilityError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const slimfair::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const slimfair::SpecError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const slimfair::ArgumentError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
