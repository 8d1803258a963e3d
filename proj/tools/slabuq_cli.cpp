#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "slabuq/error.hpp"
#include "slabuq/studies.hpp"

namespace {

using namespace slabuq;
using json = nlohmann::ordered_json;

constexpr int kExitNotConverged = 2;
constexpr int kExitConfigError = 3;

json config_json(const StudyConfig& config) {
  json j = json::object();
  for (const auto& [key, value] : cli::to_key_values(config)) j[key] = value;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::filesystem::path prepare_out_dir(const StudyConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  write_text(config.out_dir / "config.txt", cli::format_config(config));
  return config.out_dir;
}

json fit_json(const RateFit& f) {
  return json{{"slope", f.slope}, {"intercept", f.intercept}, {"residual", f.residual}, {"slope_se", f.slope_se}};
}

// ---------------------------------------------------------------------------

int cmd_solve(const StudyConfig& config, std::optional<std::size_t> level_opt, bool mean_field,
              std::uint64_t sample, const std::string& dump_flux) {
  const std::size_t level = level_opt.value_or(config.max_level);
  const auto out_dir = prepare_out_dir(config);
  const auto sampler = make_sampler(config, level, {config.solver_epsilon});
  std::vector<double> z(sampler->dimension(level), 0.0);
  if (!mean_field)
    gaussian_vector(derive_seed(config.seed, static_cast<std::uint64_t>(StreamId::mc), level, sample), z);
  const DiscreteProblem problem = sampler->problem(level, z);
  const std::size_t k = choose_iterations(config.solver_epsilon, problem.xs.rho);
  const FluxSolution sol = hybrid_solve(problem, config.solver_epsilon);
  const double q = quantity_of_interest(sol);

  const std::filesystem::path flux_path = dump_flux.empty() ? out_dir / "flux.csv" : std::filesystem::path(dump_flux);
  auto keys = cli::to_key_values(config);
  keys["level"] = std::to_string(level);
  keys["sample"] = std::to_string(sample);
  keys["mean_field"] = mean_field ? "1" : "0";
  write_flux_csv(flux_path, problem.mesh, sol, config_preamble(keys));

  json j;
  j["command"] = "solve";
  j["level"] = level;
  j["M"] = problem.mesh.m_cells;
  j["N"] = problem.quad.n_half;
  j["d"] = z.size();
  j["sample"] = sample;
  j["mean_field"] = mean_field;
  j["Q_h"] = q;
  j["rho"] = problem.xs.rho;
  j["K"] = k;
  j["solver"] = std::string(to_string(sol.solver));
  j["iterations"] = sol.iterations;
  j["cost_units"] = sol.cost_units;
  j["wall_seconds"] = sol.wall_seconds;
  j["flux_csv"] = flux_path.string();
  j["config"] = config_json(config);
  write_json(out_dir / "solve.json", j);
  std::printf("Q_h = %.15g  rho = %.6f  K = %zu  solver = %s  cost_units = %.6g\n", q, problem.xs.rho, k,
              std::string(to_string(sol.solver)).c_str(), sol.cost_units);
  return 0;
}

json solver_study_json(const SolverStudyResult& r) {
  json j;
  j["solver_epsilon"] = r.solver_epsilon;
  j["samples"] = r.samples;
  j["gamma"] = r.gamma();
  j["hybrid_cost_fit"] = fit_json(r.hybrid_cost_fit);
  j["hybrid_wall_fit"] = fit_json(r.hybrid_wall_fit);
  j["direct_normalised_spread"] = r.direct_normalised_spread();
  auto& rows = j["levels"] = json::array();
  for (const auto& row : r.rows) {
    json x;
    x["level"] = row.level;
    x["M"] = row.m_cells;
    x["N"] = row.n_half;
    x["d"] = row.dimension;
    for (SolverChoice s : kSolverChoices) {
      const auto name = std::string(to_string(s));
      x[name + "_cost"] = row.mean_cost_units[static_cast<std::size_t>(s)];
      x[name + "_wall_s"] = row.mean_wall_seconds[static_cast<std::size_t>(s)];
    }
    x["mean_K"] = row.mean_iterations;
    x["hybrid_iterative_fraction"] = row.hybrid_iterative_fraction;
    rows.push_back(std::move(x));
  }
  return j;
}

void print_solver_study(const SolverStudyResult& r) {
  std::printf("%5s %6s %12s %12s %12s %8s %6s\n", "level", "M", "direct/M^3", "iter/M^3", "hybrid/M^3", "mean K",
              "iter%");
  for (const auto& row : r.rows)
    std::printf("%5zu %6zu %12.4g %12.4g %12.4g %8.2f %6.1f\n", row.level, row.m_cells,
                row.normalised_cost(SolverChoice::direct), row.normalised_cost(SolverChoice::iterative),
                row.normalised_cost(SolverChoice::hybrid), row.mean_iterations, 100.0 * row.hybrid_iterative_fraction);
  if (r.rows.size() >= 3) std::printf("hybrid cost growth gamma = %.3f (se %.3f)\n", r.gamma(), r.hybrid_cost_fit.slope_se);
}

int cmd_solver_study(const StudyConfig& config, std::optional<std::size_t> samples) {
  const auto out_dir = prepare_out_dir(config);
  const auto result = solver_study(config, config.max_level, samples.value_or(config.solver_samples));
  const auto keys = cli::to_key_values(config);
  write_solver_study_csv(out_dir / "solver-study.csv", result, keys);
  json j = solver_study_json(result);
  j["config"] = config_json(config);
  write_json(out_dir / "solver-study.json", j);
  print_solver_study(result);
  return 0;
}

void print_rates(const RatesResult& r, std::string_view field) {
  std::printf("%-12s %16s %16s %16s %16s\n", "field", "alpha", "beta", "gamma", "lambda");
  std::printf("%-12s %7.3f +- %5.3f %7.3f +- %5.3f %7.3f +- %5.3f %7.3f +- %5.3f\n", std::string(field).c_str(),
              r.alpha, 1.96 * r.alpha_se, r.beta, 1.96 * r.beta_se, r.gamma, 1.96 * r.gamma_se, r.lambda,
              1.96 * r.lambda_se);
}

json rates_json(const RatesResult& r) {
  json j;
  for (const auto& [name, value, se] : {std::tuple{"alpha", r.alpha, r.alpha_se}, std::tuple{"beta", r.beta, r.beta_se},
                                        std::tuple{"gamma", r.gamma, r.gamma_se},
                                        std::tuple{"lambda", r.lambda, r.lambda_se}})
    j["rates"][name] = json{{"value", value}, {"std_error", se}, {"ci95", {value - 1.96 * se, value + 1.96 * se}}};
  return j;
}

int cmd_rates(const StudyConfig& config, bool synthetic, double alpha, double beta, double gamma, double lambda) {
  const auto out_dir = prepare_out_dir(config);
  const auto keys = cli::to_key_values(config);
  if (synthetic) {
    const RatesResult r = synthetic_rates(alpha, beta, gamma, lambda);
    json j = rates_json(r);
    j["synthetic"] = json{{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}, {"lambda", lambda}};
    j["config"] = config_json(config);
    write_json(out_dir / "rates.json", j);
    write_rate_table_csv(out_dir / "rate-table.csv", r, keys);
    print_rates(r, "synthetic");
    const double worst = std::max({std::abs(r.alpha - alpha), std::abs(r.beta - beta), std::abs(r.gamma - gamma),
                                   std::abs(r.lambda - lambda)});
    std::printf("max deviation from injected rates: %.3g\n", worst);
    return 0;
  }
  const RatesResult r = rates_study(config);
  write_rates_csv(out_dir / "rates-levels.csv", *r.bias_variance, keys);
  write_convergence_csv(out_dir / "convergence.csv", *r.convergence, keys);
  write_solver_study_csv(out_dir / "solver-study.csv", *r.solver, keys);
  write_rate_table_csv(out_dir / "rate-table.csv", r, keys);
  json j = rates_json(r);
  j["bias_fit"] = fit_json(r.bias_variance->bias_fit);
  j["variance_fit"] = fit_json(r.bias_variance->variance_fit);
  j["mc_variance_fit"] = fit_json(r.convergence->mc_fit);
  j["qmc_variance_fit"] = fit_json(r.convergence->qmc_fit);
  j["solver_study"] = solver_study_json(*r.solver);
  j["config"] = config_json(config);
  write_json(out_dir / "rates.json", j);
  print_rates(r, to_string(config.field));
  return 0;
}

int cmd_compare(const StudyConfig& config) {
  if (config.max_level < 2) throw ParameterError("compare needs max_level >= 2");
  const auto out_dir = prepare_out_dir(config);
  const auto keys = cli::to_key_values(config);
  const BiasVarianceResult bias = bias_variance_study(config, std::max<std::size_t>(config.max_level, 3));
  write_rates_csv(out_dir / "rates-levels.csv", bias, keys);
  const CompareResult result = compare_study(config, bias);
  write_compare_csv(out_dir / "compare.csv", result, keys);
  json j;
  j["alpha"] = bias.alpha();
  auto& rows = j["levels"] = json::array();
  std::printf("%3s %11s %11s %14s %14s %14s %14s\n", "L", "tau", "epsilon", "mc", "qmc", "mlmc", "mlqmc");
  for (const auto& row : result.rows) {
    json x;
    x["L"] = row.level;
    x["tau"] = row.tau;
    x["epsilon"] = row.epsilon;
    for (std::size_t m = 0; m < kCompareMethods.size(); ++m) x[kCompareMethods[m]] = json::parse(row.reports[m].to_json());
    rows.push_back(std::move(x));
    std::printf("%3zu %11.4e %11.4e %14.6g %14.6g %14.6g %14.6g\n", row.level, row.tau, row.epsilon,
                row.reports[0].total_cost_units, row.reports[1].total_cost_units, row.reports[2].total_cost_units,
                row.reports[3].total_cost_units);
  }
  if (result.rows.size() >= 3) {
    write_slope_table_csv(out_dir / "slopes.csv", result, keys);
    for (std::size_t m = 0; m < kCompareMethods.size(); ++m) {
      j["eps_cost_rate"][kCompareMethods[m]] = result.rate(m);
      std::printf("eps-cost rate %-6s %.3f\n", kCompareMethods[m], result.rate(m));
    }
  }
  j["converged"] = result.all_converged();
  j["config"] = config_json(config);
  write_json(out_dir / "compare.json", j);
  return result.all_converged() ? 0 : kExitNotConverged;
}

int cmd_estimate(const StudyConfig& config, const std::string& method) {
  const auto out_dir = prepare_out_dir(config);
  const double tau = config.epsilon / std::numbers::sqrt2;
  EstimatorReport report =
      run_estimator(config, method, config.max_level, config.epsilon, {config.solver_safety * tau});
  report.config = cli::to_key_values(config);
  report.config["method"] = method;
  write_text(out_dir / ("estimate-" + method + ".json"), report.to_json() + "\n");
  report.write_level_csv(out_dir / ("estimate-" + method + "-levels.csv"));
  std::cout << report.to_text();
  return report.converged ? 0 : kExitNotConverged;
}

int cmd_schema_check(const std::vector<std::string>& files) {
  for (const auto& f : files) std::printf("%s: %s\n", f.c_str(), check_csv(f).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty quantification for mono-energetic slab transport with log-normal scattering"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::vector<std::string> assignments;
  std::optional<std::string> field, lattice_file, out_dir, kl_cache;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_level, workers;
  std::optional<double> epsilon;
  app.add_option("--config", config_file, "flat key = value config file");
  app.add_option("--set", assignments, "override one config key (key=value); repeatable");
  app.add_option("--field", field, "matern15, exponential or gaussian");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--lattice-file", lattice_file, "rank-1 lattice generating vector");
  app.add_option("--max-level", max_level, "finest level L (h_L = 2^-L / 4)");
  app.add_option("--epsilon", epsilon, "target root-mean-square error for estimate");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "worker threads");
  app.add_option("--kl-cache", kl_cache, "directory caching KL eigensystems");

  auto* solve = app.add_subcommand("solve", "solve one realisation and write the midpoint flux");
  std::optional<std::size_t> level;
  bool mean_field = false;
  std::uint64_t sample = 0;
  std::string dump_flux;
  solve->add_option("--level", level, "level to solve on (default: max level)");
  solve->add_flag("--mean-field", mean_field, "use z = 0 (sigma_S = 1)");
  solve->add_option("--sample", sample, "sample index in the MC stream");
  solve->add_option("--dump-flux", dump_flux, "flux CSV path (default OUT/flux.csv)");

  auto* solver_cmd = app.add_subcommand("solver-study", "mean cost of direct, iterative and hybrid solvers per level");
  std::optional<std::size_t> samples;
  solver_cmd->add_option("--samples", samples, "realisations per level");

  auto* rates = app.add_subcommand("rates", "estimate alpha, beta, gamma and lambda");
  bool synthetic = false;
  double s_alpha = 1.9, s_beta = 4.1, s_gamma = 2.2, s_lambda = 0.62;
  rates->add_flag("--synthetic", synthetic, "fit exact power-law data instead of running the model");
  rates->add_option("--alpha", s_alpha, "injected alpha for --synthetic");
  rates->add_option("--beta", s_beta, "injected beta for --synthetic");
  rates->add_option("--gamma", s_gamma, "injected gamma for --synthetic");
  rates->add_option("--lambda", s_lambda, "injected lambda for --synthetic");

  auto* compare = app.add_subcommand("compare", "eps-cost comparison of MC, QMC, MLMC and MLQMC");

  auto* estimate = app.add_subcommand("estimate", "run one estimator to tolerance epsilon");
  std::string method;
  estimate->add_option("--method", method, "mc, qmc, mlmc or mlqmc")
      ->required()
      ->check(CLI::IsMember({"mc", "qmc", "mlmc", "mlqmc"}));

  auto* schema = app.add_subcommand("schema-check", "validate CSV files written by this tool");
  std::vector<std::string> files;
  schema->add_option("files", files, "CSV files")->required();

  auto* show = app.add_subcommand("config", "print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }

  StudyConfig config;
  try {
    if (!config_file.empty()) cli::apply_key_values(config, cli::load_key_values(config_file));
    cli::KeyValues overrides;
    for (const auto& a : assignments) overrides.insert_or_assign(cli::parse_assignment(a).first, cli::parse_assignment(a).second);
    cli::apply_key_values(config, overrides);
    if (field) config.field = parse_field_kind(*field);
    if (seed) config.seed = *seed;
    if (lattice_file) config.lattice_file = *lattice_file;
    if (max_level) config.max_level = *max_level;
    if (epsilon) config.epsilon = *epsilon;
    if (out_dir) config.out_dir = *out_dir;
    if (workers) config.workers = *workers;
    if (kl_cache) config.kl_cache_dir = *kl_cache;
    config.validate();
  } catch (const Error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  }

  try {
    if (*solve) return cmd_solve(config, level, mean_field, sample, dump_flux);
    if (*solver_cmd) return cmd_solver_study(config, samples);
    if (*rates) return cmd_rates(config, synthetic, s_alpha, s_beta, s_gamma, s_lambda);
    if (*compare) return cmd_compare(config);
    if (*estimate) return cmd_estimate(config, method);
    if (*schema) return cmd_schema_check(files);
    if (*show) {
      std::cout << cli::format_config(config);
      return 0;
    }
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfigError;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
