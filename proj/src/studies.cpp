#include "slabuq/studies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "slabuq/error.hpp"

namespace slabuq {

namespace {

// Tags separating the sample streams of the individual studies.
enum class StudyTag : std::uint64_t { solver = 1, rates = 2, mc_convergence = 3, qmc_convergence = 4 };

std::uint64_t study_seed(std::uint64_t master, StudyTag tag, std::uint64_t sub = 0) {
  return derive_seed(master, static_cast<std::uint64_t>(StreamId::study), static_cast<std::uint64_t>(tag), sub);
}

std::vector<double> study_z(std::uint64_t seed, std::uint64_t stream, std::size_t level, std::uint64_t n,
                            std::size_t d) {
  std::vector<double> z(d);
  gaussian_vector(derive_seed(seed, stream, level, n), z);
  return z;
}

std::ofstream open_csv(const std::filesystem::path& path, const std::map<std::string, std::string>& config,
                       const char* header) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_preamble(config) << header << '\n' << std::setprecision(17);
  return out;
}

void close_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void fit_solver_costs(SolverStudyResult& r) {
  std::vector<double> h, cost, wall;
  for (const auto& row : r.rows) {
    h.push_back(1.0 / static_cast<double>(row.m_cells));
    cost.push_back(row.mean_cost_units[2]);
    wall.push_back(row.mean_wall_seconds[2]);
  }
  if (h.size() < 3) return;
  r.hybrid_cost_fit = fit_rate(h, cost);
  if (std::all_of(wall.begin(), wall.end(), [](double w) { return w > 0.0; })) r.hybrid_wall_fit = fit_rate(h, wall);
}

void fit_bias_variance(BiasVarianceResult& r) {
  std::vector<double> h, bias, var;
  for (const auto& row : r.rows) {
    if (row.level == 0) continue;
    h.push_back(row.h);
    bias.push_back(std::abs(row.mean_y));
    var.push_back(row.var_y);
  }
  if (h.size() < 3) throw ParameterError("bias and variance rates need at least levels 1..3");
  r.bias_fit = fit_rate(h, bias);
  r.variance_fit = fit_rate(h, var);
}

void fit_convergence(ConvergenceResult& r) {
  std::vector<double> n, mc, qmc;
  for (const auto& row : r.rows) {
    n.push_back(static_cast<double>(row.n));
    mc.push_back(row.mc_variance);
    qmc.push_back(row.qmc_variance);
  }
  r.mc_fit = fit_rate(n, mc);
  r.qmc_fit = fit_rate(n, qmc);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

MaternParams StudyConfig::field_parameters() const { return field_params(field, lambda_c, sigma_var_sq); }

LevelHierarchy StudyConfig::hierarchy(std::size_t level) const { return LevelHierarchy{field, h0, level}; }

SlabModel StudyConfig::model() const {
  SlabModel m;
  m.field = field_parameters();
  m.sigma_a = sigma_a;
  m.source = source;
  return m;
}

void StudyConfig::validate() const {
  field_parameters().validate();
  hierarchy(max_level).validate();
  if (max_level > 10) throw ParameterError("max_level above 10 is not supported");
  if (!(sigma_a > 0.0)) throw ParameterError("sigma_a must be positive");
  if (!std::isfinite(source)) throw ParameterError("source must be finite");
  if (shifts < 2) throw ParameterError("at least two shifts are required");
  if (workers < 1) throw ParameterError("workers must be at least 1");
  if (!(max_cost_units >= 0.0)) throw ParameterError("max_cost_units must be nonnegative");
  if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
  if (!(solver_safety > 0.0)) throw ParameterError("solver_safety must be positive");
  if (initial_n < 2) throw ParameterError("initial_n must be at least 2");
  if (initial_n & (initial_n - 1)) throw ParameterError("initial_n must be a power of two");
  if (mc_pilot < 2) throw ParameterError("mc_pilot must be at least 2");
  if (!(solver_epsilon > 0.0) || !(reference_solver_epsilon > 0.0))
    throw ParameterError("solver tolerances must be positive");
  if (solver_samples < 10) throw ParameterError("solver_samples must be at least 10");
  if (rates_min_samples < 2 || rates_max_samples < rates_min_samples)
    throw ParameterError("need 2 <= rates_min_samples <= rates_max_samples");
  if (!(rates_rel_se > 0.0)) throw ParameterError("rates_rel_se must be positive");
  if (convergence_max_log2 > 20 || convergence_min_log2 + 2 > convergence_max_log2)
    throw ParameterError("convergence range needs min_log2 + 2 <= max_log2 <= 20");
  if (mc_replicates < 1) throw ParameterError("mc_replicates must be at least 1");
  if (qmc_variance_shifts < 2) throw ParameterError("qmc_variance_shifts must be at least 2");
  if (compare_min_level < 1) throw ParameterError("compare_min_level must be at least 1");
}

std::shared_ptr<const KLBasis> study_basis(const StudyConfig& config, std::size_t max_level) {
  const std::size_t d = config.hierarchy(max_level).dimension(max_level);
  const std::size_t q = config.quad_size > 0 ? config.quad_size : default_quad_size(d);
  return load_or_build_kl_basis(config.field_parameters(), d, q, config.kl_cache_dir);
}

std::unique_ptr<SlabTransportSampler> make_sampler(const StudyConfig& config, std::size_t max_level,
                                                   std::vector<double> solver_epsilon,
                                                   std::shared_ptr<const KLBasis> basis) {
  if (!basis) basis = study_basis(config, max_level);
  return std::make_unique<SlabTransportSampler>(config.hierarchy(max_level), config.model(), std::move(basis),
                                                std::move(solver_epsilon));
}

std::vector<std::uint64_t> study_lattice(const StudyConfig& config, std::size_t d) {
  return load_generating_vector(config.lattice_file, d);
}

// ---------------------------------------------------------------------------
// Solver costs

std::string_view to_string(SolverChoice s) {
  switch (s) {
    case SolverChoice::direct:
      return "direct";
    case SolverChoice::iterative:
      return "iterative";
    case SolverChoice::hybrid:
      return "hybrid";
  }
  return "unknown";
}

double SolverStudyRow::normalised_cost(SolverChoice s) const {
  return mean_cost_units[static_cast<std::size_t>(s)] / std::pow(static_cast<double>(m_cells), 3);
}

double SolverStudyRow::normalised_wall(SolverChoice s) const {
  return mean_wall_seconds[static_cast<std::size_t>(s)] / std::pow(static_cast<double>(m_cells), 3);
}

double SolverStudyResult::direct_normalised_spread() const {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& row : rows) {
    lo = std::min(lo, row.normalised_cost(SolverChoice::direct));
    hi = std::max(hi, row.normalised_cost(SolverChoice::direct));
  }
  return hi / lo;
}

double SolverStudyResult::direct_normalised_wall_spread(std::size_t min_level) const {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& row : rows) {
    if (row.level < min_level) continue;
    lo = std::min(lo, row.normalised_wall(SolverChoice::direct));
    hi = std::max(hi, row.normalised_wall(SolverChoice::direct));
  }
  return hi / lo;
}

SolverStudyResult solver_study(const StudyConfig& config, std::size_t max_level, std::size_t samples) {
  if (samples < 10) throw ParameterError("the solver study needs at least 10 samples per level");
  const auto sampler = make_sampler(config, max_level, {config.solver_epsilon});
  const std::uint64_t seed = study_seed(config.seed, StudyTag::solver);
  SolverStudyResult result;
  result.solver_epsilon = config.solver_epsilon;
  result.samples = samples;

  struct Measurement {
    std::array<double, 3> cost{}, wall{};
    double k = 0.0;
    bool hybrid_iterative = false;
  };
  for (std::size_t level = 0; level <= max_level; ++level) {
    const std::size_t d = sampler->dimension(level);
    const auto measured = parallel_map<Measurement>(0, samples, config.workers, [&](std::uint64_t n) {
      const auto z = study_z(seed, 0, level, n, d);
      const DiscreteProblem problem = sampler->problem(level, z);
      const std::size_t k = choose_iterations(config.solver_epsilon, problem.xs.rho);
      const FluxSolution direct = solve_direct(problem);
      const FluxSolution iterative = source_iteration(problem, k);
      const FluxSolution hybrid = hybrid_solve(problem, config.solver_epsilon);
      Measurement m;
      m.cost = {direct.cost_units, iterative.cost_units, hybrid.cost_units};
      m.wall = {direct.wall_seconds, iterative.wall_seconds, hybrid.wall_seconds};
      m.k = static_cast<double>(k);
      m.hybrid_iterative = hybrid.solver == SolverKind::iterative;
      return m;
    });
    SolverStudyRow row;
    row.level = level;
    row.m_cells = sampler->hierarchy().cells(level);
    row.n_half = sampler->hierarchy().half_angles(level);
    row.dimension = d;
    for (const auto& m : measured) {
      for (std::size_t s = 0; s < 3; ++s) {
        row.mean_cost_units[s] += m.cost[s];
        row.mean_wall_seconds[s] += m.wall[s];
      }
      row.mean_iterations += m.k;
      row.hybrid_iterative_fraction += m.hybrid_iterative ? 1.0 : 0.0;
    }
    const double count = static_cast<double>(samples);
    for (std::size_t s = 0; s < 3; ++s) {
      row.mean_cost_units[s] /= count;
      row.mean_wall_seconds[s] /= count;
    }
    row.mean_iterations /= count;
    row.hybrid_iterative_fraction /= count;
    result.rows.push_back(row);
  }
  fit_solver_costs(result);
  return result;
}

// ---------------------------------------------------------------------------
// Bias / variance

double BiasVarianceResult::tau(double h) const {
  const double a = bias_fit.slope;
  return std::exp2(bias_fit.intercept + a * std::log2(h)) / (std::exp2(a) - 1.0);
}

BiasVarianceResult bias_variance_study(const StudyConfig& config, std::size_t max_level) {
  if (max_level < 3) throw ParameterError("the bias/variance study needs max_level >= 3");
  const auto sampler = make_sampler(config, max_level, {config.reference_solver_epsilon});
  const std::uint64_t seed = study_seed(config.seed, StudyTag::rates);
  BiasVarianceResult result;

  struct Pair {
    double fine = 0.0, coarse = 0.0, cost = 0.0;
  };
  for (std::size_t level = 0; level <= max_level; ++level) {
    const std::size_t d = sampler->dimension(level);
    Accumulator q, y;
    double cost = 0.0;
    std::uint64_t target = config.rates_min_samples;
    for (;;) {
      const auto pairs = parallel_map<Pair>(q.count(), target, config.workers, [&](std::uint64_t n) {
        const auto z = study_z(seed, 0, level, n, d);
        Pair p;
        const SampleResult fine = sampler->sample_q(level, z);
        p.fine = fine.value;
        p.cost = fine.cost_units;
        if (level > 0) p.coarse = sampler->sample_q(level - 1, z).value;
        return p;
      });
      for (const auto& p : pairs) {
        q.add(p.fine);
        y.add(p.fine - p.coarse);
        cost += p.cost;
      }
      const double se = std::sqrt(y.variance() / static_cast<double>(y.count()));
      if (level == 0 || se <= config.rates_rel_se * std::abs(y.mean()) || target >= config.rates_max_samples) break;
      target = std::min(2 * target, config.rates_max_samples);
    }
    RatesLevelRow row;
    row.level = level;
    row.h = sampler->hierarchy().h(level);
    row.dimension = d;
    row.n_samples = q.count();
    row.mean_q = q.mean();
    row.var_q = q.variance();
    row.mean_y = y.mean();
    row.var_y = y.variance();
    row.se_mean_y = std::sqrt(row.var_y / static_cast<double>(row.n_samples));
    row.mean_cost_q = cost / static_cast<double>(row.n_samples);
    result.rows.push_back(row);
  }
  fit_bias_variance(result);
  return result;
}

// ---------------------------------------------------------------------------
// MC / QMC convergence

ConvergenceResult convergence_study(const StudyConfig& config, std::size_t level) {
  const auto sampler = make_sampler(config, level, {config.reference_solver_epsilon});
  const std::size_t d = sampler->dimension(level);
  const std::uint64_t n_max = std::uint64_t{1} << config.convergence_max_log2;
  ConvergenceResult result;
  result.level = level;

  // MC: replicate r uses its own stream; N runs over nested prefixes.
  std::vector<std::vector<double>> mc(config.mc_replicates);
  for (std::size_t r = 0; r < config.mc_replicates; ++r) {
    const std::uint64_t seed = study_seed(config.seed, StudyTag::mc_convergence, r);
    mc[r] = parallel_map<double>(0, n_max, config.workers, [&](std::uint64_t n) {
      return sampler->sample_q(level, study_z(seed, 0, level, n, d)).value;
    });
  }
  Accumulator pooled;
  for (const auto& v : mc)
    for (double x : v) pooled.add(x);
  result.pooled_variance = pooled.variance();

  // QMC: all points of the largest lattice under S shifts; the P-point rule
  // is the subset n = k * (n_max / P).
  const std::size_t s_count = config.qmc_variance_shifts;
  const LatticeRule rule(study_lattice(config, d), d, n_max, s_count,
                         study_seed(config.seed, StudyTag::qmc_convergence, level));
  const auto values = parallel_map<double>(0, n_max * s_count, config.workers, [&](std::uint64_t i) {
    std::vector<double> z(d);
    rule.gaussian_point(i % n_max, static_cast<std::size_t>(i / n_max), z);
    return sampler->sample_q(level, z).value;
  });

  for (std::size_t k = config.convergence_min_log2; k <= config.convergence_max_log2; ++k) {
    const std::uint64_t n = std::uint64_t{1} << k;
    ConvergenceRow row;
    row.n = n;
    for (const auto& v : mc) {
      Accumulator a;
      for (std::uint64_t i = 0; i < n; ++i) a.add(v[i]);
      row.mc_variance += a.variance() / static_cast<double>(n);
    }
    row.mc_variance /= static_cast<double>(mc.size());
    const std::uint64_t stride = n_max / n;
    Accumulator means;
    for (std::size_t s = 0; s < s_count; ++s) {
      Accumulator a;
      for (std::uint64_t j = 0; j < n; ++j) a.add(values[s * n_max + j * stride]);
      means.add(a.mean());
    }
    row.qmc_variance = means.variance() / static_cast<double>(config.shifts);
    result.rows.push_back(row);
  }
  fit_convergence(result);
  return result;
}

// ---------------------------------------------------------------------------
// Rates

RatesResult rates_study(const StudyConfig& config) {
  if (config.max_level < 3) throw ParameterError("rates need at least levels 0..3");
  RatesResult r;
  r.bias_variance = bias_variance_study(config, config.max_level);
  r.solver = solver_study(config, config.max_level, config.solver_samples);
  r.convergence = convergence_study(config, std::min(config.convergence_level, config.max_level));
  r.alpha = r.bias_variance->alpha();
  r.alpha_se = r.bias_variance->bias_fit.slope_se;
  r.beta = r.bias_variance->beta();
  r.beta_se = r.bias_variance->variance_fit.slope_se;
  r.gamma = r.solver->gamma();
  r.gamma_se = r.solver->hybrid_cost_fit.slope_se;
  r.lambda = r.convergence->lambda();
  r.lambda_se = r.convergence->qmc_fit.slope_se / (r.convergence->qmc_fit.slope * r.convergence->qmc_fit.slope);
  return r;
}

RatesResult synthetic_rates(double alpha, double beta, double gamma, double lambda, std::size_t levels) {
  if (levels < 4) throw ParameterError("synthetic rates need at least four levels");
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  BiasVarianceResult bv;
  SolverStudyResult solver;
  for (std::size_t l = 0; l < levels; ++l) {
    RatesLevelRow row;
    row.level = l;
    row.h = 0.25 * std::exp2(-static_cast<double>(l));
    row.mean_y = 0.3 * std::pow(row.h, alpha);
    row.var_y = 0.02 * std::pow(row.h, beta);
    bv.rows.push_back(row);
    SolverStudyRow s;
    s.level = l;
    s.m_cells = std::size_t{4} << l;
    s.mean_cost_units[2] = 5.0 * std::pow(row.h, -gamma);
    solver.rows.push_back(s);
  }
  fit_bias_variance(bv);
  fit_solver_costs(solver);
  ConvergenceResult conv;
  for (std::size_t k = 4; k <= 12; ++k) {
    ConvergenceRow row;
    row.n = std::uint64_t{1} << k;
    row.mc_variance = 0.1 / static_cast<double>(row.n);
    row.qmc_variance = 0.1 * std::pow(static_cast<double>(row.n), -1.0 / lambda);
    conv.rows.push_back(row);
  }
  fit_convergence(conv);
  RatesResult r;
  r.alpha = bv.alpha();
  r.beta = bv.beta();
  r.gamma = solver.gamma();
  r.lambda = conv.lambda();
  r.bias_variance = std::move(bv);
  r.solver = std::move(solver);
  r.convergence = std::move(conv);
  return r;
}

// ---------------------------------------------------------------------------
// Estimator comparison

EstimatorReport run_estimator(const StudyConfig& config, const std::string& method, std::size_t max_level,
                              double epsilon, const std::vector<double>& solver_epsilon,
                              std::shared_ptr<const KLBasis> basis) {
  const auto sampler = make_sampler(config, max_level, solver_epsilon, std::move(basis));
  AdaptiveOptions options;
  options.initial_n = config.initial_n;
  options.shifts = config.shifts;
  options.run.workers = config.workers;
  options.run.max_cost_units = config.max_cost_units;
  if (method == "mc") return mc_to_tolerance(*sampler, max_level, epsilon, config.seed, config.mc_pilot, options.run);
  options.generating_vector = study_lattice(config, sampler->dimension(max_level));
  if (method == "qmc") return qmc_to_tolerance(*sampler, max_level, epsilon, config.seed, options);
  if (method == "mlmc") return adaptive_allocate(*sampler, max_level, epsilon, config.seed, MultilevelMode::mlmc, options);
  if (method == "mlqmc")
    return adaptive_allocate(*sampler, max_level, epsilon, config.seed, MultilevelMode::mlqmc, options);
  throw ParameterError("unknown method '" + method + "' (expected mc, qmc, mlmc or mlqmc)");
}

bool CompareResult::all_converged() const {
  for (const auto& row : rows)
    for (const auto& r : row.reports)
      if (!r.converged) return false;
  return true;
}

CompareResult compare_study(const StudyConfig& config, const BiasVarianceResult& bias) {
  if (config.max_level < config.compare_min_level) throw ParameterError("max_level is below compare_min_level");
  const auto basis = study_basis(config, config.max_level);
  CompareResult result;
  for (std::size_t level = config.compare_min_level; level <= config.max_level; ++level) {
    const LevelHierarchy hier = config.hierarchy(level);
    CompareRow row;
    row.level = level;
    row.tau = bias.tau(hier.h(level));
    row.epsilon = std::numbers::sqrt2 * row.tau;
    std::vector<double> solver_eps;
    for (std::size_t l = 0; l <= level; ++l) solver_eps.push_back(config.solver_safety * bias.tau(hier.h(l)));
    for (std::size_t m = 0; m < kCompareMethods.size(); ++m) {
      row.reports[m] = run_estimator(config, kCompareMethods[m], level, row.epsilon, solver_eps, basis);
      row.reports[m].bias_proxy = row.tau;
    }
    result.rows.push_back(std::move(row));
  }
  if (result.rows.size() >= 3) {
    for (std::size_t m = 0; m < kCompareMethods.size(); ++m) {
      std::vector<double> eps, cost;
      for (const auto& row : result.rows) {
        eps.push_back(row.epsilon);
        cost.push_back(row.reports[m].total_cost_units);
      }
      result.cost_fits[m] = fit_rate(eps, cost);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Output

std::string config_preamble(const std::map<std::string, std::string>& config) {
  std::string out;
  for (const auto& [key, value] : config) out += "# " + key + "=" + value + "\n";
  return out;
}

void write_solver_study_csv(const std::filesystem::path& path, const SolverStudyResult& result,
                            const std::map<std::string, std::string>& config) {
  auto out = open_csv(path, config, kSolverStudyCsvHeader);
  for (const auto& r : result.rows) {
    out << r.level << ',' << r.m_cells << ',' << r.n_half << ',' << r.dimension;
    for (double c : r.mean_cost_units) out << ',' << c;
    for (SolverChoice s : kSolverChoices) out << ',' << r.normalised_cost(s);
    for (SolverChoice s : kSolverChoices) out << ',' << r.normalised_wall(s);
    out << ',' << r.mean_iterations << ',' << r.hybrid_iterative_fraction << '\n';
  }
  close_csv(out, path);
}

void write_rates_csv(const std::filesystem::path& path, const BiasVarianceResult& result,
                     const std::map<std::string, std::string>& config) {
  auto out = open_csv(path, config, kRatesCsvHeader);
  for (const auto& r : result.rows)
    out << r.level << ',' << r.h << ',' << r.dimension << ',' << r.n_samples << ',' << r.mean_q << ',' << r.var_q
        << ',' << r.mean_y << ',' << r.var_y << ',' << r.se_mean_y << ',' << r.mean_cost_q << '\n';
  close_csv(out, path);
}

void write_convergence_csv(const std::filesystem::path& path, const ConvergenceResult& result,
                           const std::map<std::string, std::string>& config) {
  auto out = open_csv(path, config, kConvergenceCsvHeader);
  for (const auto& r : result.rows) out << r.n << ',' << r.mc_variance << ',' << r.qmc_variance << '\n';
  close_csv(out, path);
}

void write_rate_table_csv(const std::filesystem::path& path, const RatesResult& result,
                          const std::map<std::string, std::string>& config) {
  auto out = open_csv(path, config, kRateTableCsvHeader);
  out << "alpha," << result.alpha << ',' << result.alpha_se << '\n'
      << "beta," << result.beta << ',' << result.beta_se << '\n'
      << "gamma," << result.gamma << ',' << result.gamma_se << '\n'
      << "lambda," << result.lambda << ',' << result.lambda_se << '\n';
  close_csv(out, path);
}

void write_compare_csv(const std::filesystem::path& path, const CompareResult& result,
                       const std::map<std::string, std::string>& config) {
  auto out = open_csv(path, config, kCompareCsvHeader);
  for (const auto& row : result.rows)
    for (std::size_t m = 0; m < kCompareMethods.size(); ++m) {
      const auto& r = row.reports[m];
      out << row.level << ',' << row.tau << ',' << row.epsilon << ',' << kCompareMethods[m] << ',' << r.estimate
          << ',' << r.variance << ',' << r.total_cost_units << ',' << r.wall_seconds << ',' << (r.converged ? 1 : 0)
          << '\n';
    }
  close_csv(out, path);
}

void write_slope_table_csv(const std::filesystem::path& path, const CompareResult& result,
                           const std::map<std::string, std::string>& config) {
  auto out = open_csv(path, config, kSlopeTableCsvHeader);
  for (std::size_t m = 0; m < kCompareMethods.size(); ++m)
    out << kCompareMethods[m] << ',' << result.rate(m) << ',' << result.cost_fits[m].slope_se << '\n';
  close_csv(out, path);
}

const std::vector<CsvSchema>& csv_schemas() {
  static const std::vector<CsvSchema> schemas = {
      {"levels", kLevelCsvHeader, {}},
      {"solver-study", kSolverStudyCsvHeader, {}},
      {"rates", kRatesCsvHeader, {}},
      {"convergence", kConvergenceCsvHeader, {}},
      {"rate-table", kRateTableCsvHeader, {"rate"}},
      {"compare", kCompareCsvHeader, {"method"}},
      {"slopes", kSlopeTableCsvHeader, {"method"}},
      {"flux", "x,phi", {}},
  };
  return schemas;
}

std::string check_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  const CsvSchema* schema = nullptr;
  std::vector<std::string> columns;
  std::size_t rows = 0;
  const auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  const auto fail = [&](const std::string& what) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (schema == nullptr) {
      if (line.empty() || line.front() == '#') continue;
      for (const auto& s : csv_schemas())
        if (s.header == line) schema = &s;
      if (schema == nullptr) fail("unknown header '" + line + "'");
      columns = split(line);
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != columns.size())
      fail("expected " + std::to_string(columns.size()) + " columns, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (std::find(schema->text_columns.begin(), schema->text_columns.end(), columns[c]) !=
          schema->text_columns.end()) {
        if (cells[c].empty()) fail("empty " + columns[c]);
        continue;
      }
      std::size_t used = 0;
      try {
        (void)std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size()) fail("column " + columns[c] + " is not numeric: '" + cells[c] + "'");
    }
    ++rows;
  }
  if (schema == nullptr) throw ParseError(path.string() + ": no header line");
  if (rows == 0) throw ParseError(path.string() + ": no data rows");
  return schema->name;
}

}  // namespace slabuq
