#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slabuq/covariance.hpp"
#include "slabuq/estimators.hpp"

namespace slabuq {

/// Resolved settings shared by every study. Defaults are the reference slab
/// configuration: sigma_A = e^{0.25}, f = e, lambda_c = 1, sigma_var^2 = 1,
/// h0 = 1/4, R = 8 shifts.
struct StudyConfig {
  FieldKind field = FieldKind::matern15;
  double lambda_c = 1.0;
  double sigma_var_sq = 1.0;
  double sigma_a = 1.2840254166877414;
  double source = 2.718281828459045;
  double h0 = 0.25;
  std::size_t max_level = 4;
  std::uint64_t seed = 0;
  std::filesystem::path lattice_file = std::filesystem::path(SLABUQ_DATA_DIR) / "lattice-32001-1024-1048576.3600";
  std::size_t shifts = 8;
  std::filesystem::path out_dir = "slabuq-out";
  std::filesystem::path kl_cache_dir;  // empty: no cache
  std::size_t quad_size = 0;           // 0: default_quad_size(d)
  std::size_t workers = 1;
  double max_cost_units = 0.0;         // 0: unlimited

  // estimate
  double epsilon = 1e-3;
  /// Solver tolerance inside estimators = solver_safety * bias target.
  double solver_safety = 0.1;
  std::uint64_t initial_n = 16;
  std::uint64_t mc_pilot = 128;

  // solver-study
  double solver_epsilon = 1e-4;
  std::size_t solver_samples = 100;

  // rates
  /// Solver tolerance for bias/variance and convergence studies.
  double reference_solver_epsilon = 1e-8;
  std::uint64_t rates_min_samples = 1000;
  std::uint64_t rates_max_samples = 65536;
  double rates_rel_se = 0.1;

  // MC / QMC convergence
  std::size_t convergence_level = 3;
  std::size_t convergence_min_log2 = 4;
  std::size_t convergence_max_log2 = 12;
  std::size_t mc_replicates = 16;
  std::size_t qmc_variance_shifts = 32;

  // compare
  std::size_t compare_min_level = 2;

  [[nodiscard]] MaternParams field_parameters() const;
  [[nodiscard]] LevelHierarchy hierarchy(std::size_t max_level) const;
  [[nodiscard]] SlabModel model() const;
  /// Throws ParameterError on inconsistent settings.
  void validate() const;
};

/// KL basis with enough modes for `max_level`, loaded from or written to the cache.
std::shared_ptr<const KLBasis> study_basis(const StudyConfig& config, std::size_t max_level);

/// Sampler on levels 0..max_level; solver_epsilon has one entry or one per
/// level. A null basis is replaced by study_basis(config, max_level).
std::unique_ptr<SlabTransportSampler> make_sampler(const StudyConfig& config, std::size_t max_level,
                                                   std::vector<double> solver_epsilon,
                                                   std::shared_ptr<const KLBasis> basis = nullptr);

/// First d components of the configured generating vector.
std::vector<std::uint64_t> study_lattice(const StudyConfig& config, std::size_t d);

// ---------------------------------------------------------------------------
// Solver costs

enum class SolverChoice { direct, iterative, hybrid };
inline constexpr std::array<SolverChoice, 3> kSolverChoices = {SolverChoice::direct, SolverChoice::iterative,
                                                               SolverChoice::hybrid};
std::string_view to_string(SolverChoice s);

struct SolverStudyRow {
  std::size_t level = 0;
  std::size_t m_cells = 0;
  std::size_t n_half = 0;
  std::size_t dimension = 0;
  std::array<double, 3> mean_cost_units{};
  std::array<double, 3> mean_wall_seconds{};
  double mean_iterations = 0.0;      // K from the a priori rule
  double hybrid_iterative_fraction = 0.0;

  [[nodiscard]] double normalised_cost(SolverChoice s) const;
  [[nodiscard]] double normalised_wall(SolverChoice s) const;
};

struct SolverStudyResult {
  double solver_epsilon = 0.0;
  std::size_t samples = 0;
  std::vector<SolverStudyRow> rows;
  /// Fit of the hybrid mean cost units against h; gamma = -slope.
  RateFit hybrid_cost_fit;
  RateFit hybrid_wall_fit;
  [[nodiscard]] double gamma() const { return -hybrid_cost_fit.slope; }
  /// max / min over levels of the direct solver's M^3-normalised cost.
  [[nodiscard]] double direct_normalised_spread() const;
  [[nodiscard]] double direct_normalised_wall_spread(std::size_t min_level = 0) const;
};

/// Mean cost of the direct, iterative (K from the a priori rule) and hybrid
/// solvers over `samples` realisations on levels 0..max_level.
SolverStudyResult solver_study(const StudyConfig& config, std::size_t max_level, std::size_t samples);

// ---------------------------------------------------------------------------
// Bias / variance / cost rates

struct RatesLevelRow {
  std::size_t level = 0;
  double h = 0.0;
  std::size_t dimension = 0;
  std::uint64_t n_samples = 0;
  double mean_q = 0.0;
  double var_q = 0.0;
  double mean_y = 0.0;
  double var_y = 0.0;
  double se_mean_y = 0.0;
  double mean_cost_q = 0.0;
};

struct BiasVarianceResult {
  std::vector<RatesLevelRow> rows;
  /// Fits over levels 1..L of |E Y_l| (alpha) and V[Y_l] (beta) against h.
  RateFit bias_fit;
  RateFit variance_fit;
  [[nodiscard]] double alpha() const { return bias_fit.slope; }
  [[nodiscard]] double beta() const { return variance_fit.slope; }
  /// Bias target from the fitted model: c h_l^alpha / (2^alpha - 1).
  [[nodiscard]] double tau(double h) const;
};

/// MC samples of Q_l and Y_l (same z) on levels 0..max_level. Each level starts
/// with rates_min_samples and doubles until the standard error of mean Y_l is
/// at most rates_rel_se |mean Y_l| or rates_max_samples is reached.
BiasVarianceResult bias_variance_study(const StudyConfig& config, std::size_t max_level);

struct ConvergenceRow {
  std::uint64_t n = 0;              // N for MC, P for QMC
  double mc_variance = 0.0;         // estimator variance of MC with N = n
  double qmc_variance = 0.0;        // estimator variance of QMC with P = n, R = config.shifts
};

struct ConvergenceResult {
  std::size_t level = 0;
  std::vector<ConvergenceRow> rows;
  /// MC variance estimate pooled over all replicate samples.
  double pooled_variance = 0.0;
  RateFit mc_fit;   // estimator variance against N
  RateFit qmc_fit;  // estimator variance against P
  /// QMC variance decays like P^{-1/lambda}.
  [[nodiscard]] double lambda() const { return -1.0 / qmc_fit.slope; }
};

/// Estimator variance of MC (averaged over mc_replicates independent streams,
/// nested N) and of QMC with R shifts (estimated from qmc_variance_shifts
/// shifts and rescaled to R, nested embedded lattices) on one level.
ConvergenceResult convergence_study(const StudyConfig& config, std::size_t level);

struct RatesResult {
  double alpha = 0.0, beta = 0.0, gamma = 0.0, lambda = 0.0;
  double alpha_se = 0.0, beta_se = 0.0, gamma_se = 0.0, lambda_se = 0.0;
  std::optional<BiasVarianceResult> bias_variance;
  std::optional<SolverStudyResult> solver;
  std::optional<ConvergenceResult> convergence;
};

/// alpha, beta from bias_variance_study; gamma from the hybrid solver cost;
/// lambda from the QMC convergence study.
RatesResult rates_study(const StudyConfig& config);

/// Rates recovered by the same fitting code from exact power-law data
/// (self-test of the fitting pipeline).
RatesResult synthetic_rates(double alpha, double beta, double gamma, double lambda, std::size_t levels = 5);

// ---------------------------------------------------------------------------
// Estimator comparison

inline constexpr std::array<const char*, 4> kCompareMethods = {"mc", "qmc", "mlmc", "mlqmc"};

struct CompareRow {
  std::size_t level = 0;  // finest level L
  double tau = 0.0;
  double epsilon = 0.0;   // sqrt(2) tau
  std::array<EstimatorReport, 4> reports;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  /// Fit of total cost against epsilon per method; r = -slope.
  std::array<RateFit, 4> cost_fits{};
  [[nodiscard]] double rate(std::size_t method) const { return -cost_fits[method].slope; }
  [[nodiscard]] bool all_converged() const;
};

/// For L = compare_min_level..max_level runs all four estimators with
/// eps_L = sqrt(2) tau_L, tau from `bias`, and fits the eps-cost slopes.
CompareResult compare_study(const StudyConfig& config, const BiasVarianceResult& bias);

/// One estimator run on levels 0..L (single-level methods use level L only).
EstimatorReport run_estimator(const StudyConfig& config, const std::string& method, std::size_t max_level,
                              double epsilon, const std::vector<double>& solver_epsilon,
                              std::shared_ptr<const KLBasis> basis = nullptr);

// ---------------------------------------------------------------------------
// Output

/// "# key=value" lines for embedding a resolved configuration in a CSV file.
std::string config_preamble(const std::map<std::string, std::string>& config);

inline constexpr const char* kSolverStudyCsvHeader =
    "level,M,N,d,direct_cost,iterative_cost,hybrid_cost,direct_cost_over_M3,iterative_cost_over_M3,"
    "hybrid_cost_over_M3,direct_wall_over_M3,iterative_wall_over_M3,hybrid_wall_over_M3,mean_K,"
    "hybrid_iterative_fraction";
inline constexpr const char* kRatesCsvHeader =
    "level,h,d,n_samples,mean_q,var_q,mean_y,var_y,se_mean_y,mean_cost_q";
inline constexpr const char* kConvergenceCsvHeader = "n,mc_variance,qmc_variance";
inline constexpr const char* kCompareCsvHeader = "L,tau,epsilon,method,estimate,variance,cost_units,wall_s,converged";
inline constexpr const char* kRateTableCsvHeader = "rate,value,std_error";
inline constexpr const char* kSlopeTableCsvHeader = "method,slope,std_error";

void write_solver_study_csv(const std::filesystem::path& path, const SolverStudyResult& result,
                            const std::map<std::string, std::string>& config);
void write_rates_csv(const std::filesystem::path& path, const BiasVarianceResult& result,
                     const std::map<std::string, std::string>& config);
void write_convergence_csv(const std::filesystem::path& path, const ConvergenceResult& result,
                           const std::map<std::string, std::string>& config);
void write_rate_table_csv(const std::filesystem::path& path, const RatesResult& result,
                          const std::map<std::string, std::string>& config);
void write_compare_csv(const std::filesystem::path& path, const CompareResult& result,
                       const std::map<std::string, std::string>& config);
void write_slope_table_csv(const std::filesystem::path& path, const CompareResult& result,
                           const std::map<std::string, std::string>& config);

/// Known CSV schemas by header line.
struct CsvSchema {
  std::string name;
  std::string header;
  /// Columns that may hold text (all others must parse as numbers).
  std::vector<std::string> text_columns;
};
const std::vector<CsvSchema>& csv_schemas();

/// Validates a CSV produced by this tool: '#' preamble lines, a known header,
/// rows with the right column count and numeric cells. Returns the schema name;
/// throws ParseError describing the first problem.
std::string check_csv(const std::filesystem::path& path);

}  // namespace slabuq
