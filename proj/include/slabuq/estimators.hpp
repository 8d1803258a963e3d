#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "slabuq/covariance.hpp"
#include "slabuq/sampler.hpp"
#include "slabuq/transport.hpp"

namespace slabuq {

/// h_l = 2^{-l} h0, M_l = 1/h_l, N_l = 2 M_l, d_l = truncation_dimension(field, h_l).
struct LevelHierarchy {
  FieldKind field = FieldKind::matern15;
  double h0 = 0.25;
  std::size_t max_level = 0;

  [[nodiscard]] double h(std::size_t level) const;
  [[nodiscard]] std::size_t cells(std::size_t level) const;
  [[nodiscard]] std::size_t half_angles(std::size_t level) const { return 2 * cells(level); }
  [[nodiscard]] std::size_t dimension(std::size_t level) const;
  void validate() const;
};

struct SampleResult {
  double value = 0.0;
  double cost_units = 0.0;
  double wall_seconds = 0.0;
  /// Number of times the sample was redrawn after a solver failure.
  std::uint32_t retries = 0;
};

/// Source of Q_{h_l}(z) and Y_l(z) samples. Implementations must be pure so
/// that samples can be evaluated concurrently.
class LevelSampler {
 public:
  virtual ~LevelSampler() = default;

  [[nodiscard]] virtual std::size_t max_level() const = 0;
  /// Length of the Gaussian vector consumed on level l.
  [[nodiscard]] virtual std::size_t dimension(std::size_t level) const = 0;
  /// Q on level l using the first z.size() field modes.
  [[nodiscard]] virtual SampleResult sample_q(std::size_t level, std::span<const double> z) const = 0;
  /// Y_0 = Q_0(z); Y_l = Q_l(z) - Q_{l-1}(z) with the same z on both levels.
  [[nodiscard]] virtual SampleResult sample_y(std::size_t level, std::span<const double> z) const;
};

/// Sampler built from a callback; used for synthetic integrands in tests.
class FunctionSampler : public LevelSampler {
 public:
  using Function = std::function<double(std::size_t level, std::span<const double> z)>;

  FunctionSampler(std::vector<std::size_t> dimensions, std::vector<double> costs, Function fn);
  static FunctionSampler constant(double c, std::size_t levels = 1, std::size_t dimension = 1);

  [[nodiscard]] std::size_t max_level() const override { return dims_.size() - 1; }
  [[nodiscard]] std::size_t dimension(std::size_t level) const override;
  [[nodiscard]] SampleResult sample_q(std::size_t level, std::span<const double> z) const override;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> costs_;
  Function fn_;
};

/// Physical parameters of the slab problem.
struct SlabModel {
  MaternParams field;
  double sigma_a = 1.2840254166877414;  // e^{0.25}
  double source = 2.718281828459045;    // e
};

/// Q_h for the log-normal scattering slab. Holds one KL basis with d_L modes
/// and a field evaluator on the midpoints of every level.
class SlabTransportSampler : public LevelSampler {
 public:
  SlabTransportSampler(LevelHierarchy hierarchy, SlabModel model, std::shared_ptr<const KLBasis> basis,
                       std::vector<double> solver_epsilon);

  [[nodiscard]] std::size_t max_level() const override { return hierarchy_.max_level; }
  [[nodiscard]] std::size_t dimension(std::size_t level) const override;
  [[nodiscard]] SampleResult sample_q(std::size_t level, std::span<const double> z) const override;

  [[nodiscard]] const LevelHierarchy& hierarchy() const { return hierarchy_; }
  [[nodiscard]] const SlabModel& model() const { return model_; }
  [[nodiscard]] double solver_epsilon(std::size_t level) const { return eps_.at(level); }
  void set_solver_epsilon(std::vector<double> eps);

  /// Discrete problem on level l for the realisation z (first z.size() modes).
  [[nodiscard]] DiscreteProblem problem(std::size_t level, std::span<const double> z) const;
  [[nodiscard]] FluxSolution solve(std::size_t level, std::span<const double> z) const;

 private:
  LevelHierarchy hierarchy_;
  SlabModel model_;
  std::shared_ptr<const KLBasis> basis_;
  std::vector<FieldEvaluator> evaluators_;
  std::vector<AngularQuadrature> quads_;
  std::vector<double> eps_;
};

/// Running sums with compensated summation about a fixed shift (the first
/// value), so the variance does not suffer from cancellation.
class Accumulator {
 public:
  void add(double x);
  void merge(const Accumulator& other);
  [[nodiscard]] std::uint64_t count() const { return n_; }
  [[nodiscard]] double mean() const;
  /// Unbiased sample variance; 0 for fewer than two values.
  [[nodiscard]] double variance() const;

 private:
  struct Kahan {
    double sum = 0.0, c = 0.0;
    void add(double x);
  };
  std::uint64_t n_ = 0;
  double shift_ = 0.0;
  Kahan s1_, s2_;
};

struct LevelStats {
  std::size_t level = 0;
  double h = 0.0;
  std::size_t dimension = 0;
  /// Samples per shift for QMC levels, total samples for MC levels.
  std::uint64_t n_samples = 0;
  std::size_t shifts = 0;  // 0 for MC
  double mean_y = 0.0;
  /// MC: sample variance of Y. QMC: sample variance of the shift means.
  double var_y = 0.0;
  /// Variance of this level's contribution to the estimator.
  double estimator_variance = 0.0;
  double cost_units = 0.0;  // total over all samples on the level
  double wall_seconds = 0.0;
  std::vector<double> shift_means;
  std::uint64_t retries = 0;

  [[nodiscard]] double cost_per_sample() const;
};

struct EstimatorReport {
  std::string method;
  double estimate = 0.0;
  double variance = 0.0;
  double epsilon = 0.0;
  std::optional<double> bias_proxy;
  double total_cost_units = 0.0;
  double wall_seconds = 0.0;
  bool converged = true;
  std::vector<LevelStats> levels;
  std::map<std::string, std::string> config;

  [[nodiscard]] double mse_proxy() const;
  [[nodiscard]] std::string to_json() const;
  [[nodiscard]] std::string to_text() const;
  /// Per-level CSV preceded by "# key=value" lines echoing `config`.
  void write_level_csv(const std::filesystem::path& path) const;
};

/// Columns of the per-level CSV written by EstimatorReport::write_level_csv.
inline constexpr const char* kLevelCsvHeader = "level,h,d,n_samples,mean_y,var_y,cost_units,wall_s";

/// Stream identifiers mixed into derive_seed so that estimators never share samples.
enum class StreamId : std::uint64_t { mc = 1, qmc = 2, mlmc = 3, mlqmc = 4, study = 5, retry = 6 };

struct RunOptions {
  std::size_t workers = 1;
  double max_cost_units = 0.0;  // 0 = unlimited
};

/// Evaluates fn(i) for i in [begin, end) on `workers` threads and returns the
/// results in index order, so any later reduction is independent of the
/// worker count. The first exception thrown by a worker is rethrown.
template <class T, class Fn>
std::vector<T> parallel_map(std::uint64_t begin, std::uint64_t end, std::size_t workers, Fn&& fn) {
  const std::uint64_t count = end > begin ? end - begin : 0;
  std::vector<T> out(count);
  const auto threads_wanted =
      static_cast<std::size_t>(std::max<std::uint64_t>(1, std::min<std::uint64_t>(workers, count)));
  if (threads_wanted <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) out[i] = fn(begin + i);
    return out;
  }
  std::atomic<std::uint64_t> next{0};
  std::vector<std::exception_ptr> errors(threads_wanted);
  std::vector<std::thread> threads;
  threads.reserve(threads_wanted);
  for (std::size_t w = 0; w < threads_wanted; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::uint64_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) out[i] = fn(begin + i);
      } catch (...) {
        errors[w] = std::current_exception();
        next.store(count);
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<SampleResult> evaluate_indexed(std::uint64_t begin, std::uint64_t end, std::size_t workers,
                                           const std::function<SampleResult(std::uint64_t)>& fn);

/// Plain MC on one level: n >= 2 i.i.d. samples of Q_{h_L}.
EstimatorReport mc_estimate(const LevelSampler& sampler, std::size_t level, std::uint64_t n, std::uint64_t seed,
                            const RunOptions& options = {});

/// Randomly shifted lattice rule on one level: P points under each of the
/// rule's R shifts.
EstimatorReport qmc_estimate(const LevelSampler& sampler, std::size_t level, const LatticeRule& rule,
                             const RunOptions& options = {});

/// N_l = ceil(2 eps^{-2} (sum_j sqrt(V_j C_j)) sqrt(V_l / C_l)), the minimiser
/// of sum N_l C_l subject to sum V_l / N_l <= eps^2 / 2. Requires V_l, C_l > 0.
std::vector<std::uint64_t> optimal_sample_counts(std::span<const double> variances, std::span<const double> costs,
                                                 double epsilon);

/// Index of the largest estimator_variance[l] / cost[l]; ties go to the lowest level.
std::size_t refinement_level(std::span<const double> estimator_variance, std::span<const double> cost);

enum class MultilevelMode { mlmc, mlqmc };

struct AdaptiveOptions {
  std::uint64_t initial_n = 16;      // samples per level (mlmc) or points per shift (mlqmc)
  std::vector<std::uint64_t> generating_vector;  // mlqmc
  std::size_t shifts = 8;            // mlqmc
  RunOptions run;
};

/// Adaptive multilevel estimator on levels 0..L: starting from initial_n,
/// repeatedly doubles the samples (mlmc) or lattice points per shift (mlqmc)
/// on the level with the largest ratio of estimator variance to total level
/// cost, until the estimator variance is at most eps^2 / 2.
EstimatorReport adaptive_allocate(const LevelSampler& sampler, std::size_t max_level, double epsilon,
                                  std::uint64_t seed, MultilevelMode mode, const AdaptiveOptions& options = {});

/// Single-level MC on level L with a pilot run of initial_n samples followed by
/// top-ups to ceil(2 V / eps^2) until the estimator variance is at most eps^2 / 2.
EstimatorReport mc_to_tolerance(const LevelSampler& sampler, std::size_t level, double epsilon,
                                std::uint64_t seed, std::uint64_t initial_n, const RunOptions& options = {});

/// Single-level QMC on level L, doubling P until the estimator variance is at most eps^2 / 2.
EstimatorReport qmc_to_tolerance(const LevelSampler& sampler, std::size_t level, double epsilon,
                                 std::uint64_t seed, const AdaptiveOptions& options);

/// max / min over levels of (level estimator variance) / (level total cost).
double equilibration_ratio(const EstimatorReport& report);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  /// Root-mean-square residual of the log2 fit.
  double residual = 0.0;
  /// Standard error of the slope.
  double slope_se = 0.0;
};

/// Least-squares fit log2(value) = intercept + slope log2(scale) over at least
/// three points.
RateFit fit_rate(std::span<const double> scale, std::span<const double> value);

}  // namespace slabuq
