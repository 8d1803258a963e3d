#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace slabuq {

/// Random field families used for log(sigma_S).
enum class FieldKind { matern15, exponential, gaussian };

std::string_view to_string(FieldKind kind);
FieldKind parse_field_kind(std::string_view name);

/// Matern covariance parameters. nu = +inf selects the Gaussian limit.
struct MaternParams {
  double nu = 1.5;
  double lambda_c = 1.0;
  double sigma_var_sq = 1.0;

  static constexpr double kGaussian = std::numeric_limits<double>::infinity();

  [[nodiscard]] bool is_gaussian() const { return nu == kGaussian; }
  /// Throws ParameterError when nu < 0.5, lambda_c <= 0 or sigma_var_sq <= 0.
  void validate() const;
};

MaternParams field_params(FieldKind kind, double lambda_c = 1.0, double sigma_var_sq = 1.0);

/// C_nu(x, y). Half-integer nu use closed forms, other nu go through
/// std::cyl_bessel_k. Returns sigma_var_sq on the diagonal.
double matern_covariance(double x, double y, const MaternParams& p);

/// Stochastic dimension used at mesh width h: ceil(8/h) for the Matern field,
/// ceil(225 h^{-1/2}) for the exponential field, min(ceil(8/h), 10) for the
/// Gaussian field.
std::size_t truncation_dimension(FieldKind kind, double h);

/// Nystrom resolution used when the caller does not pick one.
std::size_t default_quad_size(std::size_t d);

/// Truncated Karhunen-Loeve eigensystem of the covariance operator on
/// L2(0,1), computed by the Nystrom method on the composite midpoint rule.
///
/// Eigenfunctions are stored at the quad_size midpoint nodes t_j = (j+1/2)/Q
/// and normalised so that sum_j w eta_i(t_j)^2 = 1 with w = 1/Q. Off-node
/// values come from the Nystrom interpolant
///   eta_i(x) = (1/xi_i) sum_j w C(x, t_j) eta_i(t_j).
/// The sign of each eta_i is fixed so that its first non-negligible nodal
/// value is positive.
///
/// Instances are immutable and may be shared between threads.
class KLBasis {
 public:
  static KLBasis build(const MaternParams& params, std::size_t d, std::size_t quad_size);

  [[nodiscard]] std::size_t dimension() const { return eigenvalues_.size(); }
  [[nodiscard]] std::size_t quad_size() const { return static_cast<std::size_t>(nodal_.rows()); }
  [[nodiscard]] const MaternParams& params() const { return params_; }
  [[nodiscard]] std::span<const double> eigenvalues() const { return eigenvalues_; }
  /// quad_size x d matrix of eta_i(t_j).
  [[nodiscard]] const Eigen::MatrixXd& nodal_eigenfunctions() const { return nodal_; }
  [[nodiscard]] double node(std::size_t j) const;
  [[nodiscard]] double weight() const { return 1.0 / static_cast<double>(quad_size()); }

  /// points.size() x modes matrix of eta_i(x).
  [[nodiscard]] Eigen::MatrixXd eigenfunctions_at(std::span<const double> points,
                                                  std::size_t modes) const;
  /// points.size() x modes matrix of sqrt(xi_i) eta_i(x).
  [[nodiscard]] Eigen::MatrixXd scaled_modes_at(std::span<const double> points,
                                                std::size_t modes) const;

  void save(const std::filesystem::path& path) const;
  static KLBasis load(const std::filesystem::path& path);

 private:
  KLBasis(MaternParams params, std::vector<double> eigenvalues, Eigen::MatrixXd nodal);

  MaternParams params_;
  std::vector<double> eigenvalues_;
  Eigen::MatrixXd nodal_;
};

/// Cache file name for a basis configuration.
std::string kl_cache_key(const MaternParams& params, std::size_t d, std::size_t quad_size);

/// Loads the basis from cache_dir when a matching file exists, otherwise builds
/// it and writes the cache. An empty cache_dir disables caching.
std::shared_ptr<const KLBasis> load_or_build_kl_basis(const MaternParams& params, std::size_t d,
                                                      std::size_t quad_size,
                                                      const std::filesystem::path& cache_dir);

/// exp(sum_i sqrt(xi_i) eta_i(x) z_i) at each point; z.size() must equal basis.dimension().
std::vector<double> evaluate_field(const KLBasis& basis, std::span<const double> z,
                                   std::span<const double> points);

/// Field sampler bound to a fixed point set. Holds the points x modes matrix of
/// sqrt(xi_i) eta_i(x), so a realisation costs one matrix-vector product.
class FieldEvaluator {
 public:
  FieldEvaluator(const KLBasis& basis, std::vector<double> points);

  [[nodiscard]] std::size_t max_modes() const { return static_cast<std::size_t>(modes_.cols()); }
  [[nodiscard]] const std::vector<double>& points() const { return points_; }

  /// Uses the first z.size() modes (z.size() <= max_modes()).
  void log_field(std::span<const double> z, std::span<double> out) const;
  void field(std::span<const double> z, std::span<double> out) const;

 private:
  std::vector<double> points_;
  Eigen::MatrixXd modes_;
};

/// Cross-section values at the mesh midpoints of one realisation.
struct CrossSections {
  std::vector<double> sigma_s_mid;
  std::vector<double> sigma_a_mid;
  std::vector<double> sigma_mid;
  /// max_j sigma_S / sigma over midpoints.
  double rho = 0.0;

  static CrossSections from_scattering(std::vector<double> sigma_s, std::vector<double> sigma_a);
  [[nodiscard]] std::size_t size() const { return sigma_mid.size(); }
};

}  // namespace slabuq
