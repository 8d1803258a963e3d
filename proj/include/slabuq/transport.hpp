#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "slabuq/covariance.hpp"

namespace slabuq {

/// Uniform mesh of [0, 1] with M cells.
struct Mesh {
  std::size_t m_cells = 1;
  double h = 1.0;

  static Mesh uniform(std::size_t m_cells);
  [[nodiscard]] double midpoint(std::size_t j) const { return (static_cast<double>(j) + 0.5) * h; }
  [[nodiscard]] std::vector<double> midpoints() const;
};

/// Double Gauss-Legendre rule on [-1, 0) and (0, 1]. Entries 0..N-1 hold the
/// positive half in increasing order, entries N..2N-1 their mirror images.
struct AngularQuadrature {
  std::size_t n_half = 0;
  std::vector<double> mu;
  std::vector<double> w;

  static AngularQuadrature gauss_legendre(std::size_t n_half);
};

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
void gauss_legendre(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights);

/// One realisation of the diamond-differenced slab problem.
struct DiscreteProblem {
  Mesh mesh;
  AngularQuadrature quad;
  CrossSections xs;
  std::vector<double> f_mid;

  /// Throws DimensionError if array sizes disagree with the mesh.
  void validate() const;

  /// M = m_cells, N = 2M half-nodes.
  static DiscreteProblem for_level(std::size_t m_cells, CrossSections xs, std::vector<double> f_mid);
};

/// Cost units: one application of P T^{-1} (2N sweeps over M cells) costs M*N.
double sweep_cost_units(std::size_t m_cells, std::size_t n_half);
double direct_cost_units(std::size_t m_cells, std::size_t n_half);
double iterative_cost_units(std::size_t m_cells, std::size_t n_half, std::size_t iterations);

/// The map s -> P T^{-1} (s broadcast over all 2N directions) for one problem,
/// evaluated by sweeping left to right for mu > 0 and right to left for mu < 0.
/// O(MN) work per application; T^{-1} is never formed. The per-cell update
/// psi_j = a_{kj} psi_{j-1} + b_{kj} s_j is tabulated once per problem.
class SweepOperator {
 public:
  explicit SweepOperator(const DiscreteProblem& problem);

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(a_.cols()); }
  void apply(std::span<const double> source, std::span<double> phi) const;
  [[nodiscard]] std::vector<double> apply(std::span<const double> source) const;

  /// Dense M x M matrix G = P T^{-1}; column i is the response to a unit
  /// source in cell i, swept only where it is nonzero.
  [[nodiscard]] Eigen::MatrixXd transfer_matrix() const;

 private:
  Eigen::ArrayXXd a_;  // N x M, positive half of the rule
  Eigen::ArrayXXd b_;
  Eigen::ArrayXd w_;
};

/// Angular flux on the nodes: rows are directions (quadrature order), columns
/// the nodes x_0..x_M. Obtained from T psi = sigma_S phi + f by sweeping.
Eigen::MatrixXd angular_flux(const DiscreteProblem& problem, std::span<const double> phi);

/// Scalar flux P psi: phi_{j-1/2} = 1/2 sum_k w_k (psi_{k,j} + psi_{k,j-1}) / 2.
std::vector<double> scalar_flux(const DiscreteProblem& problem, const Eigen::MatrixXd& psi);

enum class SolverKind { direct, iterative };
std::string_view to_string(SolverKind kind);

struct FluxSolution {
  std::vector<double> phi_mid;
  SolverKind solver = SolverKind::direct;
  std::size_t iterations = 0;
  double cost_units = 0.0;
  double wall_seconds = 0.0;
  double rho = 0.0;
};

/// Solves (I - P T^{-1} Sigma_S) phi = P T^{-1} F by dense LU of the Schur
/// complement. Throws NumericalError if the factorisation is singular or the
/// residual exceeds 1e-10 relative to P T^{-1} F.
FluxSolution solve_direct(const DiscreteProblem& problem);

/// Called with (k, phi^{(k)}) after each iterate, k = 0..k_max.
using IterationObserver = std::function<void(std::size_t, std::span<const double>)>;

/// phi^{(0)} = P T^{-1} F, phi^{(k)} = P T^{-1} (Sigma_S phi^{(k-1)} + F).
FluxSolution source_iteration(const DiscreteProblem& problem, std::size_t k_max,
                              const IterationObserver& observer = {});

/// Diagnostic variant: iterates until the discrete L2 distance between
/// successive iterates is at most tol, or k_max iterations.
FluxSolution source_iteration_to_tolerance(const DiscreteProblem& problem, double tol, std::size_t k_max);

/// K = max{1, ceil(log(2 eps) / log rho)}; rho = 0 gives 1.
std::size_t choose_iterations(double epsilon, double rho);

/// Source iteration with K = choose_iterations(epsilon, rho) when K < M,
/// otherwise solve_direct.
FluxSolution hybrid_solve(const DiscreteProblem& problem, double epsilon);

/// (1/M) sum_j phi_{j-1/2}.
double quantity_of_interest(const FluxSolution& sol);

/// sqrt(h sum_j v_j^2).
double discrete_l2_norm(std::span<const double> v);

/// Writes "x,phi" rows at the midpoints, after `preamble` (verbatim).
void write_flux_csv(const std::filesystem::path& path, const Mesh& mesh, const FluxSolution& sol,
                    std::string_view preamble = {});

}  // namespace slabuq
