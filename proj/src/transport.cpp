#include "slabuq/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "slabuq/error.hpp"

namespace slabuq {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

Mesh Mesh::uniform(std::size_t m_cells) {
  if (m_cells < 1) throw ParameterError("mesh needs at least one cell");
  return Mesh{m_cells, 1.0 / static_cast<double>(m_cells)};
}

std::vector<double> Mesh::midpoints() const {
  std::vector<double> x(m_cells);
  for (std::size_t j = 0; j < m_cells; ++j) x[j] = midpoint(j);
  return x;
}

void gauss_legendre(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw ParameterError("Gauss-Legendre rule needs at least one node");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const double dn = static_cast<double>(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (dn + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double dk = static_cast<double>(k);
        const double p2 = ((2.0 * dk - 1.0) * x * p1 - (dk - 1.0) * p0) / dk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = dn * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // Re-evaluate the derivative at the converged root.
    double p0 = 1.0, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double dk = static_cast<double>(k);
      const double p2 = ((2.0 * dk - 1.0) * x * p1 - (dk - 1.0) * p0) / dk;
      p0 = p1;
      p1 = p2;
    }
    dp = dn * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
}

AngularQuadrature AngularQuadrature::gauss_legendre(std::size_t n_half) {
  std::vector<double> x, wx;
  slabuq::gauss_legendre(n_half, x, wx);
  AngularQuadrature q;
  q.n_half = n_half;
  q.mu.resize(2 * n_half);
  q.w.resize(2 * n_half);
  for (std::size_t k = 0; k < n_half; ++k) {
    q.mu[k] = 0.5 * (x[k] + 1.0);
    q.w[k] = 0.5 * wx[k];
    q.mu[n_half + k] = -q.mu[k];
    q.w[n_half + k] = q.w[k];
  }
  return q;
}

void DiscreteProblem::validate() const {
  const std::size_t m = mesh.m_cells;
  if (m < 1) throw ParameterError("mesh needs at least one cell");
  if (quad.n_half < 1 || quad.mu.size() != 2 * quad.n_half || quad.w.size() != 2 * quad.n_half)
    throw DimensionError("angular quadrature arrays do not match n_half");
  if (xs.sigma_mid.size() != m || xs.sigma_s_mid.size() != m || xs.sigma_a_mid.size() != m)
    throw DimensionError("cross-section arrays do not match the mesh");
  if (f_mid.size() != m) throw DimensionError("source array does not match the mesh");
}

DiscreteProblem DiscreteProblem::for_level(std::size_t m_cells, CrossSections xs, std::vector<double> f_mid) {
  DiscreteProblem p{Mesh::uniform(m_cells), AngularQuadrature::gauss_legendre(2 * m_cells), std::move(xs),
                    std::move(f_mid)};
  p.validate();
  return p;
}

double sweep_cost_units(std::size_t m_cells, std::size_t n_half) {
  return static_cast<double>(m_cells) * static_cast<double>(n_half);
}

double direct_cost_units(std::size_t m_cells, std::size_t n_half) {
  const double m = static_cast<double>(m_cells);
  return m * m * (m + static_cast<double>(n_half));
}

double iterative_cost_units(std::size_t m_cells, std::size_t n_half, std::size_t iterations) {
  return static_cast<double>(iterations + 1) * sweep_cost_units(m_cells, n_half);
}

SweepOperator::SweepOperator(const DiscreteProblem& problem) {
  problem.validate();
  const auto n = static_cast<Eigen::Index>(problem.quad.n_half);
  const auto m = static_cast<Eigen::Index>(problem.mesh.m_cells);
  Eigen::ArrayXd mu_over_h(n);
  w_.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double mu = problem.quad.mu[static_cast<std::size_t>(k)];
    if (!(mu > 0.0)) throw ParameterError("positive half of the angular rule must be > 0");
    mu_over_h(k) = mu / problem.mesh.h;
    w_(k) = problem.quad.w[static_cast<std::size_t>(k)];
  }
  a_.resize(n, m);
  b_.resize(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double s = problem.xs.sigma_mid[static_cast<std::size_t>(j)];
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericalError("total cross-section must be positive and finite");
    b_.col(j) = (mu_over_h + 0.5 * s).inverse();
    a_.col(j) = (mu_over_h - 0.5 * s) * b_.col(j);
  }
}

void SweepOperator::apply(std::span<const double> source, std::span<double> phi) const {
  const std::size_t m = size();
  if (source.size() != m || phi.size() != m) throw DimensionError("sweep source/flux size mismatch");
  Eigen::ArrayXd psi = Eigen::ArrayXd::Zero(a_.rows());
  Eigen::ArrayXd next(a_.rows());
  // mu > 0, left to right.
  for (std::size_t j = 0; j < m; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    next = a_.col(c) * psi + b_.col(c) * source[j];
    phi[j] = 0.25 * (w_ * (psi + next)).sum();
    psi.swap(next);
  }
  // mu < 0, right to left.
  psi.setZero();
  for (std::size_t j = m; j-- > 0;) {
    const auto c = static_cast<Eigen::Index>(j);
    next = a_.col(c) * psi + b_.col(c) * source[j];
    phi[j] += 0.25 * (w_ * (psi + next)).sum();
    psi.swap(next);
  }
}

std::vector<double> SweepOperator::apply(std::span<const double> source) const {
  std::vector<double> phi(source.size());
  apply(source, phi);
  return phi;
}

Eigen::MatrixXd SweepOperator::transfer_matrix() const {
  const auto m = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
  Eigen::ArrayXd psi(a_.rows()), next(a_.rows());
  for (Eigen::Index i = 0; i < m; ++i) {
    // Unit source in cell i: the first cell update is psi = b, then free streaming.
    psi = b_.col(i);
    g(i, i) += 0.25 * (w_ * psi).sum();
    for (Eigen::Index j = i + 1; j < m; ++j) {
      next = a_.col(j) * psi;
      g(j, i) += 0.25 * (w_ * (psi + next)).sum();
      psi.swap(next);
    }
    psi = b_.col(i);
    g(i, i) += 0.25 * (w_ * psi).sum();
    for (Eigen::Index j = i; j-- > 0;) {
      next = a_.col(j) * psi;
      g(j, i) += 0.25 * (w_ * (psi + next)).sum();
      psi.swap(next);
    }
  }
  return g;
}

Eigen::MatrixXd angular_flux(const DiscreteProblem& problem, std::span<const double> phi) {
  problem.validate();
  const std::size_t m = problem.mesh.m_cells;
  const std::size_t two_n = problem.quad.mu.size();
  if (phi.size() != m) throw DimensionError("scalar flux does not match the mesh");
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(two_n), static_cast<Eigen::Index>(m + 1));
  const double h = problem.mesh.h;
  for (std::size_t k = 0; k < two_n; ++k) {
    const double mu = problem.quad.mu[k];
    const auto row = static_cast<Eigen::Index>(k);
    if (mu > 0.0) {
      for (std::size_t j = 1; j <= m; ++j) {
        const double sh = 0.5 * problem.xs.sigma_mid[j - 1];
        const double s = problem.xs.sigma_s_mid[j - 1] * phi[j - 1] + problem.f_mid[j - 1];
        psi(row, static_cast<Eigen::Index>(j)) =
            ((mu / h - sh) * psi(row, static_cast<Eigen::Index>(j - 1)) + s) / (mu / h + sh);
      }
    } else {
      for (std::size_t j = m; j >= 1; --j) {
        const double sh = 0.5 * problem.xs.sigma_mid[j - 1];
        const double s = problem.xs.sigma_s_mid[j - 1] * phi[j - 1] + problem.f_mid[j - 1];
        psi(row, static_cast<Eigen::Index>(j - 1)) =
            ((-mu / h - sh) * psi(row, static_cast<Eigen::Index>(j)) + s) / (-mu / h + sh);
      }
    }
  }
  return psi;
}

std::vector<double> scalar_flux(const DiscreteProblem& problem, const Eigen::MatrixXd& psi) {
  const std::size_t m = problem.mesh.m_cells;
  const std::size_t two_n = problem.quad.w.size();
  if (static_cast<std::size_t>(psi.rows()) != two_n || static_cast<std::size_t>(psi.cols()) != m + 1)
    throw DimensionError("angular flux has wrong shape");
  std::vector<double> phi(m, 0.0);
  for (std::size_t j = 1; j <= m; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < two_n; ++k)
      acc += problem.quad.w[k] *
             (psi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) +
              psi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j - 1)));
    phi[j - 1] = 0.25 * acc;
  }
  return phi;
}

std::string_view to_string(SolverKind kind) { return kind == SolverKind::direct ? "direct" : "iterative"; }

FluxSolution solve_direct(const DiscreteProblem& problem) {
  const auto start = std::chrono::steady_clock::now();
  const SweepOperator op(problem);
  const std::size_t m = problem.mesh.m_cells;
  const Eigen::MatrixXd g = op.transfer_matrix();
  const Eigen::Map<const Eigen::VectorXd> f(problem.f_mid.data(), static_cast<Eigen::Index>(m));
  const Eigen::Map<const Eigen::VectorXd> sigma_s(problem.xs.sigma_s_mid.data(), static_cast<Eigen::Index>(m));
  const Eigen::VectorXd rhs = g * f;
  Eigen::MatrixXd schur = -g * sigma_s.asDiagonal();
  schur.diagonal().array() += 1.0;

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(schur);
  const double det_scale = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(det_scale > std::numeric_limits<double>::epsilon() * 1e-2))
    throw NumericalError("singular Schur complement (rho = " + std::to_string(problem.xs.rho) + ")");
  Eigen::VectorXd phi = lu.solve(rhs);

  const double residual = (schur * phi - rhs).cwiseAbs().maxCoeff();
  const double scale = rhs.cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual > 1e-10 * std::max(scale, std::numeric_limits<double>::min()))
    throw NumericalError("direct solve residual " + std::to_string(residual) + " too large (rho = " +
                         std::to_string(problem.xs.rho) + ")");

  FluxSolution sol;
  sol.phi_mid.assign(phi.data(), phi.data() + phi.size());
  sol.solver = SolverKind::direct;
  sol.cost_units = direct_cost_units(m, problem.quad.n_half);
  sol.rho = problem.xs.rho;
  sol.wall_seconds = seconds_since(start);
  return sol;
}

FluxSolution source_iteration(const DiscreteProblem& problem, std::size_t k_max, const IterationObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  const SweepOperator op(problem);
  const std::size_t m = problem.mesh.m_cells;
  std::vector<double> phi = op.apply(problem.f_mid);
  if (observer) observer(0, phi);
  std::vector<double> src(m);
  for (std::size_t k = 1; k <= k_max; ++k) {
    for (std::size_t j = 0; j < m; ++j) src[j] = problem.xs.sigma_s_mid[j] * phi[j] + problem.f_mid[j];
    op.apply(src, phi);
    if (observer) observer(k, phi);
  }
  FluxSolution sol;
  sol.phi_mid = std::move(phi);
  sol.solver = SolverKind::iterative;
  sol.iterations = k_max;
  sol.cost_units = iterative_cost_units(m, problem.quad.n_half, k_max);
  sol.rho = problem.xs.rho;
  sol.wall_seconds = seconds_since(start);
  return sol;
}

FluxSolution source_iteration_to_tolerance(const DiscreteProblem& problem, double tol, std::size_t k_max) {
  if (!(tol > 0.0)) throw ParameterError("tolerance must be positive");
  const auto start = std::chrono::steady_clock::now();
  const SweepOperator op(problem);
  const std::size_t m = problem.mesh.m_cells;
  std::vector<double> phi = op.apply(problem.f_mid);
  std::vector<double> src(m), next(m), diff(m);
  std::size_t k = 0;
  while (k < k_max) {
    for (std::size_t j = 0; j < m; ++j) src[j] = problem.xs.sigma_s_mid[j] * phi[j] + problem.f_mid[j];
    op.apply(src, next);
    ++k;
    for (std::size_t j = 0; j < m; ++j) diff[j] = next[j] - phi[j];
    phi.swap(next);
    if (discrete_l2_norm(diff) <= tol) break;
  }
  FluxSolution sol;
  sol.phi_mid = std::move(phi);
  sol.solver = SolverKind::iterative;
  sol.iterations = k;
  sol.cost_units = iterative_cost_units(m, problem.quad.n_half, k);
  sol.rho = problem.xs.rho;
  sol.wall_seconds = seconds_since(start);
  return sol;
}

std::size_t choose_iterations(double epsilon, double rho) {
  if (!(epsilon > 0.0)) throw ParameterError("solver tolerance must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw ParameterError("rho must lie in [0, 1)");
  if (rho == 0.0) return 1;
  const double k = std::ceil(std::log(2.0 * epsilon) / std::log(rho));
  if (!(k > 1.0)) return 1;
  if (k > 1e9) throw ParameterError("iteration count overflow (rho too close to 1)");
  return static_cast<std::size_t>(k);
}

FluxSolution hybrid_solve(const DiscreteProblem& problem, double epsilon) {
  const std::size_t k = choose_iterations(epsilon, problem.xs.rho);
  if (k < problem.mesh.m_cells) return source_iteration(problem, k);
  return solve_direct(problem);
}

double quantity_of_interest(const FluxSolution& sol) {
  if (sol.phi_mid.empty()) throw ParameterError("empty flux");
  double sum = 0.0, c = 0.0;
  for (double v : sol.phi_mid) {
    const double y = v - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum / static_cast<double>(sol.phi_mid.size());
}

double discrete_l2_norm(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double scale = max_abs(v);
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x / scale) * (x / scale);
  return scale * std::sqrt(acc / static_cast<double>(v.size()));
}

void write_flux_csv(const std::filesystem::path& path, const Mesh& mesh, const FluxSolution& sol,
                    std::string_view preamble) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write flux CSV: " + path.string());
  out.precision(17);
  out << preamble << "x,phi\n";
  for (std::size_t j = 0; j < sol.phi_mid.size(); ++j) out << mesh.midpoint(j) << ',' << sol.phi_mid[j] << '\n';
  if (!out) throw IoError("failed while writing flux CSV: " + path.string());
}

}  // namespace slabuq
