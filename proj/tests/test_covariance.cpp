#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "slabuq/covariance.hpp"
#include "slabuq/error.hpp"

namespace {

using namespace slabuq;

// Eigenvalues of exp(-theta |x - y|) on [0, 1], from the transcendental
// equations obtained after shifting the interval to [-1/2, 1/2]:
//   even modes: theta - omega tan(omega/2) = 0,  omega in (2m pi, (2m+1) pi)
//   odd modes:  omega + theta tan(omega/2) = 0,  omega in ((2m+1) pi, (2m+2) pi)
// and xi = 2 theta / (theta^2 + omega^2).
std::vector<double> exponential_kernel_eigenvalues(double lambda_c, std::size_t count) {
  const double theta = std::numbers::sqrt2 / lambda_c;
  const auto bisect = [](auto f, double lo, double hi) {
    double flo = f(lo);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = f(mid);
      if ((fm < 0) == (flo < 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  std::vector<double> omegas;
  const double pi = std::numbers::pi;
  const double tiny = 1e-13;
  for (std::size_t m = 0; omegas.size() < count + 2; ++m) {
    const double base = 2.0 * pi * static_cast<double>(m);
    omegas.push_back(
        bisect([&](double w) { return theta - w * std::tan(w / 2); }, base + tiny, base + pi - tiny));
    omegas.push_back(bisect([&](double w) { return w + theta * std::tan(w / 2); }, base + pi + tiny,
                            base + 2 * pi - tiny));
  }
  std::sort(omegas.begin(), omegas.end());
  std::vector<double> xi;
  for (std::size_t i = 0; i < count; ++i) xi.push_back(2 * theta / (theta * theta + omegas[i] * omegas[i]));
  return xi;
}

TEST(MaternCovariance, DiagonalIsVariance) {
  EXPECT_DOUBLE_EQ(matern_covariance(0.3, 0.3, field_params(FieldKind::matern15)), 1.0);
  EXPECT_DOUBLE_EQ(matern_covariance(0.7, 0.7, field_params(FieldKind::exponential, 0.5, 2.0)), 2.0);
  EXPECT_DOUBLE_EQ(matern_covariance(0.1, 0.1, field_params(FieldKind::gaussian)), 1.0);
}

TEST(MaternCovariance, ExponentialClosedForm) {
  EXPECT_NEAR(matern_covariance(0.0, 1.0, field_params(FieldKind::exponential)), std::exp(-std::sqrt(2.0)), 1e-15);
  EXPECT_NEAR(matern_covariance(0.0, 1.0, field_params(FieldKind::exponential)), 0.243117, 1e-6);
}

TEST(MaternCovariance, GaussianLimit) {
  EXPECT_NEAR(matern_covariance(0.0, 1.0, field_params(FieldKind::gaussian)), 0.367879, 1e-6);
}

TEST(MaternCovariance, HalfIntegerFormsMatchBessel) {
  // nu = 1.5 and 2.5 closed forms against the generic Bessel branch at nearby nu.
  for (double r : {0.05, 0.3, 0.9}) {
    MaternParams a;
    a.nu = 1.5;
    MaternParams b;
    b.nu = 1.5 + 1e-9;
    EXPECT_NEAR(matern_covariance(0.0, r, a), matern_covariance(0.0, r, b), 1e-7);
    a.nu = 2.5;
    b.nu = 2.5 + 1e-9;
    EXPECT_NEAR(matern_covariance(0.0, r, a), matern_covariance(0.0, r, b), 1e-7);
  }
}

TEST(MaternCovariance, Symmetric) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (FieldKind kind : {FieldKind::matern15, FieldKind::exponential, FieldKind::gaussian}) {
    const auto p = field_params(kind, 0.4, 1.3);
    for (int i = 0; i < 200; ++i) {
      const double x = u(rng), y = u(rng);
      EXPECT_EQ(matern_covariance(x, y, p), matern_covariance(y, x, p));
    }
  }
}

TEST(MaternCovariance, RejectsInvalidParameters) {
  MaternParams p;
  p.nu = 0.25;
  EXPECT_THROW(matern_covariance(0, 1, p), ParameterError);
  p = MaternParams{};
  p.lambda_c = 0.0;
  EXPECT_THROW(matern_covariance(0, 1, p), ParameterError);
  p = MaternParams{};
  p.sigma_var_sq = -1.0;
  EXPECT_THROW(matern_covariance(0, 1, p), ParameterError);
}

TEST(TruncationDimension, LevelRules) {
  EXPECT_EQ(truncation_dimension(FieldKind::matern15, 1.0 / 256), 2048u);
  EXPECT_EQ(truncation_dimension(FieldKind::exponential, 1.0 / 256), 3600u);
  EXPECT_EQ(truncation_dimension(FieldKind::matern15, 0.25), 32u);
  EXPECT_EQ(truncation_dimension(FieldKind::exponential, 0.25), 450u);
  EXPECT_EQ(truncation_dimension(FieldKind::exponential, 1.0 / 32), 1273u);
}

TEST(KLBasis, ExponentialKernelMatchesAnalyticEigenvalues) {
  const auto basis = KLBasis::build(field_params(FieldKind::exponential), 10, 512);
  const auto exact = exponential_kernel_eigenvalues(1.0, 10);
  double sum_nystrom = 0.0, sum_exact = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    sum_nystrom += basis.eigenvalues()[i];
    sum_exact += exact[i];
    EXPECT_NEAR(basis.eigenvalues()[i] / exact[i], 1.0, 1e-3) << "mode " << i;
  }
  EXPECT_NEAR(sum_nystrom / sum_exact, 1.0, 0.02);
}

TEST(KLBasis, LargestEigenvalueBoundedByVariance) {
  for (FieldKind kind : {FieldKind::matern15, FieldKind::exponential, FieldKind::gaussian}) {
    const auto basis = KLBasis::build(field_params(kind), 1, 256);
    EXPECT_LE(basis.eigenvalues()[0], 1.0);
    EXPECT_GT(basis.eigenvalues()[0], 0.0);
    EXPECT_NEAR(basis.nodal_eigenfunctions().col(0).squaredNorm() * basis.weight(), 1.0, 1e-8);
  }
}

class KLInvariants : public ::testing::TestWithParam<FieldKind> {};

TEST_P(KLInvariants, OrthonormalOrderedAndTraceBounded) {
  const auto p = field_params(GetParam(), 0.7, 1.5);
  const std::size_t d = GetParam() == FieldKind::gaussian ? 8 : 40;
  const auto basis = KLBasis::build(p, d, 320);
  const auto xi = basis.eigenvalues();
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    EXPECT_GT(xi[i], 0.0);
    if (i > 0) EXPECT_LE(xi[i], xi[i - 1]);
    trace += xi[i];
  }
  EXPECT_LE(trace, p.sigma_var_sq + 1e-8);
  const Eigen::MatrixXd gram =
      basis.weight() * basis.nodal_eigenfunctions().transpose() * basis.nodal_eigenfunctions();
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    EXPECT_NEAR(gram(i, i), 1.0, 1e-8);
    for (Eigen::Index j = 0; j < i; ++j) EXPECT_NEAR(gram(i, j), 0.0, 1e-6);
  }
}

TEST_P(KLInvariants, OddQuadratureMatchesEven) {
  // The odd size takes the dense path; both discretise the same operator.
  const auto p = field_params(GetParam());
  const auto even = KLBasis::build(p, 4, 400);
  const auto odd = KLBasis::build(p, 4, 401);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(even.eigenvalues()[i] / odd.eigenvalues()[i], 1.0, 1e-4);
}

TEST_P(KLInvariants, InterpolationReproducesNodalValues) {
  const auto basis = KLBasis::build(field_params(GetParam()), 5, 128);
  std::vector<double> nodes;
  for (std::size_t j = 0; j < 128; j += 9) nodes.push_back(basis.node(j));
  const Eigen::MatrixXd at = basis.eigenfunctions_at(nodes, 5);
  for (std::size_t p = 0; p < nodes.size(); ++p)
    for (Eigen::Index i = 0; i < 5; ++i)
      EXPECT_NEAR(at(static_cast<Eigen::Index>(p), i),
                  basis.nodal_eigenfunctions()(static_cast<Eigen::Index>(9 * p), i), 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Fields, KLInvariants,
                         ::testing::Values(FieldKind::matern15, FieldKind::exponential, FieldKind::gaussian));

TEST(KLBasis, GramIdentityForFiveModes) {
  const auto basis = KLBasis::build(field_params(FieldKind::exponential), 5, 512);
  const Eigen::MatrixXd gram =
      basis.weight() * basis.nodal_eigenfunctions().transpose() * basis.nodal_eigenfunctions();
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(KLBasis, NystromConvergesUnderRefinement) {
  const std::size_t d = 24;
  const auto coarse = KLBasis::build(field_params(FieldKind::matern15), d, 8 * d);
  const auto fine = KLBasis::build(field_params(FieldKind::matern15), d, 16 * d);
  for (std::size_t i = 0; i < d / 2; ++i)
    EXPECT_NEAR(coarse.eigenvalues()[i] / fine.eigenvalues()[i], 1.0, 1e-3) << "mode " << i;
}

TEST(KLBasis, MercerResidualDecreasesWithDimension) {
  const auto p = field_params(FieldKind::matern15);
  const auto basis = KLBasis::build(p, 64, 512);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs(50), ys(50);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = u(rng);
    ys[i] = u(rng);
  }
  const Eigen::MatrixXd ex = basis.eigenfunctions_at(xs, 64);
  const Eigen::MatrixXd ey = basis.eigenfunctions_at(ys, 64);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t d : {2, 4, 8, 16, 32, 64}) {
    double worst = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      double approx = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        approx += basis.eigenvalues()[i] * ex(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) *
                  ey(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
      worst = std::max(worst, std::abs(matern_covariance(xs[k], ys[k], p) - approx));
    }
    EXPECT_LT(worst, previous * 1.05) << "d = " << d;
    previous = worst;
  }
  EXPECT_LT(previous, 1e-3);
}

TEST(KLBasis, RejectsBadDimensions) {
  EXPECT_THROW(KLBasis::build(field_params(FieldKind::matern15), 0, 64), ParameterError);
  EXPECT_THROW(KLBasis::build(field_params(FieldKind::matern15), 65, 64), ParameterError);
}

TEST(KLBasis, SignConventionIsDeterministic) {
  const auto a = KLBasis::build(field_params(FieldKind::matern15), 6, 200);
  const auto b = KLBasis::build(field_params(FieldKind::matern15), 6, 200);
  EXPECT_TRUE(a.nodal_eigenfunctions() == b.nodal_eigenfunctions());
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_GT(a.nodal_eigenfunctions()(0, i), 0.0);
}

TEST(KLCache, RoundTripAndRebuildOnCorruption) {
  const auto dir = std::filesystem::temp_directory_path() / "slabuq-kl-cache-test";
  std::filesystem::remove_all(dir);
  const auto p = field_params(FieldKind::exponential);
  const auto built = load_or_build_kl_basis(p, 12, 96, dir);
  const auto file = dir / kl_cache_key(p, 12, 96);
  ASSERT_TRUE(std::filesystem::exists(file));
  const auto loaded = load_or_build_kl_basis(p, 12, 96, dir);
  EXPECT_TRUE(built->nodal_eigenfunctions() == loaded->nodal_eigenfunctions());
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(built->eigenvalues()[i], loaded->eigenvalues()[i]);

  { std::ofstream(file, std::ios::trunc) << "garbage"; }
  EXPECT_THROW(KLBasis::load(file), ParseError);
  const auto rebuilt = load_or_build_kl_basis(p, 12, 96, dir);
  EXPECT_TRUE(built->nodal_eigenfunctions() == rebuilt->nodal_eigenfunctions());
  std::filesystem::remove_all(dir);
}

TEST(EvaluateField, MeanFieldIsOne) {
  const auto basis = KLBasis::build(field_params(FieldKind::matern15), 8, 128);
  const std::vector<double> z(8, 0.0);
  for (double v : evaluate_field(basis, z, std::vector<double>{0.0, 0.3, 0.99})) EXPECT_EQ(v, 1.0);
}

TEST(EvaluateField, SingleTermExpansion) {
  const auto basis = KLBasis::build(field_params(FieldKind::matern15), 1, 128);
  const std::vector<double> x = {0.42};
  const double eta = basis.eigenfunctions_at(x, 1)(0, 0);
  EXPECT_NEAR(evaluate_field(basis, std::vector<double>{1.0}, x)[0],
              std::exp(std::sqrt(basis.eigenvalues()[0]) * eta), 1e-14);
}

TEST(EvaluateField, LogIsLinearInZAndPositive) {
  const auto basis = KLBasis::build(field_params(FieldKind::exponential), 16, 128);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  std::vector<double> z(16), z2(16);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = 3.0 * n01(rng);
    z2[i] = 2.0 * z[i];
  }
  const std::vector<double> x = {0.0, 0.123, 0.5, 0.77, 1.0};
  const auto a = evaluate_field(basis, z, x);
  const auto b = evaluate_field(basis, z2, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_GT(a[i], 0.0);
    EXPECT_NEAR(std::log(b[i]), 2.0 * std::log(a[i]), 1e-12 * (1 + std::abs(std::log(a[i]))));
  }
  EXPECT_THROW(evaluate_field(basis, std::vector<double>(15, 0.0), x), ParameterError);
}

TEST(FieldEvaluator, MatchesEvaluateFieldAndTruncates) {
  const auto basis = KLBasis::build(field_params(FieldKind::matern15), 10, 128);
  const std::vector<double> x = {0.05, 0.35, 0.65};
  const FieldEvaluator ev(basis, x);
  std::vector<double> z(10);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.3 * static_cast<double>(i) - 1.0;
  std::vector<double> out(3);
  ev.field(z, out);
  const auto ref = evaluate_field(basis, z, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], ref[i], 1e-13 * ref[i]);

  // Fewer modes equals zero-padding the rest.
  std::vector<double> head(z.begin(), z.begin() + 4), padded(10, 0.0);
  std::copy(head.begin(), head.end(), padded.begin());
  ev.field(head, out);
  const auto ref_pad = evaluate_field(basis, padded, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], ref_pad[i], 1e-13 * ref_pad[i]);
  EXPECT_THROW(ev.field(std::vector<double>(11, 0.0), out), DimensionError);
}

TEST(CrossSections, TotalAndRho) {
  const auto xs = CrossSections::from_scattering({0.5, 2.0, 1.0}, {1.0, 1.0, 1.0});
  EXPECT_EQ(xs.sigma_mid[0], 1.5);
  EXPECT_EQ(xs.sigma_mid[1], 3.0);
  EXPECT_DOUBLE_EQ(xs.rho, 2.0 / 3.0);
  EXPECT_GT(xs.rho, 0.0);
  EXPECT_LT(xs.rho, 1.0);
  EXPECT_THROW(CrossSections::from_scattering({1.0}, {0.0}), ParameterError);
  EXPECT_THROW(CrossSections::from_scattering({1.0, 1.0}, {1.0}), DimensionError);
  EXPECT_THROW(CrossSections::from_scattering({std::nan("")}, {1.0}), NumericalError);
}

}  // namespace
