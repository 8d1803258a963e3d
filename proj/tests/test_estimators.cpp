#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "slabuq/error.hpp"
#include "slabuq/estimators.hpp"
#include "slabuq/studies.hpp"

namespace {

using namespace slabuq;

std::vector<std::uint64_t> fixture_lattice(std::size_t d) {
  return load_generating_vector(std::filesystem::path(SLABUQ_DATA_DIR) / "lattice-fixture-64.txt", d);
}

// Q_l(z) = 1 + sum_{k <= l} 2^{-k} z_k, so Y_l = 2^{-l} z_l has mean 0 and
// variance 4^{-l}; the cost of level l is 2^l.
FunctionSampler geometric_sampler(std::size_t levels) {
  std::vector<std::size_t> dims;
  std::vector<double> costs;
  for (std::size_t l = 0; l < levels; ++l) {
    dims.push_back(l + 1);
    costs.push_back(std::exp2(static_cast<double>(l)));
  }
  return FunctionSampler(dims, costs, [](std::size_t level, std::span<const double> z) {
    double q = 1.0;
    for (std::size_t k = 0; k <= level; ++k) q += std::exp2(-static_cast<double>(k)) * z[k];
    return q;
  });
}

StudyConfig small_config() {
  StudyConfig c;
  c.max_level = 2;
  c.kl_cache_dir = SLABUQ_TEST_CACHE;
  return c;
}

// Integer minimiser of N0 C0 + N1 C1 subject to V0/N0 + V1/N1 <= budget.
double brute_force_cost(double v0, double v1, double c0, double c1, double budget) {
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t n0 = 1; n0 < 200000; ++n0) {
    const double rest = budget - v0 / static_cast<double>(n0);
    if (rest <= 0.0) continue;
    const double n1 = std::ceil(v1 / rest - 1e-12);
    best = std::min(best, static_cast<double>(n0) * c0 + n1 * c1);
    if (static_cast<double>(n0) * c0 > best) break;
  }
  return best;
}

}  // namespace

TEST(Accumulator, MatchesTwoPassWithLargeOffset) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(5000);
  for (auto& v : x) v = 1e9 + g(rng);
  Accumulator a;
  for (double v : x) a.add(v);
  long double mean = 0.0L;
  for (double v : x) mean += v;
  mean /= x.size();
  long double ss = 0.0L;
  for (double v : x) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(a.mean(), static_cast<double>(mean), 1e-6);
  EXPECT_NEAR(a.variance(), static_cast<double>(ss / (x.size() - 1)), 1e-9);
  EXPECT_EQ(a.count(), 5000u);
}

TEST(Accumulator, MergeEqualsSequential) {
  Accumulator all, left, right;
  for (int i = 0; i < 100; ++i) {
    const double v = std::sin(i) * 3.0 + 7.0;
    all.add(v);
    (i < 37 ? left : right).add(v);
  }
  left.merge(right);
  EXPECT_EQ(left.count(), all.count());
  EXPECT_NEAR(left.mean(), all.mean(), 1e-14);
  EXPECT_NEAR(left.variance(), all.variance(), 1e-13);
}

TEST(Accumulator, FewValues) {
  Accumulator a;
  EXPECT_EQ(a.variance(), 0.0);
  a.add(2.5);
  EXPECT_EQ(a.mean(), 2.5);
  EXPECT_EQ(a.variance(), 0.0);
}

TEST(ParallelMap, KeepsIndexOrder) {
  const auto v = parallel_map<std::uint64_t>(10, 1010, 4, [](std::uint64_t i) { return i * i; });
  ASSERT_EQ(v.size(), 1000u);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], (i + 10) * (i + 10));
}

TEST(ParallelMap, RethrowsWorkerException) {
  EXPECT_THROW(parallel_map<int>(0, 100, 3,
                                 [](std::uint64_t i) -> int {
                                   if (i == 57) throw NumericalError("boom");
                                   return 0;
                                 }),
               NumericalError);
}

TEST(McEstimate, ConstantIntegrand) {
  const auto s = FunctionSampler::constant(3.25);
  const auto r = mc_estimate(s, 0, 64, 1);
  EXPECT_EQ(r.estimate, 3.25);
  EXPECT_EQ(r.variance, 0.0);
  EXPECT_EQ(r.levels.at(0).n_samples, 64u);
}

TEST(McEstimate, StandardNormalMoments) {
  const FunctionSampler s({1}, {1.0}, [](std::size_t, std::span<const double> z) { return z[0]; });
  const auto r = mc_estimate(s, 0, 20000, 99);
  EXPECT_NEAR(r.levels[0].var_y, 1.0, 0.05);
  EXPECT_NEAR(r.variance, r.levels[0].var_y / 20000.0, 1e-15);
  EXPECT_LT(std::abs(r.estimate), 4.0 * std::sqrt(r.variance));
  EXPECT_DOUBLE_EQ(r.total_cost_units, 20000.0);
}

TEST(McEstimate, Errors) {
  const auto s = FunctionSampler::constant(1.0);
  EXPECT_THROW(mc_estimate(s, 0, 1, 1), ParameterError);
  EXPECT_THROW(mc_estimate(s, 1, 10, 1), ParameterError);
}

TEST(McEstimate, RedrawsOnceAfterSolverFailure) {
  const FunctionSampler flaky({1}, {1.0}, [](std::size_t, std::span<const double> z) {
    if (z[0] > 2.5) throw NumericalError("synthetic failure");
    return z[0];
  });
  const auto r = mc_estimate(flaky, 0, 1000, 3);
  EXPECT_GT(r.levels[0].retries, 0u);
  const FunctionSampler broken({1}, {1.0}, [](std::size_t, std::span<const double>) -> double {
    throw NumericalError("always");
  });
  EXPECT_THROW(mc_estimate(broken, 0, 4, 3), NumericalError);
}

TEST(QmcEstimate, ConstantIntegrand) {
  const auto s = FunctionSampler::constant(-2.0, 1, 4);
  const LatticeRule rule(fixture_lattice(4), 4, 32, 8, 11);
  const auto r = qmc_estimate(s, 0, rule);
  EXPECT_EQ(r.estimate, -2.0);
  EXPECT_EQ(r.variance, 0.0);
  EXPECT_EQ(r.levels[0].shifts, 8u);
  EXPECT_EQ(r.levels[0].shift_means.size(), 8u);
}

TEST(QmcEstimate, VarianceFromShiftMeansOnly) {
  const FunctionSampler s({2}, {1.0}, [](std::size_t, std::span<const double> z) { return z[0] * z[0] + z[1]; });
  const LatticeRule rule(fixture_lattice(2), 2, 64, 8, 4);
  const auto r = qmc_estimate(s, 0, rule);
  Accumulator means;
  for (double m : r.levels[0].shift_means) means.add(m);
  EXPECT_NEAR(r.estimate, means.mean(), 1e-14);
  EXPECT_NEAR(r.variance, means.variance() / 8.0, 1e-16);
  EXPECT_GE(r.variance, 0.0);
}

TEST(QmcEstimate, UnbiasedOverShiftDraws) {
  const FunctionSampler s({3}, {1.0}, [](std::size_t, std::span<const double> z) {
    return z[0] * z[0] + std::exp(0.5 * z[1]) + z[2];
  });
  const double exact = 1.0 + std::exp(0.125);
  Accumulator estimates;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const LatticeRule rule(fixture_lattice(3), 3, 16, 2, 1000 + seed);
    estimates.add(qmc_estimate(s, 0, rule).estimate);
  }
  const double se = std::sqrt(estimates.variance() / static_cast<double>(estimates.count()));
  EXPECT_LT(std::abs(estimates.mean() - exact), 3.0 * se);
}

TEST(QmcEstimate, Errors) {
  const auto s = FunctionSampler::constant(1.0, 1, 8);
  EXPECT_THROW(qmc_estimate(s, 0, LatticeRule(fixture_lattice(4), 4, 8, 4, 1)), DimensionError);
  EXPECT_THROW(qmc_estimate(s, 0, LatticeRule(fixture_lattice(8), 8, 8, 1, 1)), ParameterError);
  AdaptiveOptions opt;
  opt.generating_vector = fixture_lattice(4);
  EXPECT_THROW(qmc_to_tolerance(s, 0, 0.1, 1, opt), DimensionError);
}

TEST(OptimalSampleCounts, SingleLevel) {
  const std::vector<double> v{1.0}, c{1.0};
  const auto n = optimal_sample_counts(v, c, 0.1);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0], 200u);
}

TEST(OptimalSampleCounts, TwoLevelExample) {
  const std::vector<double> v{1.0, 0.25}, c{1.0, 4.0};
  const auto n = optimal_sample_counts(v, c, 0.1);
  EXPECT_EQ(n, (std::vector<std::uint64_t>{400, 100}));
}

TEST(OptimalSampleCounts, Homogeneity) {
  const std::vector<double> v{2.0, 0.5, 0.1}, c{1.0, 3.0, 9.0};
  std::vector<double> c4 = c;
  for (auto& x : c4) x *= 4.0;
  const auto n = optimal_sample_counts(v, c, 0.01);
  const auto n4 = optimal_sample_counts(v, c4, 0.01);
  const auto half = optimal_sample_counts(v, c, 0.005);
  for (std::size_t l = 0; l < v.size(); ++l) {
    EXPECT_LE(std::max(n[l], n4[l]) - std::min(n[l], n4[l]), 1u);
    EXPECT_LE(std::abs(static_cast<double>(half[l]) - 4.0 * static_cast<double>(n[l])), 4.0);
  }
}

TEST(OptimalSampleCounts, MatchesBruteForceOnSmallGrid) {
  const std::vector<double> grid{0.25, 1.0, 4.0};
  for (double two_over_eps2 : {50.0, 200.0}) {
    const double eps = std::sqrt(2.0 / two_over_eps2);
    const double budget = 0.5 * eps * eps;
    for (double v0 : grid)
      for (double v1 : grid)
        for (double c0 : grid)
          for (double c1 : grid) {
            const std::vector<double> v{v0, v1}, c{c0, c1};
            const auto n = optimal_sample_counts(v, c, eps);
            const double var = v0 / static_cast<double>(n[0]) + v1 / static_cast<double>(n[1]);
            EXPECT_LE(var, budget * (1.0 + 1e-12));
            const double cost = static_cast<double>(n[0]) * c0 + static_cast<double>(n[1]) * c1;
            const double best = brute_force_cost(v0, v1, c0, c1, budget);
            EXPECT_GE(cost, best - 1e-9);
            EXPECT_LE(cost, best + c0 + c1) << "V=(" << v0 << "," << v1 << ") C=(" << c0 << "," << c1 << ")";
          }
  }
}

TEST(OptimalSampleCounts, Errors) {
  const std::vector<double> v{1.0, 0.0}, c{1.0, 1.0}, c3{1.0, 1.0, 1.0};
  EXPECT_THROW(optimal_sample_counts(v, c, 0.1), ParameterError);
  EXPECT_THROW(optimal_sample_counts(c, c, 0.0), ParameterError);
  EXPECT_THROW(optimal_sample_counts(v, c3, 0.1), DimensionError);
}

TEST(RefinementLevel, PicksLargestVarianceCostRatio) {
  const std::vector<double> v{3.0, 1.0}, c{1.0, 1.0};
  EXPECT_EQ(refinement_level(v, c), 0u);
  const std::vector<double> v2{1.0, 1.0, 1.0}, c2{4.0, 1.0, 2.0};
  EXPECT_EQ(refinement_level(v2, c2), 1u);
}

TEST(AdaptiveAllocate, ConstantIntegrandStopsImmediately) {
  const auto s = FunctionSampler::constant(2.0, 3, 1);
  const auto r = adaptive_allocate(s, 2, 1e-3, 1, MultilevelMode::mlmc);
  EXPECT_DOUBLE_EQ(r.estimate, 2.0);
  EXPECT_EQ(r.variance, 0.0);
  EXPECT_TRUE(r.converged);
  for (const auto& l : r.levels) EXPECT_EQ(l.n_samples, 16u);
}

TEST(AdaptiveAllocate, MlmcMeetsToleranceAndEquilibrates) {
  const auto s = geometric_sampler(5);
  const double eps = 0.01;
  const auto r = adaptive_allocate(s, 4, eps, 17, MultilevelMode::mlmc);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.variance, 0.5 * eps * eps);
  EXPECT_LE(equilibration_ratio(r), 4.0);
  EXPECT_LT(std::abs(r.estimate - 1.0), 4.0 * std::sqrt(r.variance));
  // Y_l has variance 4^{-l} and cost 2^l, so N_l should fall roughly like 2^{-3l/2}.
  EXPECT_GT(r.levels[0].n_samples, r.levels[4].n_samples);
}

TEST(AdaptiveAllocate, MlqmcMeetsTolerance) {
  const auto s = geometric_sampler(5);
  AdaptiveOptions opt;
  opt.generating_vector = fixture_lattice(5);
  const double eps = 0.003;
  const auto r = adaptive_allocate(s, 4, eps, 23, MultilevelMode::mlqmc, opt);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.variance, 0.5 * eps * eps);
  for (const auto& l : r.levels) {
    EXPECT_EQ(l.shifts, 8u);
    EXPECT_EQ(l.n_samples & (l.n_samples - 1), 0u);
  }
}

TEST(AdaptiveAllocate, TelescopesToFinestLevel) {
  const FunctionSampler s({1, 1, 1, 1}, {1.0, 2.0, 4.0, 8.0}, [](std::size_t level, std::span<const double>) {
    return 1.0 - std::exp2(-static_cast<double>(level) - 1.0);
  });
  const auto r = adaptive_allocate(s, 3, 1e-3, 1, MultilevelMode::mlmc);
  EXPECT_NEAR(r.estimate, 1.0 - 1.0 / 16.0, 1e-15);
}

TEST(AdaptiveAllocate, EstimateIsSumOfIndependentlyRecomputedLevelMeans) {
  const auto s = geometric_sampler(3);
  const std::uint64_t seed = 8;
  const auto r = adaptive_allocate(s, 2, 0.02, seed, MultilevelMode::mlmc);
  double total = 0.0;
  for (std::size_t l = 0; l <= 2; ++l) {
    long double sum = 0.0L;
    const std::uint64_t n = r.levels[l].n_samples;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::vector<double> z(s.dimension(l));
      gaussian_vector(derive_seed(seed, static_cast<std::uint64_t>(StreamId::mlmc), l, i), z);
      sum += s.sample_y(l, z).value;
    }
    const double mean = static_cast<double>(sum / n);
    EXPECT_NEAR(r.levels[l].mean_y, mean, 1e-14 * (1.0 + std::abs(mean)));
    total += r.levels[l].mean_y;
  }
  EXPECT_EQ(r.estimate, total);
}

TEST(AdaptiveAllocate, SingleLevelHierarchyIsPlainMc) {
  const FunctionSampler s({1}, {1.0}, [](std::size_t, std::span<const double> z) { return 2.0 + z[0]; });
  const double eps = 0.05;
  const auto r = adaptive_allocate(s, 0, eps, 5, MultilevelMode::mlmc);
  ASSERT_EQ(r.levels.size(), 1u);
  const auto& l = r.levels[0];
  EXPECT_EQ(r.estimate, l.mean_y);
  EXPECT_DOUBLE_EQ(r.variance, l.var_y / static_cast<double>(l.n_samples));
  EXPECT_LE(r.variance, 0.5 * eps * eps);
  EXPECT_EQ(l.n_samples % 16, 0u);
  EXPECT_EQ((l.n_samples / 16) & (l.n_samples / 16 - 1), 0u);
  EXPECT_LT(std::abs(r.estimate - 2.0), 4.0 * std::sqrt(r.variance));
}

TEST(AdaptiveAllocate, BudgetCapFlagsNonConverged) {
  const auto s = geometric_sampler(3);
  AdaptiveOptions opt;
  opt.run.max_cost_units = 500.0;
  const auto r = adaptive_allocate(s, 2, 1e-4, 1, MultilevelMode::mlmc, opt);
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.total_cost_units, 500.0);
  EXPECT_GT(r.variance, 0.5e-8);
}

TEST(AdaptiveAllocate, Errors) {
  const auto s = geometric_sampler(2);
  AdaptiveOptions opt;
  opt.initial_n = 1;
  EXPECT_THROW(adaptive_allocate(s, 1, 0.1, 1, MultilevelMode::mlmc, opt), ParameterError);
  EXPECT_THROW(adaptive_allocate(s, 1, 0.0, 1, MultilevelMode::mlmc), ParameterError);
  EXPECT_THROW(adaptive_allocate(s, 2, 0.1, 1, MultilevelMode::mlmc), ParameterError);
  opt.initial_n = 12;
  opt.generating_vector = fixture_lattice(2);
  EXPECT_THROW(adaptive_allocate(s, 1, 0.1, 1, MultilevelMode::mlqmc, opt), ParameterError);
}

TEST(ToTolerance, McAndQmcMeetTarget) {
  const FunctionSampler s({2}, {1.0}, [](std::size_t, std::span<const double> z) { return std::exp(0.3 * z[0]) + z[1]; });
  const double eps = 0.02;
  const auto mc = mc_to_tolerance(s, 0, eps, 9, 128);
  EXPECT_TRUE(mc.converged);
  EXPECT_LE(mc.variance, 0.5 * eps * eps);
  AdaptiveOptions opt;
  opt.generating_vector = fixture_lattice(2);
  const auto qmc = qmc_to_tolerance(s, 0, eps, 9, opt);
  EXPECT_TRUE(qmc.converged);
  EXPECT_LE(qmc.variance, 0.5 * eps * eps);
  EXPECT_LT(qmc.total_cost_units, mc.total_cost_units);
}

TEST(Determinism, IndependentOfWorkerCount) {
  const auto s = geometric_sampler(4);
  AdaptiveOptions one, four;
  one.generating_vector = four.generating_vector = fixture_lattice(4);
  four.run.workers = 4;
  for (auto mode : {MultilevelMode::mlmc, MultilevelMode::mlqmc}) {
    const auto a = adaptive_allocate(s, 3, 0.01, 42, mode, one);
    const auto b = adaptive_allocate(s, 3, 0.01, 42, mode, four);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.variance, b.variance);
    EXPECT_EQ(a.total_cost_units, b.total_cost_units);
    for (std::size_t l = 0; l < a.levels.size(); ++l) EXPECT_EQ(a.levels[l].n_samples, b.levels[l].n_samples);
  }
  EXPECT_EQ(mc_estimate(s, 2, 1000, 7).estimate, mc_estimate(s, 2, 1000, 7, RunOptions{3, 0.0}).estimate);
}

TEST(FitRate, ExactPowerLaws) {
  const std::vector<double> h{0.25, 0.125, 0.0625, 0.03125};
  std::vector<double> sq, inv;
  for (double x : h) {
    sq.push_back(x * x);
    inv.push_back(7.0 * std::pow(x, -1.5));
  }
  const auto a = fit_rate(h, sq);
  EXPECT_NEAR(a.slope, 2.0, 1e-12);
  EXPECT_NEAR(a.intercept, 0.0, 1e-12);
  EXPECT_NEAR(a.residual, 0.0, 1e-12);
  const auto b = fit_rate(h, inv);
  EXPECT_NEAR(b.slope, -1.5, 1e-12);
  EXPECT_NEAR(b.intercept, std::log2(7.0), 1e-12);
  EXPECT_NEAR(b.slope_se, 0.0, 1e-10);
}

TEST(FitRate, NoisyDataHasPositiveStandardError) {
  const std::vector<double> x{1, 2, 4, 8, 16}, y{1.1, 1.9, 4.3, 7.6, 16.5};
  const auto f = fit_rate(x, y);
  EXPECT_NEAR(f.slope, 1.0, 0.05);
  EXPECT_GT(f.slope_se, 0.0);
  EXPECT_GT(f.residual, 0.0);
}

TEST(FitRate, Errors) {
  const std::vector<double> two{1, 2}, three{1, 2, 4}, bad{1, -2, 4}, same{2, 2, 2};
  EXPECT_THROW(fit_rate(two, two), ParameterError);
  EXPECT_THROW(fit_rate(three, bad), DomainError);
  EXPECT_THROW(fit_rate(same, three), DomainError);
  EXPECT_THROW(fit_rate(three, two), DimensionError);
}

TEST(LevelHierarchy, Sizes) {
  const LevelHierarchy h{FieldKind::matern15, 0.25, 3};
  EXPECT_EQ(h.cells(0), 4u);
  EXPECT_EQ(h.cells(3), 32u);
  EXPECT_EQ(h.half_angles(3), 64u);
  EXPECT_DOUBLE_EQ(h.h(2), 1.0 / 16.0);
  EXPECT_EQ(h.dimension(3), truncation_dimension(FieldKind::matern15, 1.0 / 32.0));
  EXPECT_THROW((LevelHierarchy{FieldKind::matern15, 0.3, 1}.validate()), ParameterError);
}

TEST(SlabTransportSampler, DifferenceUsesSameRealisation) {
  const auto config = small_config();
  const auto s = make_sampler(config, 2, {1e-10});
  std::vector<double> z(s->dimension(2));
  gaussian_vector(123, z);
  const double fine = s->sample_q(2, z).value;
  const double coarse = s->sample_q(1, z).value;
  const auto y = s->sample_y(2, z);
  EXPECT_EQ(y.value, fine - coarse);
  EXPECT_GT(y.cost_units, s->sample_q(2, z).cost_units);
  EXPECT_EQ(s->sample_y(0, z).value, s->sample_q(0, z).value);
}

TEST(SlabTransportSampler, MeanFieldIsDeterministic) {
  const auto config = small_config();
  const auto s = make_sampler(config, 2, {1e-10});
  const std::vector<double> z(s->dimension(2), 0.0);
  const auto p = s->problem(2, z);
  for (double v : p.xs.sigma_s_mid) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_EQ(s->sample_q(2, z).value, s->sample_q(2, z).value);
  const auto direct = solve_direct(p);
  EXPECT_NEAR(s->sample_q(2, z).value, quantity_of_interest(direct), 1e-9);
}

TEST(SlabTransportSampler, PerLevelSolverTolerance) {
  const auto config = small_config();
  const auto s = make_sampler(config, 2, {1e-2, 1e-4, 1e-6});
  EXPECT_DOUBLE_EQ(s->solver_epsilon(0), 1e-2);
  EXPECT_DOUBLE_EQ(s->solver_epsilon(2), 1e-6);
  EXPECT_THROW(s->set_solver_epsilon({1e-3, 1e-3}), DimensionError);
  EXPECT_THROW(s->set_solver_epsilon({-1.0}), ParameterError);
  EXPECT_THROW((void)s->dimension(3), ParameterError);
}

TEST(SlabTransportSampler, DeterministicAcrossWorkers) {
  const auto config = small_config();
  const auto s = make_sampler(config, 2, {1e-6});
  AdaptiveOptions one, three;
  three.run.workers = 3;
  const auto a = adaptive_allocate(*s, 2, 2e-3, 77, MultilevelMode::mlmc, one);
  const auto b = adaptive_allocate(*s, 2, 2e-3, 77, MultilevelMode::mlmc, three);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.variance, b.variance);
  EXPECT_EQ(a.total_cost_units, b.total_cost_units);
  EXPECT_LE(a.variance, 0.5 * 4e-6);
}

TEST(EstimatorReport, MseProxyAndOutputs) {
  const auto s = geometric_sampler(3);
  auto r = adaptive_allocate(s, 2, 0.05, 1, MultilevelMode::mlmc);
  EXPECT_DOUBLE_EQ(r.mse_proxy(), r.variance);
  r.bias_proxy = 0.01;
  EXPECT_DOUBLE_EQ(r.mse_proxy(), 1e-4 + r.variance);
  r.config["seed"] = "1";
  const std::string json = r.to_json();
  EXPECT_NE(json.find("\"method\""), std::string::npos);
  EXPECT_NE(json.find("\"levels\""), std::string::npos);
  EXPECT_FALSE(r.to_text().empty());
  const auto path = std::filesystem::temp_directory_path() / "slabuq_levels_test.csv";
  r.write_level_csv(path);
  EXPECT_EQ(check_csv(path), "levels");
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "# seed=1");
  std::filesystem::remove(path);
}
