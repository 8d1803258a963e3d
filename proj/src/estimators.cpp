#include "slabuq/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "slabuq/error.hpp"

namespace slabuq {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double pow2(int k) { return std::ldexp(1.0, k); }

std::uint64_t stream_value(StreamId id) { return static_cast<std::uint64_t>(id); }

}  // namespace

// ---------------------------------------------------------------------------
// Level hierarchy and samplers

void LevelHierarchy::validate() const {
  if (!(h0 > 0.0) || !(h0 <= 1.0)) throw ParameterError("h0 must lie in (0, 1]");
  const double m0 = 1.0 / h0;
  if (std::abs(m0 - std::round(m0)) > 1e-12) throw ParameterError("1/h0 must be an integer");
  if (max_level > 20) throw ParameterError("max_level above 20 is not supported");
}

double LevelHierarchy::h(std::size_t level) const { return h0 * pow2(-static_cast<int>(level)); }

std::size_t LevelHierarchy::cells(std::size_t level) const {
  return static_cast<std::size_t>(std::llround(1.0 / h0)) << level;
}

std::size_t LevelHierarchy::dimension(std::size_t level) const { return truncation_dimension(field, h(level)); }

SampleResult LevelSampler::sample_y(std::size_t level, std::span<const double> z) const {
  SampleResult fine = sample_q(level, z);
  if (level == 0) return fine;
  const SampleResult coarse = sample_q(level - 1, z);
  fine.value -= coarse.value;
  fine.cost_units += coarse.cost_units;
  fine.wall_seconds += coarse.wall_seconds;
  return fine;
}

FunctionSampler::FunctionSampler(std::vector<std::size_t> dimensions, std::vector<double> costs, Function fn)
    : dims_(std::move(dimensions)), costs_(std::move(costs)), fn_(std::move(fn)) {
  if (dims_.empty()) throw ParameterError("FunctionSampler needs at least one level");
  if (costs_.size() != dims_.size()) throw DimensionError("one cost per level is required");
  if (!fn_) throw ParameterError("FunctionSampler needs a callback");
}

FunctionSampler FunctionSampler::constant(double c, std::size_t levels, std::size_t dimension) {
  return FunctionSampler(std::vector<std::size_t>(levels, dimension), std::vector<double>(levels, 1.0),
                         [c](std::size_t, std::span<const double>) { return c; });
}

std::size_t FunctionSampler::dimension(std::size_t level) const { return dims_.at(level); }

SampleResult FunctionSampler::sample_q(std::size_t level, std::span<const double> z) const {
  if (level >= dims_.size()) throw ParameterError("level out of range");
  const auto start = Clock::now();
  SampleResult r;
  r.value = fn_(level, z);
  r.cost_units = costs_[level];
  r.wall_seconds = seconds_since(start);
  return r;
}

SlabTransportSampler::SlabTransportSampler(LevelHierarchy hierarchy, SlabModel model,
                                           std::shared_ptr<const KLBasis> basis, std::vector<double> solver_epsilon)
    : hierarchy_(hierarchy), model_(model), basis_(std::move(basis)) {
  hierarchy_.validate();
  model_.field.validate();
  if (!basis_) throw ParameterError("KL basis is required");
  if (!(model_.sigma_a > 0.0)) throw ParameterError("sigma_a must be positive");
  if (basis_->dimension() < dimension(hierarchy_.max_level))
    throw DimensionError("KL basis has fewer modes than the finest level needs");
  set_solver_epsilon(std::move(solver_epsilon));
  for (std::size_t l = 0; l <= hierarchy_.max_level; ++l) {
    evaluators_.emplace_back(*basis_, Mesh::uniform(hierarchy_.cells(l)).midpoints());
    quads_.push_back(AngularQuadrature::gauss_legendre(hierarchy_.half_angles(l)));
  }
}

void SlabTransportSampler::set_solver_epsilon(std::vector<double> eps) {
  if (eps.size() == 1) eps.assign(hierarchy_.max_level + 1, eps.front());
  if (eps.size() != hierarchy_.max_level + 1) throw DimensionError("one solver tolerance per level is required");
  for (double e : eps)
    if (!(e > 0.0)) throw ParameterError("solver tolerance must be positive");
  eps_ = std::move(eps);
}

std::size_t SlabTransportSampler::dimension(std::size_t level) const {
  if (level > hierarchy_.max_level) throw ParameterError("level out of range");
  return hierarchy_.dimension(level);
}

DiscreteProblem SlabTransportSampler::problem(std::size_t level, std::span<const double> z) const {
  if (level > hierarchy_.max_level) throw ParameterError("level out of range");
  const std::size_t m = hierarchy_.cells(level);
  std::vector<double> sigma_s(m);
  evaluators_[level].field(z, sigma_s);
  DiscreteProblem p{Mesh::uniform(m), quads_[level],
                    CrossSections::from_scattering(std::move(sigma_s), std::vector<double>(m, model_.sigma_a)),
                    std::vector<double>(m, model_.source)};
  p.validate();
  return p;
}

FluxSolution SlabTransportSampler::solve(std::size_t level, std::span<const double> z) const {
  return hybrid_solve(problem(level, z), eps_.at(level));
}

SampleResult SlabTransportSampler::sample_q(std::size_t level, std::span<const double> z) const {
  const auto start = Clock::now();
  const FluxSolution sol = solve(level, z);
  SampleResult r;
  r.value = quantity_of_interest(sol);
  r.cost_units = sol.cost_units;
  r.wall_seconds = seconds_since(start);
  return r;
}

// ---------------------------------------------------------------------------
// Accumulation

void Accumulator::Kahan::add(double x) {
  const double y = x - c;
  const double t = sum + y;
  c = (t - sum) - y;
  sum = t;
}

void Accumulator::add(double x) {
  if (n_ == 0) shift_ = x;
  ++n_;
  const double d = x - shift_;
  s1_.add(d);
  s2_.add(d * d);
}

void Accumulator::merge(const Accumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  // Re-centre the other sums on this shift.
  const double delta = other.shift_ - shift_;
  const double n = static_cast<double>(other.n_);
  s1_.add(other.s1_.sum + n * delta);
  s2_.add(other.s2_.sum + 2.0 * delta * other.s1_.sum + n * delta * delta);
  n_ += other.n_;
}

double Accumulator::mean() const {
  if (n_ == 0) return 0.0;
  return shift_ + s1_.sum / static_cast<double>(n_);
}

double Accumulator::variance() const {
  if (n_ < 2) return 0.0;
  const double n = static_cast<double>(n_);
  return std::max(0.0, (s2_.sum - s1_.sum * s1_.sum / n) / (n - 1.0));
}

double LevelStats::cost_per_sample() const {
  const double total = static_cast<double>(n_samples) * static_cast<double>(std::max<std::size_t>(shifts, 1));
  return total > 0.0 ? cost_units / total : 0.0;
}

// ---------------------------------------------------------------------------
// Reports

double EstimatorReport::mse_proxy() const {
  const double b = bias_proxy.value_or(0.0);
  return b * b + variance;
}

std::string EstimatorReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["estimate"] = estimate;
  j["variance"] = variance;
  j["epsilon"] = epsilon;
  if (bias_proxy) j["bias_proxy"] = *bias_proxy;
  j["mse_proxy"] = mse_proxy();
  j["total_cost_units"] = total_cost_units;
  j["wall_seconds"] = wall_seconds;
  j["converged"] = converged;
  auto& levels_json = j["levels"] = nlohmann::ordered_json::array();
  for (const auto& s : levels) {
    nlohmann::ordered_json l;
    l["level"] = s.level;
    l["h"] = s.h;
    l["d"] = s.dimension;
    l["n_samples"] = s.n_samples;
    l["shifts"] = s.shifts;
    l["mean_y"] = s.mean_y;
    l["var_y"] = s.var_y;
    l["estimator_variance"] = s.estimator_variance;
    l["cost_units"] = s.cost_units;
    l["wall_s"] = s.wall_seconds;
    l["retries"] = s.retries;
    levels_json.push_back(std::move(l));
  }
  j["config"] = config;
  return j.dump(2);
}

std::string EstimatorReport::to_text() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "method           " << method << '\n'
     << "estimate         " << estimate << '\n'
     << "variance         " << variance << '\n'
     << "epsilon          " << epsilon << '\n'
     << "mse_proxy        " << mse_proxy() << '\n'
     << "total_cost_units " << total_cost_units << '\n'
     << "wall_seconds     " << wall_seconds << '\n'
     << "converged        " << (converged ? "yes" : "no") << '\n';
  os << "level h d n_samples shifts mean_y var_y cost_units\n";
  for (const auto& s : levels)
    os << s.level << ' ' << s.h << ' ' << s.dimension << ' ' << s.n_samples << ' ' << s.shifts << ' ' << s.mean_y
       << ' ' << s.var_y << ' ' << s.cost_units << '\n';
  return os.str();
}

void EstimatorReport::write_level_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [key, value] : config) out << "# " << key << '=' << value << '\n';
  out << std::setprecision(17) << kLevelCsvHeader << '\n';
  for (const auto& s : levels)
    out << s.level << ',' << s.h << ',' << s.dimension << ',' << s.n_samples << ',' << s.mean_y << ',' << s.var_y
        << ',' << s.cost_units << ',' << s.wall_seconds << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Parallel evaluation

std::vector<SampleResult> evaluate_indexed(std::uint64_t begin, std::uint64_t end, std::size_t workers,
                                           const std::function<SampleResult(std::uint64_t)>& fn) {
  if (end < begin) throw ParameterError("empty index range");
  return parallel_map<SampleResult>(begin, end, workers, fn);
}

namespace {

// Sample n of an MC stream on one level; a NumericalError triggers one redraw
// from a derived seed, a second failure propagates.
SampleResult mc_sample(const LevelSampler& sampler, bool difference, std::size_t level, std::uint64_t seed,
                       StreamId stream, std::uint64_t n) {
  std::vector<double> z(sampler.dimension(level));
  const std::uint64_t s = derive_seed(seed, stream_value(stream), level, n);
  gaussian_vector(s, z);
  try {
    return difference ? sampler.sample_y(level, z) : sampler.sample_q(level, z);
  } catch (const NumericalError&) {
    gaussian_vector(derive_seed(s, stream_value(StreamId::retry), level, n), z);
    SampleResult r = difference ? sampler.sample_y(level, z) : sampler.sample_q(level, z);
    r.retries = 1;
    return r;
  }
}

// One MC level whose samples are indices 0..n-1 of a seeded stream.
struct McLevel {
  std::size_t level = 0;
  bool difference = true;
  StreamId stream = StreamId::mlmc;
  Accumulator acc{};
  double cost = 0.0;
  double wall = 0.0;
  std::uint64_t retries = 0;

  void extend(const LevelSampler& sampler, std::uint64_t seed, std::uint64_t target, std::size_t workers) {
    const std::uint64_t have = acc.count();
    if (target <= have) return;
    const auto results = evaluate_indexed(have, target, workers, [&](std::uint64_t n) {
      return mc_sample(sampler, difference, level, seed, stream, n);
    });
    for (const auto& r : results) {
      acc.add(r.value);
      cost += r.cost_units;
      wall += r.wall_seconds;
      retries += r.retries;
    }
  }

  [[nodiscard]] double estimator_variance() const {
    return acc.count() > 0 ? acc.variance() / static_cast<double>(acc.count()) : 0.0;
  }

  [[nodiscard]] LevelStats stats(const LevelSampler& sampler, double h) const {
    LevelStats s;
    s.level = level;
    s.h = h;
    s.dimension = sampler.dimension(level);
    s.n_samples = acc.count();
    s.mean_y = acc.mean();
    s.var_y = acc.variance();
    s.estimator_variance = estimator_variance();
    s.cost_units = cost;
    s.wall_seconds = wall;
    s.retries = retries;
    return s;
  }
};

// One QMC level: per-shift accumulators over the first P points of an
// embedded lattice rule.
struct QmcLevel {
  std::size_t level = 0;
  bool difference = true;
  LatticeRule rule;
  std::uint64_t evaluated = 0;  // points per shift already added
  std::vector<Accumulator> per_shift;
  double cost = 0.0;
  double wall = 0.0;

  QmcLevel(std::size_t level_, bool difference_, LatticeRule rule_)
      : level(level_), difference(difference_), rule(std::move(rule_)), per_shift(rule.shift_count()) {}

  // Raises the rule to `points` points per shift (a power-of-two multiple of
  // the current count), evaluating only the points that are new.
  void extend(const LevelSampler& sampler, std::uint64_t points, std::size_t workers) {
    if (points <= evaluated) return;
    if (evaluated != 0 && points % evaluated != 0) throw ParameterError("lattice sizes must nest");
    rule = rule.with_points(points);
    const std::uint64_t stride = evaluated == 0 ? 1 : points / evaluated;
    // New points are those n in [0, points) with n % stride != 0.
    std::vector<std::uint64_t> fresh;
    fresh.reserve(points - evaluated);
    for (std::uint64_t n = 0; n < points; ++n)
      if (evaluated == 0 || n % stride != 0) fresh.push_back(n);
    const std::size_t shifts = rule.shift_count();
    const std::size_t d = sampler.dimension(level);
    const auto results = evaluate_indexed(0, fresh.size() * shifts, workers, [&](std::uint64_t i) {
      const std::size_t r = static_cast<std::size_t>(i / fresh.size());
      const std::uint64_t n = fresh[i % fresh.size()];
      std::vector<double> g(rule.dimension());
      rule.gaussian_point(n, r, g);
      const std::span<const double> z(g.data(), d);
      return difference ? sampler.sample_y(level, z) : sampler.sample_q(level, z);
    });
    for (std::size_t i = 0; i < results.size(); ++i) {
      per_shift[i / fresh.size()].add(results[i].value);
      cost += results[i].cost_units;
      wall += results[i].wall_seconds;
    }
    evaluated = points;
  }

  [[nodiscard]] Accumulator shift_means() const {
    Accumulator a;
    for (const auto& s : per_shift) a.add(s.mean());
    return a;
  }

  [[nodiscard]] double estimator_variance() const {
    return shift_means().variance() / static_cast<double>(per_shift.size());
  }

  [[nodiscard]] LevelStats stats(const LevelSampler& sampler, double h) const {
    LevelStats s;
    s.level = level;
    s.h = h;
    s.dimension = sampler.dimension(level);
    s.n_samples = evaluated;
    s.shifts = per_shift.size();
    const Accumulator means = shift_means();
    s.mean_y = means.mean();
    s.var_y = means.variance();
    s.estimator_variance = s.var_y / static_cast<double>(per_shift.size());
    s.cost_units = cost;
    s.wall_seconds = wall;
    for (const auto& m : per_shift) s.shift_means.push_back(m.mean());
    return s;
  }
};

double level_h(const LevelSampler& sampler, std::size_t level) {
  if (const auto* slab = dynamic_cast<const SlabTransportSampler*>(&sampler)) return slab->hierarchy().h(level);
  return 0.0;
}

void finish_report(EstimatorReport& report) {
  report.estimate = 0.0;
  report.variance = 0.0;
  report.total_cost_units = 0.0;
  for (const auto& s : report.levels) {
    report.estimate += s.mean_y;
    report.variance += s.estimator_variance;
    report.total_cost_units += s.cost_units;
  }
}

LatticeRule level_rule(const std::vector<std::uint64_t>& z, std::size_t d, std::uint64_t points, std::size_t shifts,
                       std::uint64_t seed, StreamId stream, std::size_t level) {
  if (z.size() < d) throw DimensionError("generating vector is shorter than the stochastic dimension");
  return LatticeRule(z, d, points, shifts, derive_seed(seed, stream_value(stream), level, 0));
}

void check_level(const LevelSampler& sampler, std::size_t level) {
  if (level > sampler.max_level()) throw ParameterError("level out of range");
}

void check_power_of_two(std::uint64_t n, const char* what) {
  if (n == 0 || (n & (n - 1)) != 0) throw ParameterError(std::string(what) + " must be a power of two");
}

bool over_budget(const RunOptions& options, double cost) {
  return options.max_cost_units > 0.0 && cost > options.max_cost_units;
}

}  // namespace

// ---------------------------------------------------------------------------
// Single-level estimators

EstimatorReport mc_estimate(const LevelSampler& sampler, std::size_t level, std::uint64_t n, std::uint64_t seed,
                            const RunOptions& options) {
  check_level(sampler, level);
  if (n < 2) throw ParameterError("MC needs at least two samples");
  const auto start = Clock::now();
  McLevel lvl{level, false, StreamId::mc, {}};
  lvl.extend(sampler, seed, n, options.workers);
  EstimatorReport report;
  report.method = "mc";
  report.levels.push_back(lvl.stats(sampler, level_h(sampler, level)));
  finish_report(report);
  report.wall_seconds = seconds_since(start);
  return report;
}

EstimatorReport qmc_estimate(const LevelSampler& sampler, std::size_t level, const LatticeRule& rule,
                             const RunOptions& options) {
  check_level(sampler, level);
  if (rule.dimension() < sampler.dimension(level))
    throw DimensionError("lattice dimension is smaller than the stochastic dimension");
  if (rule.shift_count() < 2) throw ParameterError("QMC variance needs at least two shifts");
  const auto start = Clock::now();
  QmcLevel lvl(level, false, rule);
  lvl.extend(sampler, rule.points(), options.workers);
  EstimatorReport report;
  report.method = "qmc";
  report.levels.push_back(lvl.stats(sampler, level_h(sampler, level)));
  finish_report(report);
  report.wall_seconds = seconds_since(start);
  return report;
}

EstimatorReport mc_to_tolerance(const LevelSampler& sampler, std::size_t level, double epsilon,
                                std::uint64_t seed, std::uint64_t initial_n, const RunOptions& options) {
  check_level(sampler, level);
  if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
  if (initial_n < 2) throw ParameterError("the MC pilot needs at least two samples");
  const auto start = Clock::now();
  const double target = 0.5 * epsilon * epsilon;
  McLevel lvl{level, false, StreamId::mc, {}};
  lvl.extend(sampler, seed, initial_n, options.workers);
  bool converged = true;
  while (lvl.estimator_variance() > target) {
    const double wanted = std::ceil(2.0 * lvl.acc.variance() / (epsilon * epsilon));
    std::uint64_t next = static_cast<std::uint64_t>(std::min(wanted, 9.0e18));
    next = std::max(next, lvl.acc.count() + 1);
    const double projected = lvl.cost * static_cast<double>(next) / static_cast<double>(lvl.acc.count());
    if (over_budget(options, projected)) {
      converged = false;
      break;
    }
    lvl.extend(sampler, seed, next, options.workers);
  }
  EstimatorReport report;
  report.method = "mc";
  report.epsilon = epsilon;
  report.converged = converged;
  report.levels.push_back(lvl.stats(sampler, level_h(sampler, level)));
  finish_report(report);
  report.wall_seconds = seconds_since(start);
  return report;
}

EstimatorReport qmc_to_tolerance(const LevelSampler& sampler, std::size_t level, double epsilon,
                                 std::uint64_t seed, const AdaptiveOptions& options) {
  check_level(sampler, level);
  if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
  check_power_of_two(options.initial_n, "initial lattice size");
  if (options.shifts < 2) throw ParameterError("QMC variance needs at least two shifts");
  const auto start = Clock::now();
  const double target = 0.5 * epsilon * epsilon;
  QmcLevel lvl(level, false,
               level_rule(options.generating_vector, sampler.dimension(level), options.initial_n, options.shifts,
                          seed, StreamId::qmc, level));
  lvl.extend(sampler, options.initial_n, options.run.workers);
  bool converged = true;
  while (lvl.estimator_variance() > target) {
    if (over_budget(options.run, 2.0 * lvl.cost)) {
      converged = false;
      break;
    }
    lvl.extend(sampler, 2 * lvl.evaluated, options.run.workers);
  }
  EstimatorReport report;
  report.method = "qmc";
  report.epsilon = epsilon;
  report.converged = converged;
  report.levels.push_back(lvl.stats(sampler, level_h(sampler, level)));
  finish_report(report);
  report.wall_seconds = seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------
// Multilevel estimators

std::vector<std::uint64_t> optimal_sample_counts(std::span<const double> variances, std::span<const double> costs,
                                                 double epsilon) {
  if (variances.size() != costs.size()) throw DimensionError("variances and costs differ in length");
  if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
  double total = 0.0;
  for (std::size_t l = 0; l < variances.size(); ++l) {
    if (!(variances[l] > 0.0) || !(costs[l] > 0.0)) throw ParameterError("need V > 0 and C > 0");
    total += std::sqrt(variances[l] * costs[l]);
  }
  std::vector<std::uint64_t> n(variances.size());
  for (std::size_t l = 0; l < variances.size(); ++l)
    n[l] = static_cast<std::uint64_t>(
        std::ceil(2.0 / (epsilon * epsilon) * total * std::sqrt(variances[l] / costs[l])));
  return n;
}

std::size_t refinement_level(std::span<const double> estimator_variance, std::span<const double> cost) {
  if (estimator_variance.size() != cost.size() || cost.empty())
    throw DimensionError("need one variance and one cost per level");
  std::size_t best = 0;
  double best_ratio = -1.0;
  for (std::size_t l = 0; l < cost.size(); ++l) {
    const double ratio = cost[l] > 0.0 ? estimator_variance[l] / cost[l] : estimator_variance[l] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = l;
    }
  }
  return best;
}

EstimatorReport adaptive_allocate(const LevelSampler& sampler, std::size_t max_level, double epsilon,
                                  std::uint64_t seed, MultilevelMode mode, const AdaptiveOptions& options) {
  check_level(sampler, max_level);
  if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
  const bool qmc = mode == MultilevelMode::mlqmc;
  if (qmc) {
    check_power_of_two(options.initial_n, "initial lattice size");
    if (options.shifts < 2) throw ParameterError("QMC variance needs at least two shifts");
  } else if (options.initial_n < 2) {
    throw ParameterError("MLMC needs at least two initial samples per level");
  }
  const auto start = Clock::now();
  const double target = 0.5 * epsilon * epsilon;
  const std::size_t levels = max_level + 1;

  std::vector<McLevel> mc;
  std::vector<QmcLevel> lattice;
  for (std::size_t l = 0; l < levels; ++l) {
    if (qmc) {
      lattice.emplace_back(l, true,
                           level_rule(options.generating_vector, sampler.dimension(l), options.initial_n,
                                      options.shifts, seed, StreamId::mlqmc, l));
      lattice.back().extend(sampler, options.initial_n, options.run.workers);
    } else {
      mc.push_back(McLevel{l, true, StreamId::mlmc, {}});
      mc.back().extend(sampler, seed, options.initial_n, options.run.workers);
    }
  }
  const auto variance = [&](std::size_t l) { return qmc ? lattice[l].estimator_variance() : mc[l].estimator_variance(); };
  const auto cost = [&](std::size_t l) { return qmc ? lattice[l].cost : mc[l].cost; };

  bool converged = true;
  for (;;) {
    double total_var = 0.0, total_cost = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
      total_var += variance(l);
      total_cost += cost(l);
    }
    if (total_var <= target) break;
    std::vector<double> vs(levels), cs(levels);
    for (std::size_t l = 0; l < levels; ++l) {
      vs[l] = variance(l);
      cs[l] = cost(l);
    }
    const std::size_t best = refinement_level(vs, cs);
    if (over_budget(options.run, total_cost + cost(best))) {
      converged = false;
      break;
    }
    if (qmc)
      lattice[best].extend(sampler, 2 * lattice[best].evaluated, options.run.workers);
    else
      mc[best].extend(sampler, seed, 2 * mc[best].acc.count(), options.run.workers);
  }

  EstimatorReport report;
  report.method = qmc ? "mlqmc" : "mlmc";
  report.epsilon = epsilon;
  report.converged = converged;
  for (std::size_t l = 0; l < levels; ++l)
    report.levels.push_back(qmc ? lattice[l].stats(sampler, level_h(sampler, l))
                                : mc[l].stats(sampler, level_h(sampler, l)));
  finish_report(report);
  report.wall_seconds = seconds_since(start);
  return report;
}

double equilibration_ratio(const EstimatorReport& report) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& s : report.levels) {
    if (!(s.estimator_variance > 0.0) || !(s.cost_units > 0.0)) continue;
    const double r = s.estimator_variance / s.cost_units;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return hi > 0.0 ? hi / lo : 1.0;
}

// ---------------------------------------------------------------------------
// Rates

RateFit fit_rate(std::span<const double> scale, std::span<const double> value) {
  if (scale.size() != value.size()) throw DimensionError("scale and value differ in length");
  const std::size_t n = scale.size();
  if (n < 3) throw ParameterError("a rate fit needs at least three points");
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(scale[i] > 0.0) || !(value[i] > 0.0)) throw DomainError("rate fits need positive data");
    x[i] = std::log2(scale[i]);
    y[i] = std::log2(value[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("rate fits need distinct scales");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ssr += r * r;
  }
  fit.residual = std::sqrt(ssr / static_cast<double>(n));
  fit.slope_se = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  return fit;
}

}  // namespace slabuq
