#include "slabuq/sampler.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "slabuq/error.hpp"

namespace slabuq {
namespace {

// Acklam's rational approximation, relative error ~1.15e-9 before refinement.
constexpr std::array<double, 6> kCentralNum = {-3.969683028665376e+01, 2.209460984245205e+02,
                                               -2.759285104469687e+02, 1.383577518672690e+02,
                                               -3.066479806614716e+01, 2.506628277459239e+00};
constexpr std::array<double, 5> kCentralDen = {-5.447609879822406e+01, 1.615858368580409e+02,
                                               -1.556989798598866e+02, 6.680131188771972e+01,
                                               -1.328068155288572e+01};
constexpr std::array<double, 6> kTailNum = {-7.784894002430293e-03, -3.223964580411365e-01,
                                            -2.400758277161838e+00, -2.549732539343734e+00,
                                            4.374664141464968e+00,  2.938163982698783e+00};
constexpr std::array<double, 4> kTailDen = {7.784695709041462e-03, 3.224671290700398e-01,
                                            2.445134137142996e+00, 3.754408661907416e+00};
constexpr double kLowBreak = 0.02425;

// Lower half only: u in (0, 0.5].
double lower_quantile(double u) {
  double x;
  if (u < kLowBreak) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((kTailNum[0] * q + kTailNum[1]) * q + kTailNum[2]) * q + kTailNum[3]) * q + kTailNum[4]) * q +
         kTailNum[5]) /
        ((((kTailDen[0] * q + kTailDen[1]) * q + kTailDen[2]) * q + kTailDen[3]) * q + 1.0);
  } else {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((kCentralNum[0] * r + kCentralNum[1]) * r + kCentralNum[2]) * r + kCentralNum[3]) * r +
          kCentralNum[4]) * r + kCentralNum[5]) * q /
        (((((kCentralDen[0] * r + kCentralDen[1]) * r + kCentralDen[2]) * r + kCentralDen[3]) * r +
          kCentralDen[4]) * r + 1.0);
  }
  // Halley step on Phi(x) - u.
  const double e = normal_cdf(x) - u;
  const double step = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - step / (1.0 + 0.5 * x * step);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kClampLow = 0x1p-53;
constexpr double kClampHigh = 1.0 - 0x1p-53;

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double inverse_normal_cdf(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("inverse_normal_cdf: argument must lie in (0, 1)");
  if (u > 0.5) return -lower_quantile(1.0 - u);
  return lower_quantile(u);
}

std::vector<std::uint64_t> load_generating_vector(const std::filesystem::path& path, std::size_t d) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open generating vector file: " + path.string());
  std::vector<std::uint64_t> z;
  z.reserve(d);
  std::string line;
  std::size_t line_no = 0;
  while (z.size() < d && std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string token, last;
    if (!(tokens >> token) || token.front() == '#') continue;
    last = token;
    while (tokens >> token) last = token;
    std::uint64_t value = 0;
    const auto [end, ec] = std::from_chars(last.data(), last.data() + last.size(), value);
    if (ec != std::errc() || end != last.data() + last.size())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": '" + last +
                       "' is not a non-negative integer");
    z.push_back(value);
  }
  if (z.size() < d)
    throw DimensionError("generating vector " + path.string() + " has " + std::to_string(z.size()) +
                         " components, " + std::to_string(d) + " requested");
  return z;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t level,
                          std::uint64_t index) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ (stream + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ (level + 0x8cb92ba72f3d8dd7ULL));
  h = splitmix64(h ^ (index + 0x1d8e4e27c47d124fULL));
  return h;
}

double bits_to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1p-52;
}

void gaussian_vector(std::uint64_t seed, std::span<double> out) {
  std::mt19937_64 engine(seed);
  for (double& v : out) v = inverse_normal_cdf(bits_to_unit_open(engine()));
}

LatticeRule::LatticeRule(std::vector<std::uint64_t> z, std::size_t d, std::uint64_t points,
                         std::size_t shifts, std::uint64_t shift_seed)
    : z_raw_(std::move(z)), points_(points), shift_count_(shifts) {
  if (d < 1) throw ParameterError("lattice dimension must be >= 1");
  if (z_raw_.size() < d)
    throw DimensionError("generating vector has " + std::to_string(z_raw_.size()) +
                         " components, dimension " + std::to_string(d) + " requested");
  if (points < 1 || points > (std::uint64_t{1} << 32)) throw ParameterError("lattice size P must lie in [1, 2^32]");
  if (shifts < 1) throw ParameterError("lattice rule needs at least one shift");
  z_raw_.resize(d);
  *this = with_points(points);
  std::mt19937_64 engine(shift_seed);
  shifts_.resize(shifts * d);
  for (double& s : shifts_) s = static_cast<double>(engine() >> 11) * 0x1p-53;
}

LatticeRule LatticeRule::with_points(std::uint64_t points) const {
  if (points < 1 || points > (std::uint64_t{1} << 32)) throw ParameterError("lattice size P must lie in [1, 2^32]");
  LatticeRule out = *this;
  out.points_ = points;
  out.z_.resize(z_raw_.size());
  for (std::size_t j = 0; j < z_raw_.size(); ++j) {
    out.z_[j] = z_raw_[j] % points;
    if (points > 1 && out.z_[j] == 0)
      throw ParameterError("generating vector component " + std::to_string(j + 1) +
                           " is divisible by P = " + std::to_string(points));
  }
  return out;
}

std::span<const double> LatticeRule::shift(std::size_t r) const {
  if (r >= shift_count_) throw ParameterError("shift index out of range");
  return std::span<const double>(shifts_).subspan(r * z_.size(), z_.size());
}

void LatticeRule::set_shift(std::size_t r, std::span<const double> delta) {
  if (r >= shift_count_) throw ParameterError("shift index out of range");
  if (delta.size() != z_.size()) throw DimensionError("shift has wrong dimension");
  for (std::size_t j = 0; j < delta.size(); ++j) {
    if (!(delta[j] >= 0.0 && delta[j] < 1.0)) throw ParameterError("shift components must lie in [0, 1)");
    shifts_[r * z_.size() + j] = delta[j];
  }
}

void LatticeRule::point(std::uint64_t n, std::size_t r, std::span<double> out) const {
  if (n >= points_) throw ParameterError("lattice point index out of range");
  if (r >= shift_count_) throw ParameterError("shift index out of range");
  if (out.size() != z_.size()) throw DimensionError("lattice point output has wrong dimension");
  const double inv_p = 1.0 / static_cast<double>(points_);
  const double* delta = shifts_.data() + r * z_.size();
  for (std::size_t j = 0; j < z_.size(); ++j) {
    double x = static_cast<double>((n * z_[j]) % points_) * inv_p + delta[j];
    if (x >= 1.0) x -= 1.0;
    out[j] = x;
  }
}

std::vector<double> LatticeRule::point(std::uint64_t n, std::size_t r) const {
  std::vector<double> out(z_.size());
  point(n, r, out);
  return out;
}

void LatticeRule::gaussian_point(std::uint64_t n, std::size_t r, std::span<double> out) const {
  point(n, r, out);
  for (double& v : out) v = inverse_normal_cdf(std::clamp(v, kClampLow, kClampHigh));
}

GaussianSampleStream::GaussianSampleStream(Mode mode, std::uint64_t seed, std::size_t d,
                                           std::optional<LatticeRule> rule, std::size_t shift_index)
    : mode_(mode), seed_(seed), d_(d), rule_(std::move(rule)), shift_index_(shift_index) {}

GaussianSampleStream GaussianSampleStream::mc(std::uint64_t seed, std::size_t d) {
  if (d < 1) throw ParameterError("stream dimension must be >= 1");
  return GaussianSampleStream(Mode::mc, seed, d, std::nullopt, 0);
}

GaussianSampleStream GaussianSampleStream::qmc(LatticeRule rule, std::size_t shift_index) {
  if (shift_index >= rule.shift_count()) throw ParameterError("shift index out of range");
  const std::size_t d = rule.dimension();
  return GaussianSampleStream(Mode::qmc, 0, d, std::move(rule), shift_index);
}

std::optional<std::vector<double>> GaussianSampleStream::next() {
  std::vector<double> z(d_);
  if (mode_ == Mode::mc) {
    gaussian_vector(derive_seed(seed_, 0, 0, next_++), z);
    return z;
  }
  if (next_ >= rule_->points()) return std::nullopt;
  rule_->gaussian_point(next_++, shift_index_, z);
  return z;
}

}  // namespace slabuq
