#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace slabuq {

/// Standard normal CDF via erfc.
double normal_cdf(double x);

/// Phi^{-1}(u) for u in (0, 1). Rational approximation followed by one
/// Halley step against normal_cdf; absolute error below 1e-9 on
/// [1e-12, 1 - 1e-12]. Throws DomainError outside (0, 1).
double inverse_normal_cdf(double u);

/// Reads the first d components of a rank-1 lattice generating vector. One
/// entry per line; the last integer token on a line is the component, so both
/// "z" and "index z" layouts are accepted. Blank lines and lines starting
/// with '#' are skipped.
std::vector<std::uint64_t> load_generating_vector(const std::filesystem::path& path, std::size_t d);

/// Mixes (master, stream, level, index) into a 64-bit seed. Distinct tuples
/// give statistically independent per-sample generators.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t level,
                          std::uint64_t index);

/// Maps 64 random bits to a double in (0, 1); never returns 0 or 1.
double bits_to_unit_open(std::uint64_t bits);

/// Fills out with i.i.d. N(0,1) values from a generator seeded by `seed`.
/// Counter-addressable: sample n of a stream is gaussian_vector(derive_seed(..., n)).
void gaussian_vector(std::uint64_t seed, std::span<double> out);

/// Randomly shifted rank-1 lattice rule
///   v = frac(n z / P + Delta_r),  n = 0..P-1, r = 0..R-1.
/// Immutable; with_points() re-uses the generating vector and the shifts for
/// a different P, which is how the embedded (extensible) rule is doubled.
class LatticeRule {
 public:
  /// z is truncated to d components; shifts are drawn from shift_seed.
  LatticeRule(std::vector<std::uint64_t> z, std::size_t d, std::uint64_t points, std::size_t shifts,
              std::uint64_t shift_seed);

  [[nodiscard]] std::size_t dimension() const { return z_.size(); }
  [[nodiscard]] std::uint64_t points() const { return points_; }
  [[nodiscard]] std::size_t shift_count() const { return shift_count_; }
  [[nodiscard]] std::span<const std::uint64_t> generating_vector() const { return z_; }
  [[nodiscard]] std::span<const double> shift(std::size_t r) const;

  /// Replaces the random shifts (tests and reproductions of fixed shifts).
  void set_shift(std::size_t r, std::span<const double> delta);

  [[nodiscard]] LatticeRule with_points(std::uint64_t points) const;

  void point(std::uint64_t n, std::size_t r, std::span<double> out) const;
  [[nodiscard]] std::vector<double> point(std::uint64_t n, std::size_t r) const;

  /// Lattice point mapped to R^d through inverse_normal_cdf, with coordinates
  /// clamped to [2^-53, 1 - 2^-53].
  void gaussian_point(std::uint64_t n, std::size_t r, std::span<double> out) const;

 private:
  std::vector<std::uint64_t> z_;  // reduced mod P
  std::vector<std::uint64_t> z_raw_;
  std::uint64_t points_;
  std::size_t shift_count_;
  std::vector<double> shifts_;  // R x d, row-major
};

/// Sequential source of standard-Gaussian parameter vectors.
///
/// mc:  vector n is gaussian_vector(derive_seed(seed, 0, 0, n)); never ends.
/// qmc: vector n is the Gaussian image of lattice point n under shift r;
///      ends after rule.points() vectors.
class GaussianSampleStream {
 public:
  enum class Mode { mc, qmc };

  static GaussianSampleStream mc(std::uint64_t seed, std::size_t d);
  static GaussianSampleStream qmc(LatticeRule rule, std::size_t shift_index);

  [[nodiscard]] Mode mode() const { return mode_; }
  [[nodiscard]] std::size_t dimension() const { return d_; }
  [[nodiscard]] std::uint64_t position() const { return next_; }

  /// Next vector, or std::nullopt once a qmc stream is exhausted.
  std::optional<std::vector<double>> next();

 private:
  GaussianSampleStream(Mode mode, std::uint64_t seed, std::size_t d, std::optional<LatticeRule> rule,
                       std::size_t shift_index);

  Mode mode_;
  std::uint64_t seed_;
  std::size_t d_;
  std::optional<LatticeRule> rule_;
  std::size_t shift_index_;
  std::uint64_t next_ = 0;
};

}  // namespace slabuq
