#include "slabuq/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "slabuq/error.hpp"

namespace slabuq {
namespace {

constexpr char kCacheMagic[8] = {'S', 'L', 'A', 'B', 'U', 'Q', 'K', 'L'};
constexpr std::uint32_t kCacheVersion = 1;

// Covariance as a function of the distance r = |x - y|, parameters already validated.
double matern_of_distance(double r, const MaternParams& p) {
  const double var = p.sigma_var_sq;
  if (r < 1e-12 * p.lambda_c) return var;
  if (p.is_gaussian()) {
    const double t = r / p.lambda_c;
    return var * std::exp(-t * t);
  }
  const double s = 2.0 * std::sqrt(p.nu) * r / p.lambda_c;
  if (p.nu == 0.5) return var * std::exp(-s);
  if (p.nu == 1.5) return var * (1.0 + s) * std::exp(-s);
  if (p.nu == 2.5) return var * (1.0 + s + s * s / 3.0) * std::exp(-s);
  return var * std::pow(2.0, 1.0 - p.nu) / std::tgamma(p.nu) * std::pow(s, p.nu) *
         std::cyl_bessel_k(p.nu, s);
}

struct Eigenpairs {
  std::vector<double> values;  // descending
  Eigen::MatrixXd vectors;     // unit 2-norm columns
};

// Largest `count` eigenpairs of a dense symmetric matrix.
Eigenpairs top_eigenpairs(const Eigen::MatrixXd& a, std::size_t count) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "symmetric eigensolver failed on a " << a.rows() << " x " << a.rows() << " kernel matrix";
    throw NumericalError(msg.str());
  }
  const auto n = a.rows();
  const auto k = static_cast<Eigen::Index>(count);
  Eigenpairs out;
  out.values.resize(count);
  out.vectors.resize(n, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.values[static_cast<std::size_t>(i)] = solver.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-8 * scale) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

template <typename T>
void write_pod(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

std::string_view to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::matern15:
      return "matern15";
    case FieldKind::exponential:
      return "exponential";
    case FieldKind::gaussian:
      return "gaussian";
  }
  return "unknown";
}

FieldKind parse_field_kind(std::string_view name) {
  if (name == "matern15" || name == "matern") return FieldKind::matern15;
  if (name == "exponential" || name == "exp") return FieldKind::exponential;
  if (name == "gaussian") return FieldKind::gaussian;
  throw ParameterError("unknown field kind '" + std::string(name) +
                       "' (expected matern15, exponential or gaussian)");
}

void MaternParams::validate() const {
  if (!(nu >= 0.5)) throw ParameterError("Matern smoothness nu must be >= 0.5");
  if (!(lambda_c > 0.0) || !std::isfinite(lambda_c))
    throw ParameterError("correlation length lambda_c must be positive");
  if (!(sigma_var_sq > 0.0) || !std::isfinite(sigma_var_sq))
    throw ParameterError("variance sigma_var^2 must be positive");
}

MaternParams field_params(FieldKind kind, double lambda_c, double sigma_var_sq) {
  MaternParams p;
  p.lambda_c = lambda_c;
  p.sigma_var_sq = sigma_var_sq;
  switch (kind) {
    case FieldKind::matern15:
      p.nu = 1.5;
      break;
    case FieldKind::exponential:
      p.nu = 0.5;
      break;
    case FieldKind::gaussian:
      p.nu = MaternParams::kGaussian;
      break;
  }
  return p;
}

double matern_covariance(double x, double y, const MaternParams& p) {
  p.validate();
  return matern_of_distance(std::abs(x - y), p);
}

std::size_t truncation_dimension(FieldKind kind, double h) {
  if (!(h > 0.0) || h > 1.0) throw ParameterError("mesh width must lie in (0, 1]");
  // Guard against 8/h landing a hair above an integer.
  const auto ceil_of = [](double v) { return static_cast<std::size_t>(std::ceil(v - 1e-9)); };
  switch (kind) {
    case FieldKind::matern15:
      return ceil_of(8.0 / h);
    case FieldKind::exponential:
      return ceil_of(225.0 / std::sqrt(h));
    case FieldKind::gaussian:
      // Eigenvalues of the lambda_c = 1 Gaussian kernel reach round-off after
      // ten modes, so the Matern rule is capped.
      return std::min<std::size_t>(ceil_of(8.0 / h), 10);
  }
  return 0;
}

std::size_t default_quad_size(std::size_t d) {
  std::size_t q = std::max<std::size_t>(512, 2 * d);
  return q + (q % 2);
}

KLBasis::KLBasis(MaternParams params, std::vector<double> eigenvalues, Eigen::MatrixXd nodal)
    : params_(params), eigenvalues_(std::move(eigenvalues)), nodal_(std::move(nodal)) {}

double KLBasis::node(std::size_t j) const {
  return (static_cast<double>(j) + 0.5) / static_cast<double>(quad_size());
}

KLBasis KLBasis::build(const MaternParams& params, std::size_t d, std::size_t quad_size) {
  params.validate();
  if (d < 1) throw ParameterError("KL truncation dimension must be >= 1");
  if (d > quad_size) throw ParameterError("KL truncation dimension exceeds Nystrom quad_size");

  const std::size_t q = quad_size;
  const double w = 1.0 / static_cast<double>(q);
  // Uniform midpoint nodes make the weighted kernel matrix symmetric Toeplitz.
  std::vector<double> c(q);
  for (std::size_t k = 0; k < q; ++k) c[k] = w * matern_of_distance(static_cast<double>(k) * w, params);

  std::vector<double> values;
  Eigen::MatrixXd vectors;
  if (q % 2 == 0 && q >= 4) {
    // Symmetric Toeplitz is centrosymmetric: eigenvectors split into even and
    // odd halves [u; Ju] and [u; -Ju], solved as two problems of size q/2.
    const std::size_t m = q / 2;
    const std::size_t k = std::min(d, m);
    Eigen::MatrixXd even(m, m), odd(m, m);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = j; i < m; ++i) {
        const double toeplitz = c[i - j];
        const double hankel = c[q - 1 - i - j];
        even(i, j) = even(j, i) = toeplitz + hankel;
        odd(i, j) = odd(j, i) = toeplitz - hankel;
      }
    }
    Eigenpairs pe = top_eigenpairs(even, k);
    Eigenpairs po = top_eigenpairs(odd, k);

    values.reserve(d);
    vectors.resize(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(d));
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    std::size_t ie = 0, io = 0;
    for (std::size_t col = 0; col < d; ++col) {
      const bool take_even = io >= k || (ie < k && pe.values[ie] >= po.values[io]);
      const Eigenpairs& src = take_even ? pe : po;
      const std::size_t idx = take_even ? ie++ : io++;
      const double parity = take_even ? 1.0 : -1.0;
      values.push_back(src.values[idx]);
      for (std::size_t i = 0; i < m; ++i) {
        const double u = src.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx));
        vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = u * inv_sqrt2;
        vectors(static_cast<Eigen::Index>(q - 1 - i), static_cast<Eigen::Index>(col)) =
            parity * u * inv_sqrt2;
      }
    }
  } else {
    Eigen::MatrixXd a(q, q);
    for (std::size_t j = 0; j < q; ++j)
      for (std::size_t i = j; i < q; ++i) a(i, j) = a(j, i) = c[i - j];
    Eigenpairs p = top_eigenpairs(a, d);
    values = std::move(p.values);
    vectors = std::move(p.vectors);
  }

  const double floor = 4.0 * std::numeric_limits<double>::epsilon() * values.front();
  if (!(values.back() > floor)) {
    std::ostringstream msg;
    msg << "KL eigenvalue xi_" << d << " = " << values.back()
        << " is at round-off level; reduce the truncation dimension";
    throw NumericalError(msg.str());
  }

  vectors *= 1.0 / std::sqrt(w);
  for (Eigen::Index col = 0; col < vectors.cols(); ++col) fix_sign(vectors.col(col));
  return KLBasis(params, std::move(values), std::move(vectors));
}

Eigen::MatrixXd KLBasis::eigenfunctions_at(std::span<const double> points,
                                           std::size_t modes) const {
  if (modes > dimension()) throw DimensionError("requested more KL modes than the basis holds");
  const auto q = static_cast<Eigen::Index>(quad_size());
  const double w = weight();
  Eigen::MatrixXd kernel(static_cast<Eigen::Index>(points.size()), q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double t = node(static_cast<std::size_t>(j));
    for (std::size_t p = 0; p < points.size(); ++p)
      kernel(static_cast<Eigen::Index>(p), j) = w * matern_of_distance(std::abs(points[p] - t), params_);
  }
  const auto m = static_cast<Eigen::Index>(modes);
  Eigen::MatrixXd out = kernel * nodal_.leftCols(m);
  for (Eigen::Index i = 0; i < m; ++i) out.col(i) /= eigenvalues_[static_cast<std::size_t>(i)];
  return out;
}

Eigen::MatrixXd KLBasis::scaled_modes_at(std::span<const double> points, std::size_t modes) const {
  Eigen::MatrixXd out = eigenfunctions_at(points, modes);
  for (Eigen::Index i = 0; i < out.cols(); ++i)
    out.col(i) *= std::sqrt(eigenvalues_[static_cast<std::size_t>(i)]);
  return out;
}

void KLBasis::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open KL cache for writing: " + path.string());
  os.write(kCacheMagic, sizeof(kCacheMagic));
  write_pod(os, kCacheVersion);
  write_pod(os, params_.nu);
  write_pod(os, params_.lambda_c);
  write_pod(os, params_.sigma_var_sq);
  write_pod(os, static_cast<std::uint64_t>(dimension()));
  write_pod(os, static_cast<std::uint64_t>(quad_size()));
  os.write(reinterpret_cast<const char*>(eigenvalues_.data()),
           static_cast<std::streamsize>(eigenvalues_.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(nodal_.data()),
           static_cast<std::streamsize>(nodal_.size() * sizeof(double)));
  if (!os) throw IoError("failed writing KL cache: " + path.string());
}

KLBasis KLBasis::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open KL cache: " + path.string());
  char magic[sizeof(kCacheMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0)
    throw ParseError("not a KL cache file: " + path.string());
  if (read_pod<std::uint32_t>(is) != kCacheVersion)
    throw ParseError("unsupported KL cache version: " + path.string());
  MaternParams p;
  p.nu = read_pod<double>(is);
  p.lambda_c = read_pod<double>(is);
  p.sigma_var_sq = read_pod<double>(is);
  const auto d = read_pod<std::uint64_t>(is);
  const auto q = read_pod<std::uint64_t>(is);
  if (!is || d == 0 || d > q || q > (1u << 24)) throw ParseError("corrupt KL cache header: " + path.string());
  std::vector<double> values(d);
  Eigen::MatrixXd nodal(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(d));
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(d * sizeof(double)));
  is.read(reinterpret_cast<char*>(nodal.data()), static_cast<std::streamsize>(q * d * sizeof(double)));
  if (!is) throw ParseError("truncated KL cache: " + path.string());
  return KLBasis(p, std::move(values), std::move(nodal));
}

std::string kl_cache_key(const MaternParams& params, std::size_t d, std::size_t quad_size) {
  std::ostringstream os;
  os.precision(17);
  os << "kl_nu" << (params.is_gaussian() ? std::string("inf") : std::to_string(params.nu)) << "_lc"
     << params.lambda_c << "_var" << params.sigma_var_sq << "_d" << d << "_q" << quad_size << ".bin";
  return os.str();
}

std::shared_ptr<const KLBasis> load_or_build_kl_basis(const MaternParams& params, std::size_t d,
                                                      std::size_t quad_size,
                                                      const std::filesystem::path& cache_dir) {
  if (cache_dir.empty()) return std::make_shared<const KLBasis>(KLBasis::build(params, d, quad_size));
  const auto file = cache_dir / kl_cache_key(params, d, quad_size);
  if (std::filesystem::exists(file)) {
    try {
      KLBasis cached = KLBasis::load(file);
      const MaternParams& cp = cached.params();
      const bool same_nu = cp.nu == params.nu;
      if (same_nu && cp.lambda_c == params.lambda_c && cp.sigma_var_sq == params.sigma_var_sq &&
          cached.dimension() == d && cached.quad_size() == quad_size)
        return std::make_shared<const KLBasis>(std::move(cached));
    } catch (const ParseError&) {
      // Fall through and rebuild over the bad file.
    }
  }
  auto basis = std::make_shared<const KLBasis>(KLBasis::build(params, d, quad_size));
  std::filesystem::create_directories(cache_dir);
  auto tmp = file;
  tmp += ".tmp";
  basis->save(tmp);
  std::filesystem::rename(tmp, file);
  return basis;
}

std::vector<double> evaluate_field(const KLBasis& basis, std::span<const double> z,
                                   std::span<const double> points) {
  if (z.size() != basis.dimension())
    throw DimensionError("evaluate_field: z has " + std::to_string(z.size()) +
                         " entries, basis has " + std::to_string(basis.dimension()) + " modes");
  const Eigen::MatrixXd modes = basis.scaled_modes_at(points, basis.dimension());
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  const Eigen::VectorXd log_field = modes * zv;
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_field[static_cast<Eigen::Index>(i)]);
  return out;
}

FieldEvaluator::FieldEvaluator(const KLBasis& basis, std::vector<double> points)
    : points_(std::move(points)), modes_(basis.scaled_modes_at(points_, basis.dimension())) {}

void FieldEvaluator::log_field(std::span<const double> z, std::span<double> out) const {
  if (z.size() > max_modes() || z.empty())
    throw DimensionError("FieldEvaluator: z has " + std::to_string(z.size()) + " entries, at most " +
                         std::to_string(max_modes()) + " available");
  if (out.size() != points_.size()) throw DimensionError("FieldEvaluator: output size mismatch");
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::Map<Eigen::VectorXd> ov(out.data(), static_cast<Eigen::Index>(out.size()));
  ov.noalias() = modes_.leftCols(static_cast<Eigen::Index>(z.size())) * zv;
}

void FieldEvaluator::field(std::span<const double> z, std::span<double> out) const {
  log_field(z, out);
  for (double& v : out) v = std::exp(v);
}

CrossSections CrossSections::from_scattering(std::vector<double> sigma_s, std::vector<double> sigma_a) {
  if (sigma_s.size() != sigma_a.size() || sigma_s.empty())
    throw DimensionError("cross-section arrays must be non-empty and of equal length");
  CrossSections xs;
  xs.sigma_mid.resize(sigma_s.size());
  double rho = 0.0;
  for (std::size_t j = 0; j < sigma_s.size(); ++j) {
    if (!std::isfinite(sigma_s[j]) || !(sigma_s[j] >= 0.0))
      throw NumericalError("scattering cross-section is not a finite non-negative value");
    if (!(sigma_a[j] > 0.0) || !std::isfinite(sigma_a[j]))
      throw ParameterError("absorption cross-section must be positive");
    xs.sigma_mid[j] = sigma_s[j] + sigma_a[j];
    rho = std::max(rho, sigma_s[j] / xs.sigma_mid[j]);
  }
  xs.sigma_s_mid = std::move(sigma_s);
  xs.sigma_a_mid = std::move(sigma_a);
  xs.rho = rho;
  return xs;
}

}  // namespace slabuq
