#include "config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "slabuq/error.hpp"

namespace slabuq::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ParseError("config key '" + std::string(key) + "': not a number: '" + std::string(text) + "'");
  return v;
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ParseError("config key '" + std::string(key) + "': not a nonnegative integer: '" + std::string(text) + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string_view key;
  std::function<void(StudyConfig&, std::string_view)> set;
  std::function<std::string(const StudyConfig&)> get;
};

Field real(std::string_view key, double StudyConfig::*member) {
  return {key, [key, member](StudyConfig& c, std::string_view v) { c.*member = parse_double(key, v); },
          [member](const StudyConfig& c) { return format_double(c.*member); }};
}

template <class T>
Field count(std::string_view key, T StudyConfig::*member) {
  return {key, [key, member](StudyConfig& c, std::string_view v) { c.*member = static_cast<T>(parse_unsigned(key, v)); },
          [member](const StudyConfig& c) { return std::to_string(c.*member); }};
}

Field path(std::string_view key, std::filesystem::path StudyConfig::*member) {
  return {key, [member](StudyConfig& c, std::string_view v) { c.*member = std::filesystem::path(std::string(v)); },
          [member](const StudyConfig& c) { return (c.*member).string(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"field",
       [](StudyConfig& c, std::string_view v) {
         try {
           c.field = parse_field_kind(v);
         } catch (const ParameterError& e) {
           throw ParseError(std::string("config key 'field': ") + e.what());
         }
       },
       [](const StudyConfig& c) { return std::string(to_string(c.field)); }},
      real("lambda_c", &StudyConfig::lambda_c),
      real("sigma_var_sq", &StudyConfig::sigma_var_sq),
      real("sigma_a", &StudyConfig::sigma_a),
      real("source", &StudyConfig::source),
      real("h0", &StudyConfig::h0),
      count("max_level", &StudyConfig::max_level),
      count("seed", &StudyConfig::seed),
      path("lattice_file", &StudyConfig::lattice_file),
      count("shifts", &StudyConfig::shifts),
      path("out_dir", &StudyConfig::out_dir),
      path("kl_cache_dir", &StudyConfig::kl_cache_dir),
      count("quad_size", &StudyConfig::quad_size),
      count("workers", &StudyConfig::workers),
      real("max_cost_units", &StudyConfig::max_cost_units),
      real("epsilon", &StudyConfig::epsilon),
      real("solver_safety", &StudyConfig::solver_safety),
      count("initial_n", &StudyConfig::initial_n),
      count("mc_pilot", &StudyConfig::mc_pilot),
      real("solver_epsilon", &StudyConfig::solver_epsilon),
      count("solver_samples", &StudyConfig::solver_samples),
      real("reference_solver_epsilon", &StudyConfig::reference_solver_epsilon),
      count("rates_min_samples", &StudyConfig::rates_min_samples),
      count("rates_max_samples", &StudyConfig::rates_max_samples),
      real("rates_rel_se", &StudyConfig::rates_rel_se),
      count("convergence_level", &StudyConfig::convergence_level),
      count("convergence_min_log2", &StudyConfig::convergence_min_log2),
      count("convergence_max_log2", &StudyConfig::convergence_max_log2),
      count("mc_replicates", &StudyConfig::mc_replicates),
      count("qmc_variance_shifts", &StudyConfig::qmc_variance_shifts),
      count("compare_min_level", &StudyConfig::compare_min_level),
  };
  return table;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second)
      throw ParseError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return out;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_key_values(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::pair<std::string, std::string> parse_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || trim(text.substr(0, eq)).empty())
    throw ParseError("expected key=value, got '" + std::string(text) + "'");
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

void apply_key_values(StudyConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (f.key == key) field = &f;
    if (field == nullptr) throw ParseError("unknown config key '" + key + "'");
    field->set(config, value);
  }
}

KeyValues to_key_values(const StudyConfig& config) {
  KeyValues out;
  for (const auto& f : fields()) out.emplace(std::string(f.key), f.get(config));
  return out;
}

std::string format_config(const StudyConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace slabuq::cli
