#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "slabuq/studies.hpp"

namespace slabuq::cli {

using KeyValues = std::map<std::string, std::string>;

/// Parses "key = value" lines. Blank lines and lines starting with '#' are
/// ignored; a key may appear once. Throws ParseError with the line number.
KeyValues parse_key_values(std::string_view text);

KeyValues load_key_values(const std::filesystem::path& path);

/// Parses "key=value" as given to --set.
std::pair<std::string, std::string> parse_assignment(std::string_view text);

/// Applies values on top of `config`. Unknown keys and malformed values throw ParseError.
void apply_key_values(StudyConfig& config, const KeyValues& values);

/// Every key of the config with a value that parses back to the same setting
/// (doubles are printed with 17 significant digits).
KeyValues to_key_values(const StudyConfig& config);

/// Config file text for `config`; loading it reproduces the same settings.
std::string format_config(const StudyConfig& config);

}  // namespace slabuq::cli
