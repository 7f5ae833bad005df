#pragma once

// Reader for the subset of TOML used by cvnn config files: tables, arrays of
// tables, dotted keys, strings, integers, floats (inf/nan), booleans, arrays
// and inline tables. Dates are not supported.

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

namespace cvnn::cli {

/// Throws ConfigError("line N: ...") on malformed input.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json parse_toml_file(const std::filesystem::path& path);

}  // namespace cvnn::cli
