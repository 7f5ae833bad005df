#pragma once

// Command implementations behind the cvnn executable. Each takes a resolved
// config (file values with flag overrides applied), writes its artifacts
// through a RunDirectory and returns the summary it wrote.

#include <filesystem>
#include <iosfwd>

#include <nlohmann/json.hpp>

#include "cvnn_cli/experiments.hpp"

namespace cvnn::cli {

nlohmann::json gen_data(const nlohmann::json& config, const std::filesystem::path& out);
nlohmann::json train(const nlohmann::json& config, const std::filesystem::path& out);
/// Metrics of a saved model on one split ("train", "val", "test" or "all").
nlohmann::json eval(const std::filesystem::path& model, const std::filesystem::path& data, const std::string& split);
nlohmann::json exp_init(const nlohmann::json& config, const std::filesystem::path& out, const ProgressFn& progress);
nlohmann::json exp_cv_rv(const nlohmann::json& config, const std::filesystem::path& out, const ProgressFn& progress);

/// Parses arguments and runs a command. Returns the process exit code:
/// 0 on success, 2 for usage or config errors, 1 for anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cvnn::cli
