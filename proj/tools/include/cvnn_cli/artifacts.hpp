#pragma once

// Output directories that appear only when every artifact was written.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cvnn::cli {

/// Git blob id: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);
std::string file_blob_sha1(const std::filesystem::path& path);

/// Artifacts are written into "<dir>.partial" and moved to <dir> by commit().
/// A RunDirectory destroyed before commit() deletes the staging directory.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path dir);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& final_path() const noexcept { return dir_; }
  /// Staging location for `name`; the file is recorded in the manifest.
  std::filesystem::path file(const std::string& name);
  void write_text(const std::string& name, std::string_view content);

  /// Writes manifest.json (the given fields plus per-file hashes) and
  /// replaces <dir> with the staged directory.
  void commit(nlohmann::json manifest);

 private:
  std::filesystem::path dir_;
  std::filesystem::path staging_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

}  // namespace cvnn::cli
