#include "cvnn_cli/artifacts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "cvnn/error.hpp"

namespace cvnn::cli {

namespace fs = std::filesystem;

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    const unsigned char b = digest[i];
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

std::string file_blob_sha1(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return git_blob_sha1(ss.str());
}

RunDirectory::RunDirectory(fs::path dir) : dir_(std::move(dir)) {
  if (dir_.empty()) throw ConfigError("output directory must not be empty");
  staging_ = dir_;
  staging_ += ".partial";
  std::error_code ec;
  fs::remove_all(staging_, ec);
  fs::create_directories(staging_, ec);
  if (ec) throw IoError("cannot create '" + staging_.string() + "': " + ec.message());
}

RunDirectory::~RunDirectory() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

fs::path RunDirectory::file(const std::string& name) {
  if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  return staging_ / name;
}

void RunDirectory::write_text(const std::string& name, std::string_view content) {
  const fs::path p = file(name);
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw IoError("write failed for '" + p.string() + "'");
}

void RunDirectory::commit(nlohmann::json manifest) {
  nlohmann::json files = nlohmann::json::array();
  std::vector<std::string> names = files_;
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    const fs::path p = staging_ / n;
    if (!fs::exists(p)) throw IoError("artifact '" + n + "' was not written");
    files.push_back({{"name", n}, {"bytes", fs::file_size(p)}, {"sha1", file_blob_sha1(p)}});
  }
  manifest["files"] = std::move(files);
  {
    std::ofstream os(staging_ / "manifest.json", std::ios::trunc);
    os << manifest.dump(2) << '\n';
    if (!os) throw IoError("write failed for manifest in '" + staging_.string() + "'");
  }
  std::error_code ec;
  fs::remove_all(dir_, ec);
  if (dir_.has_parent_path()) fs::create_directories(dir_.parent_path(), ec);
  fs::rename(staging_, dir_, ec);
  if (ec) throw IoError("cannot move '" + staging_.string() + "' to '" + dir_.string() + "': " + ec.message());
  committed_ = true;
}

}  // namespace cvnn::cli
