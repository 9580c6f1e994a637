#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace viewcraft::cli {

/// run_manifest.json in a command's output directory. Written once at start
/// (status "running") and rewritten by finish().
class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, std::string command, std::string run_id,
              std::string config_hash);

  void add_artifact(const std::filesystem::path& path);
  /// status is "completed" or "failed".
  void finish(const std::string& status, const std::string& error = "");

  const std::string& run_id() const { return run_id_; }
  const std::filesystem::path& path() const { return path_; }

  static std::string code_version();
  static std::string utc_now();

 private:
  void write() const;

  std::filesystem::path out_dir_;
  std::filesystem::path path_;
  std::string command_;
  std::string run_id_;
  std::string config_hash_;
  std::string started_;
  std::string finished_;
  std::string status_ = "running";
  std::string error_;
  std::vector<std::string> artifacts_;
};

}  // namespace viewcraft::cli
