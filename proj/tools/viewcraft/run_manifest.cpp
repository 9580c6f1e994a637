#include "viewcraft/run_manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "viewcraft/errors.hpp"

#ifndef VIEWCRAFT_CODE_VERSION
#define VIEWCRAFT_CODE_VERSION "unknown"
#endif

namespace viewcraft::cli {

namespace fs = std::filesystem;

RunManifest::RunManifest(fs::path out_dir, std::string command, std::string run_id,
                         std::string config_hash)
    : out_dir_(std::move(out_dir)),
      path_(out_dir_ / "run_manifest.json"),
      command_(std::move(command)),
      run_id_(std::move(run_id)),
      config_hash_(std::move(config_hash)),
      started_(utc_now()) {
  fs::create_directories(out_dir_);
  write();
}

void RunManifest::add_artifact(const fs::path& path) {
  std::error_code ec;
  auto rel = fs::relative(path, out_dir_, ec);
  artifacts_.push_back(ec || rel.empty() || rel.string().rfind("..", 0) == 0 ? path.string()
                                                                             : rel.string());
}

void RunManifest::finish(const std::string& status, const std::string& error) {
  status_ = status;
  error_ = error;
  finished_ = utc_now();
  write();
}

std::string RunManifest::code_version() { return VIEWCRAFT_CODE_VERSION; }

std::string RunManifest::utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::write() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id_;
  j["command"] = command_;
  j["config_hash"] = config_hash_;
  j["code_version"] = code_version();
  j["started_at"] = started_;
  j["finished_at"] = finished_.empty() ? nlohmann::ordered_json(nullptr)
                                         : nlohmann::ordered_json(finished_);
  j["status"] = status_;
  if (!error_.empty()) j["error"] = error_;
  j["artifacts"] = artifacts_;
  std::ofstream out(path_);
  if (!out) {
    throw IOFailure("cannot write " + path_.string());
  }
  out << j.dump(2) << "\n";
}

}  // namespace viewcraft::cli
