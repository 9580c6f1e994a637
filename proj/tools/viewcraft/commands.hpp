#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace viewcraft::cli {

struct CommonOptions {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  bool dry_run = false;
};

struct PretrainOptions {
  CommonOptions common;
  std::string resume;
  /// Stop after this many total steps (negative: run to completion).
  int64_t max_steps = -1;
};

struct TransferOptions {
  CommonOptions common;
  std::string checkpoint;
};

struct RobustnessOptions {
  CommonOptions common;
  std::string checkpoint;
  std::string classifier;
  /// Comma separated corruption names ("standard" expands to all
  /// noise / blur / contrast severities).
  std::string corruptions = "standard";
  std::string corrupted_manifest;
};

struct SemisupOptions {
  CommonOptions common;
  std::string checkpoint;
  std::vector<int64_t> subjects;
};

struct ExportViewsOptions {
  CommonOptions common;
  std::string checkpoint;
  std::vector<std::string> images;
  int64_t count = 4;
  int64_t channel = 0;
};

struct MakeCornersOptions {
  std::string input;
  std::string out;
  uint64_t seed = 0;
  int64_t limit = -1;
};

struct AuditCornersOptions {
  std::string derived;
  std::string source;
  std::string out;
};

// Each command returns the process exit status: 0 when the command
// completed and wrote all outputs, 2 for configuration errors, 1 otherwise.
int cmd_pretrain(const PretrainOptions& o);
int cmd_transfer(const TransferOptions& o);
int cmd_robustness(const RobustnessOptions& o);
int cmd_semisup(const SemisupOptions& o);
int cmd_export_views(const ExportViewsOptions& o);
int cmd_make_corners(const MakeCornersOptions& o);
int cmd_audit_corners(const AuditCornersOptions& o);

}  // namespace viewcraft::cli
