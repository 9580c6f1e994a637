#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/optim/optimizer.h>
#include <torch/types.h>

namespace viewcraft {

/// Named-tensor archive with string metadata. Tensors round-trip bit-exactly.
class Archive {
 public:
  void put(const std::string& key, const torch::Tensor& tensor);
  void put_string(const std::string& key, std::string value);

  bool has(const std::string& key) const { return tensors_.count(key) != 0; }
  bool has_string(const std::string& key) const { return strings_.count(key) != 0; }
  /// Throws CheckpointMismatch when absent.
  const torch::Tensor& tensor(const std::string& key) const;
  const std::string& string(const std::string& key) const;

  const std::map<std::string, torch::Tensor>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& strings() const { return strings_; }

  /// Throws IOFailure.
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::map<std::string, torch::Tensor> tensors_;
  std::map<std::string, std::string> strings_;
};

/// Parameters ("param:<name>") and buffers ("buffer:<name>") of a module.
Archive module_archive(const torch::nn::Module& module);
/// Copies every parameter and buffer from the archive into `module`.
/// Throws CheckpointMismatch on a missing, extra or differently shaped entry.
void restore_module(torch::nn::Module& module, const Archive& archive);

/// Module plus its serialized config under the "config" string.
void save_module(const torch::nn::Module& module, const std::filesystem::path& path,
                 const std::string& config_text);
/// Returns the stored config text.
std::string load_module(torch::nn::Module& module, const std::filesystem::path& path);

void save_optimizer(torch::optim::Optimizer& optimizer, const std::filesystem::path& path);
void load_optimizer(torch::optim::Optimizer& optimizer, const std::filesystem::path& path);

/// True when both modules hold bit-identical parameters and buffers.
bool modules_identical(const torch::nn::Module& a, const torch::nn::Module& b);

}  // namespace viewcraft
