#include "viewcraft/checkpoint.hpp"

#include <torch/torch.h>

#include "viewcraft/errors.hpp"

namespace viewcraft {

void Archive::put(const std::string& key, const torch::Tensor& tensor) {
  tensors_[key] = tensor.detach().cpu().contiguous().clone();
}

void Archive::put_string(const std::string& key, std::string value) {
  strings_[key] = std::move(value);
}

const torch::Tensor& Archive::tensor(const std::string& key) const {
  auto it = tensors_.find(key);
  if (it == tensors_.end()) {
    throw CheckpointMismatch("archive has no tensor '" + key + "'");
  }
  return it->second;
}

const std::string& Archive::string(const std::string& key) const {
  auto it = strings_.find(key);
  if (it == strings_.end()) {
    throw CheckpointMismatch("archive has no entry '" + key + "'");
  }
  return it->second;
}

void Archive::save(const std::filesystem::path& path) const {
  c10::List<std::string> tensor_names, string_names, string_values;
  c10::List<torch::Tensor> tensors;
  for (const auto& [k, v] : tensors_) {
    tensor_names.push_back(k);
    tensors.push_back(v);
  }
  for (const auto& [k, v] : strings_) {
    string_names.push_back(k);
    string_values.push_back(v);
  }
  torch::serialize::OutputArchive out;
  out.write("tensor_names", c10::IValue(tensor_names));
  out.write("tensors", c10::IValue(tensors));
  out.write("string_names", c10::IValue(string_names));
  out.write("strings", c10::IValue(string_values));
  try {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out.save_to(path.string());
  } catch (const std::exception& e) {
    throw IOFailure("cannot write archive " + path.string() + ": " + e.what());
  }
}

Archive Archive::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IOFailure("no such checkpoint: " + path.string());
  }
  torch::serialize::InputArchive in;
  c10::IValue tensor_names, tensors, string_names, strings;
  try {
    in.load_from(path.string());
    in.read("tensor_names", tensor_names);
    in.read("tensors", tensors);
    in.read("string_names", string_names);
    in.read("strings", strings);
  } catch (const c10::Error& e) {
    throw IOFailure("cannot read archive " + path.string() + ": " + e.what_without_backtrace());
  }
  Archive a;
  auto tn = tensor_names.toList();
  auto tv = tensors.toTensorList();
  for (size_t i = 0; i < tn.size(); ++i) {
    a.tensors_[tn.get(i).toStringRef()] = tv.get(i);
  }
  auto sn = string_names.toList();
  auto sv = strings.toList();
  for (size_t i = 0; i < sn.size(); ++i) {
    a.strings_[sn.get(i).toStringRef()] = sv.get(i).toStringRef();
  }
  return a;
}

Archive module_archive(const torch::nn::Module& module) {
  Archive a;
  for (const auto& p : module.named_parameters(true)) a.put("param:" + p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) a.put("buffer:" + b.key(), b.value());
  return a;
}

void restore_module(torch::nn::Module& module, const Archive& archive) {
  torch::NoGradGuard no_grad;
  size_t expected = 0;
  auto copy = [&](const std::string& key, torch::Tensor target) {
    ++expected;
    const auto& src = archive.tensor(key);
    if (src.sizes() != target.sizes()) {
      throw CheckpointMismatch("shape of '" + key + "' differs from the checkpoint");
    }
    target.copy_(src);
  };
  for (auto& p : module.named_parameters(true)) copy("param:" + p.key(), p.value());
  for (auto& b : module.named_buffers(true)) copy("buffer:" + b.key(), b.value());
  size_t stored = 0;
  for (const auto& [k, _] : archive.tensors()) {
    if (k.rfind("param:", 0) == 0 || k.rfind("buffer:", 0) == 0) ++stored;
  }
  if (stored != expected) {
    throw CheckpointMismatch("checkpoint holds " + std::to_string(stored) +
                             " tensors, module expects " + std::to_string(expected));
  }
}

void save_module(const torch::nn::Module& module, const std::filesystem::path& path,
                 const std::string& config_text) {
  auto a = module_archive(module);
  a.put_string("config", config_text);
  a.save(path);
}

std::string load_module(torch::nn::Module& module, const std::filesystem::path& path) {
  auto a = Archive::load(path);
  restore_module(module, a);
  return a.has_string("config") ? a.string("config") : std::string();
}

void save_optimizer(torch::optim::Optimizer& optimizer, const std::filesystem::path& path) {
  torch::serialize::OutputArchive out;
  optimizer.save(out);
  try {
    out.save_to(path.string());
  } catch (const std::exception& e) {
    throw IOFailure("cannot write optimizer state " + path.string() + ": " + e.what());
  }
}

void load_optimizer(torch::optim::Optimizer& optimizer, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IOFailure("no such optimizer state: " + path.string());
  }
  torch::serialize::InputArchive in;
  try {
    in.load_from(path.string());
    optimizer.load(in);
  } catch (const c10::Error& e) {
    throw CheckpointMismatch("cannot restore optimizer from " + path.string() + ": " +
                             e.what_without_backtrace());
  }
}

bool modules_identical(const torch::nn::Module& a, const torch::nn::Module& b) {
  auto ta = module_archive(a).tensors();
  auto tb = module_archive(b).tensors();
  if (ta.size() != tb.size()) return false;
  for (const auto& [k, v] : ta) {
    auto it = tb.find(k);
    if (it == tb.end() || !torch::equal(v, it->second)) return false;
  }
  return true;
}

}  // namespace viewcraft
