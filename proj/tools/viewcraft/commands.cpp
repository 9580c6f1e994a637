#include "viewcraft/commands.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "viewcraft/checkpoint.hpp"
#include "viewcraft/config.hpp"
#include "viewcraft/corners.hpp"
#include "viewcraft/corruptions.hpp"
#include "viewcraft/datasets.hpp"
#include "viewcraft/errors.hpp"
#include "viewcraft/eval.hpp"
#include "viewcraft/image_io.hpp"
#include "viewcraft/render.hpp"
#include "viewcraft/run_manifest.hpp"
#include "viewcraft/trainer.hpp"
#include "viewcraft/views.hpp"

namespace viewcraft::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

/// Runs `body`, mapping exceptions to exit codes and recording the outcome
/// in the manifest once one exists.
int guarded(const std::function<int(std::unique_ptr<RunManifest>&)>& body) {
  std::unique_ptr<RunManifest> manifest;
  int code = kExitFailure;
  std::string error;
  try {
    code = body(manifest);
  } catch (const ConfigParseError& e) {
    error = e.what();
    code = kExitConfig;
  } catch (const ConfigInvalid& e) {
    error = e.what();
    code = kExitConfig;
  } catch (const std::exception& e) {
    error = e.what();
    code = kExitFailure;
  }
  if (!error.empty()) std::cerr << "error: " << error << "\n";
  if (manifest) {
    try {
      manifest->finish(code == kExitOk ? "completed" : "failed", error);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      code = kExitFailure;
    }
  }
  return code;
}

ExperimentConfig resolve_config(const CommonOptions& o, const ExperimentConfig* fallback) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
  } else if (fallback) {
    c = *fallback;
  } else {
    throw ConfigInvalid("--config is required");
  }
  if (o.seed) c.seed = *o.seed;
  return c;
}

std::shared_ptr<const DatasetBundle> load_bundle(const ExperimentConfig& data_config,
                                                 const ExperimentConfig& view_config) {
  LoadOptions opts;
  opts.keep_waveforms = view_config.expert.kind == "waveform" &&
                        (view_config.view_source == ViewSource::kExpert ||
                         view_config.view_source == ViewSource::kCombined);
  return std::make_shared<const DatasetBundle>(
      load_dataset(data_config.dataset, data_config.seed, default_data_root(), opts));
}

/// Frozen pretraining view source applied to a (possibly different) dataset.
ViewFactory frozen_views(const PretrainedModels& pre, const DatasetBundle& data) {
  if (data.channels() != pre.config.encoder.input_channels) {
    throw CheckpointMismatch("dataset has " + std::to_string(data.channels()) +
                             " channels, checkpoint encoder expects " +
                             std::to_string(pre.config.encoder.input_channels));
  }
  return make_view_factory(pre.config, pre.viewmaker, data);
}

fs::path default_out(const CommonOptions& o, const PretrainedModels& pre, const char* leaf) {
  return o.out.empty() ? pre.dir / leaf : fs::path(o.out);
}

std::string short_hash(uint64_t h) { return hex64(h).substr(0, 8); }

torch::nn::Linear load_classifier(const fs::path& path) {
  auto a = Archive::load(path);
  const auto& w = a.tensor("param:weight");
  torch::nn::Linear layer(w.size(1), w.size(0));
  restore_module(*layer, a);
  return layer;
}

void print_plan(const ExperimentConfig& c, const fs::path& run_dir) {
  std::cout << "# resolved configuration\n" << to_toml(c) << "\n# plan\n"
            << "run_dir = \"" << run_dir.string() << "\"\n"
            << "config_hash = \"" << hex64(config_hash(c)) << "\"\n"
            << "epochs = " << c.training.epochs << "\nbatch_size = " << c.training.batch_size
            << "\n";
}

}  // namespace

int cmd_pretrain(const PretrainOptions& o) {
  return guarded([&](std::unique_ptr<RunManifest>& manifest) {
    ExperimentConfig config = resolve_config(o.common, nullptr);
    const std::string hash = hex64(config_hash(config));
    fs::path run_dir;
    if (!o.resume.empty()) {
      fs::path ckpt = o.resume;
      if (!fs::exists(ckpt)) {
        throw IOFailure("no such checkpoint: " + ckpt.string());
      }
      if (!fs::exists(ckpt / "encoder.pt")) ckpt = latest_checkpoint(ckpt);
      if (ckpt.empty()) {
        throw IOFailure("no checkpoint found under " + o.resume);
      }
      run_dir = fs::absolute(ckpt).parent_path();
    } else {
      const fs::path root = o.common.out.empty() ? fs::path("runs") : fs::path(o.common.out);
      const std::string base = config.name + "-s" + std::to_string(config.seed) + "-" +
                               hash.substr(0, 8);
      run_dir = root / base;
      for (int k = 2; fs::exists(run_dir); ++k) run_dir = root / (base + "-" + std::to_string(k));
    }
    if (o.common.dry_run) {
      print_plan(config, run_dir);
      return kExitOk;
    }

    auto data = load_bundle(config, config);
    manifest = std::make_unique<RunManifest>(run_dir, "pretrain", run_dir.filename().string(), hash);
    std::ofstream(run_dir / "config.toml") << to_toml(config);
    manifest->add_artifact(run_dir / "config.toml");

    viewcraft::PretrainOptions po;
    po.run_dir = run_dir;
    if (!o.resume.empty()) po.resume = fs::exists(fs::path(o.resume) / "encoder.pt")
                                           ? fs::path(o.resume)
                                           : latest_checkpoint(o.resume);
    po.max_steps = o.max_steps;
    po.on_step = [](const StepMetrics& m) {
      if (m.step % 10 == 0) {
        std::cerr << "step " << m.step << " loss " << m.loss << "\n";
      }
    };
    auto result = viewcraft::pretrain(config, data, po);
    manifest->add_artifact(run_dir / "metrics.jsonl");
    for (const auto& c : result.checkpoints) manifest->add_artifact(c);
    std::cout << "run_dir " << run_dir.string() << "\n";
    std::cout << "steps " << result.steps << "\n";
    if (!result.final_checkpoint.empty()) {
      std::cout << "final_checkpoint " << result.final_checkpoint.string() << "\n";
    }
    return kExitOk;
  });
}

int cmd_transfer(const TransferOptions& o) {
  return guarded([&](std::unique_ptr<RunManifest>& manifest) {
    auto pre = load_pretrained(o.checkpoint);
    ExperimentConfig config = resolve_config(o.common, &pre.config);
    const fs::path out = default_out(o.common, pre, "transfer");
    if (o.common.dry_run) {
      print_plan(config, out);
      return kExitOk;
    }
    auto data = load_bundle(config, pre.config);
    auto views = frozen_views(pre, *data);
    manifest = std::make_unique<RunManifest>(out, "transfer",
                                             "transfer-" + short_hash(config_hash(config)),
                                             hex64(config_hash(config)));
    Rng rng(mix_seed(config.seed, 0x7472616eULL));
    const bool train_views = config.linear_eval.train_views == "pretrain";
    auto result = linear_eval(pre.encoder, views, train_views, data->train, data->val,
                              data->num_classes, config.linear_eval, rng);
    result.report.info["checkpoint"] = pre.dir.string();
    result.report.info["dataset"] = config.dataset.kind;
    result.report.save(out / "transfer_report.json");
    save_module(*result.classifier, out / "classifier.pt", to_toml(config));
    manifest->add_artifact(out / "transfer_report.json");
    manifest->add_artifact(out / "classifier.pt");
    std::cout << result.report.render();
    return kExitOk;
  });
}

int cmd_robustness(const RobustnessOptions& o) {
  return guarded([&](std::unique_ptr<RunManifest>& manifest) {
    auto pre = load_pretrained(o.checkpoint);
    ExperimentConfig config = resolve_config(o.common, &pre.config);
    const fs::path out = default_out(o.common, pre, "robustness");
    if (!fs::exists(o.classifier)) {
      throw IOFailure("no such classifier: " + o.classifier);
    }
    if (o.common.dry_run) {
      print_plan(config, out);
      return kExitOk;
    }
    auto classifier = load_classifier(o.classifier);
    auto data = load_bundle(config, pre.config);
    if (data->modality != Modality::kImage && o.corrupted_manifest.empty()) {
      throw ConfigInvalid("synthetic corruptions apply to images only");
    }
    auto views = frozen_views(pre, *data);
    check_classifier(classifier,
                     prepool_dim(pre.encoder, data->val.inputs.size(2), data->val.inputs.size(3)),
                     data->num_classes);
    manifest = std::make_unique<RunManifest>(out, "robustness",
                                             "robustness-" + short_hash(config_hash(config)),
                                             hex64(config_hash(config)));
    EvalReport report;
    if (!o.corrupted_manifest.empty()) {
      std::map<std::string, std::vector<ManifestRecord>> groups;
      for (auto& r : read_manifest(o.corrupted_manifest)) groups[r.split].push_back(r);
      std::vector<std::pair<std::string, Dataset>> sets;
      for (const auto& [name, records] : groups) sets.emplace_back(name, load_image_records(records));
      report = corruption_eval_sets(pre.encoder, classifier, views, data->val, sets);
    } else {
      std::vector<Corruption> corruptions;
      std::stringstream ss(o.corruptions);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item == "standard") {
          auto all = standard_corruptions();
          corruptions.insert(corruptions.end(), all.begin(), all.end());
        } else if (auto dash = item.rfind('-'); dash != std::string::npos) {
          corruptions.push_back({parse_corruption(item.substr(0, dash)),
                                 std::stoi(item.substr(dash + 1))});
        } else {
          corruptions.push_back({parse_corruption(item), 3});
        }
      }
      Rng rng(mix_seed(config.seed, 0x636f7272ULL));
      report = corruption_eval(pre.encoder, classifier, views, data->val, corruptions, rng);
    }
    report.info["checkpoint"] = pre.dir.string();
    report.info["classifier"] = o.classifier;
    report.save(out / "robustness_report.json");
    manifest->add_artifact(out / "robustness_report.json");
    std::cout << report.render();
    return kExitOk;
  });
}

int cmd_semisup(const SemisupOptions& o) {
  return guarded([&](std::unique_ptr<RunManifest>& manifest) {
    auto pre = load_pretrained(o.checkpoint);
    ExperimentConfig config = resolve_config(o.common, &pre.config);
    if (!o.subjects.empty()) config.semisup.labeled_subjects = o.subjects;
    const fs::path out = default_out(o.common, pre, "semisup");
    if (o.common.dry_run) {
      print_plan(config, out);
      return kExitOk;
    }
    auto data = load_bundle(config, pre.config);
    auto views = frozen_views(pre, *data);
    manifest = std::make_unique<RunManifest>(out, "semisup",
                                             "semisup-" + short_hash(config_hash(config)),
                                             hex64(config_hash(config)));
    auto s = data->train.subjects.contiguous();
    std::set<int64_t> all_set(s.data_ptr<int64_t>(), s.data_ptr<int64_t>() + s.numel());
    const std::vector<int64_t> all(all_set.begin(), all_set.end());

    EvalReport report;
    report.task = "semisup";
    auto label = [](const std::vector<int64_t>& v) { return std::to_string(v.size()) + "_subjects"; };
    const std::vector<const std::vector<int64_t>*> arms{&config.semisup.labeled_subjects, &all};
    for (const auto* subjects : arms) {
      Rng rng(mix_seed(config.seed, 0x73656d69ULL));
      auto r = semi_supervised_compare(config, *data, pre.encoder, views, *subjects, rng);
      report.set("supervised_" + label(*subjects), r.supervised_accuracy);
      report.set("pretrained_" + label(*subjects), r.pretrained_accuracy);
      report.table.push_back(EvalReport::Row{"labeled_examples_" + label(*subjects),
                                             static_cast<double>(r.labeled_examples)});
      report.table.push_back(EvalReport::Row{"supervised_epochs_" + label(*subjects),
                                             static_cast<double>(r.supervised_epochs)});
    }
    std::string ids;
    for (int64_t id : config.semisup.labeled_subjects) ids += (ids.empty() ? "" : ",") + std::to_string(id);
    report.info["labeled_subjects"] = ids;
    report.info["checkpoint"] = pre.dir.string();
    report.save(out / "semisup_report.json");
    manifest->add_artifact(out / "semisup_report.json");
    std::cout << report.render();
    return kExitOk;
  });
}

int cmd_export_views(const ExportViewsOptions& o) {
  return guarded([&](std::unique_ptr<RunManifest>& manifest) {
    auto pre = load_pretrained(o.checkpoint);
    ExperimentConfig config = resolve_config(o.common, &pre.config);
    const fs::path out = default_out(o.common, pre, "views");
    if (o.common.dry_run) {
      print_plan(config, out);
      return kExitOk;
    }
    auto data = load_bundle(config, pre.config);
    auto views = frozen_views(pre, *data);

    torch::Tensor inputs;
    if (!o.images.empty()) {
      std::vector<torch::Tensor> imgs;
      for (const auto& p : o.images) imgs.push_back(read_pnm(p));
      inputs = torch::stack(imgs);
    } else {
      const Dataset& src = data->val.size() > 0 ? data->val : data->train;
      inputs = src.inputs.narrow(0, 0, std::min(o.count, src.size()));
    }
    if (inputs.size(1) != pre.config.encoder.input_channels) {
      throw CheckpointMismatch("inputs have " + std::to_string(inputs.size(1)) +
                               " channels, checkpoint expects " +
                               std::to_string(pre.config.encoder.input_channels));
    }
    const bool spectral = data->modality == Modality::kSpectrogram;
    if (spectral && (o.channel < 0 || o.channel >= inputs.size(1))) {
      throw IndexOutOfRange("--channel " + std::to_string(o.channel) + " is out of range");
    }

    manifest = std::make_unique<RunManifest>(out, "export-views",
                                             "export-views-" + short_hash(config_hash(config)),
                                             hex64(config_hash(config)));
    Rng rng(mix_seed(config.seed, 0x76696577ULL));
    torch::NoGradGuard no_grad;
    for (int64_t i = 0; i < inputs.size(0); ++i) {
      auto x = inputs.narrow(0, i, 1);
      std::vector<torch::Tensor> tiles(9);
      for (int k = 0, v = 0; k < 9; ++k) {
        if (k == 4) {
          tiles[k] = spectral ? spectrogram_tile(x[0][o.channel]) : image_tile(x[0]);
          continue;
        }
        auto view = views.view(x, rng).view[0];
        tiles[k] = spectral ? diff_tile(view[o.channel] - x[0][o.channel]) : image_tile(view);
        ++v;
      }
      const fs::path file = out / ("grid-" + std::to_string(i) + ".ppm");
      write_pnm(file, compose_grid(tiles));
      manifest->add_artifact(file);
    }
    std::cout << "wrote " << inputs.size(0) << " grids to " << out.string() << "\n";
    return kExitOk;
  });
}

namespace {

struct ImageSource {
  Dataset data;
  std::vector<ManifestRecord> records;
};

/// A manifest file, a directory holding manifest.jsonl, or a CIFAR-10
/// binary directory.
ImageSource load_image_source(const fs::path& input, int64_t limit) {
  if (!fs::exists(input)) {
    throw IOFailure("no such dataset: " + input.string());
  }
  ImageSource src;
  fs::path manifest = input;
  if (fs::is_directory(input)) manifest = input / "manifest.jsonl";
  if (fs::exists(manifest) && !fs::is_directory(manifest)) {
    src.records = read_manifest(manifest);
    if (limit >= 0 && static_cast<int64_t>(src.records.size()) > limit) src.records.resize(limit);
    src.data = load_image_records(src.records);
    return src;
  }
  if (fs::exists(input / "data_batch_1.bin")) {
    auto batch = read_cifar10_batch(input / "data_batch_1.bin", limit);
    src.data.inputs = batch.images;
    src.data.labels = batch.labels;
    src.data.subjects = torch::zeros({batch.labels.size(0)}, torch::kInt64);
    for (int64_t i = 0; i < batch.labels.size(0); ++i) {
      src.records.push_back({"", batch.labels[i].item<int64_t>(), "train", 0});
    }
    return src;
  }
  throw IOFailure("no manifest.jsonl or CIFAR-10 batches in " + input.string());
}

}  // namespace

int cmd_make_corners(const MakeCornersOptions& o) {
  return guarded([&](std::unique_ptr<RunManifest>& manifest) {
    auto src = load_image_source(o.input, o.limit);
    const fs::path out = o.out;
    manifest = std::make_unique<RunManifest>(out, "make-corners",
                                             "make-corners-s" + std::to_string(o.seed), "");
    Rng rng(o.seed);
    auto corners = make_corners_dataset(src.data.inputs, rng);
    fs::create_directories(out / "images");
    std::vector<ManifestRecord> records;
    nlohmann::ordered_json donors = nlohmann::ordered_json::array();
    auto d = corners.donors.accessor<int64_t, 2>();
    for (int64_t i = 0; i < corners.images.size(0); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06lld.ppm", static_cast<long long>(i));
      const fs::path file = out / "images" / name;
      write_pnm(file, corners.images[i]);
      ManifestRecord r = src.records[i];
      r.path = (fs::path("images") / name).string();
      records.push_back(r);
      donors.push_back({d[i][0], d[i][1], d[i][2], d[i][3]});
    }
    write_manifest(out / "manifest.jsonl", records);
    std::ofstream(out / "donors.json") << donors.dump() << "\n";
    manifest->add_artifact(out / "manifest.jsonl");
    manifest->add_artifact(out / "donors.json");
    manifest->add_artifact(out / "images");
    std::cout << "wrote " << records.size() << " images to " << out.string() << "\n";
    return kExitOk;
  });
}

int cmd_audit_corners(const AuditCornersOptions& o) {
  return guarded([&](std::unique_ptr<RunManifest>& manifest) {
    auto derived = load_image_source(o.derived, -1);
    auto source = load_image_source(o.source, derived.data.size());
    auto audit = audit_corners(derived.data.inputs, source.data.inputs);
    std::cout << "quadrants " << audit.quadrants << "\n"
              << "traced " << audit.traced << "/" << audit.quadrants << "\n"
              << "traced_to_original " << audit.traced_to_original << "/" << audit.quadrants
              << "\n";
    const bool ok = audit.traced == audit.quadrants && audit.traced_to_original == 0;
    if (!o.out.empty()) {
      manifest = std::make_unique<RunManifest>(o.out, "audit-corners", "audit-corners", "");
      nlohmann::ordered_json j;
      j["quadrants"] = audit.quadrants;
      j["traced"] = audit.traced;
      j["traced_to_original"] = audit.traced_to_original;
      j["passed"] = ok;
      std::ofstream(fs::path(o.out) / "audit.json") << j.dump(2) << "\n";
      manifest->add_artifact(fs::path(o.out) / "audit.json");
    }
    if (!ok) {
      std::cerr << "audit failed: not every quadrant traces to a different source image\n";
      return kExitFailure;
    }
    return kExitOk;
  });
}

}  // namespace viewcraft::cli
