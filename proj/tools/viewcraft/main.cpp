#include <CLI11.hpp>

#include "viewcraft/commands.hpp"

namespace {

void add_common(CLI::App* cmd, viewcraft::cli::CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment configuration (TOML)");
  cmd->add_option_function<uint64_t>("--seed", [&o](const uint64_t& s) { o.seed = s; },
                                     "Override the configured seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--dry-run", o.dry_run, "Print the resolved configuration and plan, then exit");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace viewcraft::cli;
  CLI::App app{"viewcraft: learned views for contrastive pretraining"};
  app.require_subcommand(1);

  PretrainOptions pretrain;
  auto* p = app.add_subcommand("pretrain", "Contrastive pretraining");
  add_common(p, pretrain.common);
  p->add_option("--resume", pretrain.resume, "Checkpoint or run directory to continue");
  p->add_option("--max-steps", pretrain.max_steps, "Stop after this many total steps");

  TransferOptions transfer;
  auto* t = app.add_subcommand("transfer", "Linear evaluation of a pretrained encoder");
  add_common(t, transfer.common);
  t->add_option("--checkpoint", transfer.checkpoint, "Pretraining checkpoint")->required();

  RobustnessOptions robust;
  auto* r = app.add_subcommand("robustness", "Accuracy under corruptions");
  add_common(r, robust.common);
  r->add_option("--checkpoint", robust.checkpoint, "Pretraining checkpoint")->required();
  r->add_option("--classifier", robust.classifier, "classifier.pt from transfer")->required();
  r->add_option("--corruptions", robust.corruptions,
                "Comma separated list, e.g. gaussian_noise-3,contrast-5,identity");
  r->add_option("--corrupted-manifest", robust.corrupted_manifest,
                "Manifest of pre-corrupted images, one split per corruption");

  SemisupOptions semisup;
  auto* s = app.add_subcommand("semisup", "Supervised vs pretrained with few labeled subjects");
  add_common(s, semisup.common);
  s->add_option("--checkpoint", semisup.checkpoint, "Pretraining checkpoint")->required();
  s->add_option("--subjects", semisup.subjects, "Labeled subject ids")->delimiter(',');

  ExportViewsOptions exportv;
  auto* e = app.add_subcommand("export-views", "Write 3x3 view grids");
  add_common(e, exportv.common);
  e->add_option("--checkpoint", exportv.checkpoint, "Pretraining checkpoint")->required();
  e->add_option("--images", exportv.images, "PPM/PGM inputs (default: validation examples)");
  e->add_option("--count", exportv.count, "Validation examples when --images is absent");
  e->add_option("--channel", exportv.channel, "Spectrogram channel to display");

  MakeCornersOptions corners;
  auto* mc = app.add_subcommand("make-corners", "Build the shuffled-quadrant dataset");
  mc->add_option("--input", corners.input, "Manifest, image directory or CIFAR-10 directory")
      ->required();
  mc->add_option("--out", corners.out, "Output directory")->required();
  mc->add_option("--seed", corners.seed, "Donor sampling seed");
  mc->add_option("--limit", corners.limit, "Use at most this many images");

  AuditCornersOptions audit;
  auto* ac = app.add_subcommand("audit-corners", "Check quadrant provenance");
  ac->add_option("--derived", audit.derived, "make-corners output")->required();
  ac->add_option("--source", audit.source, "Original images")->required();
  ac->add_option("--out", audit.out, "Directory for audit.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  if (p->parsed()) return cmd_pretrain(pretrain);
  if (t->parsed()) return cmd_transfer(transfer);
  if (r->parsed()) return cmd_robustness(robust);
  if (s->parsed()) return cmd_semisup(semisup);
  if (e->parsed()) return cmd_export_views(exportv);
  if (mc->parsed()) return cmd_make_corners(corners);
  return cmd_audit_corners(audit);
}
