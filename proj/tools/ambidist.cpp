// ambidist: batch pipeline for distributional emotion labels.
//
// Subcommands cover one stage each so partial pipelines compose:
//   ingest -> annotate -> aggregate -> augment -> train-head -> evaluate
//   -> report, plus analyze-saturation / analyze-ambiguity / stats.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ambidist/errors.hpp"
#include "ambidist/pipeline.hpp"

namespace {

using ambidist::pipeline::PipelineConfig;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

PipelineConfig resolve_config(const GlobalArgs& args) {
  PipelineConfig config;
  if (!args.config_path.empty()) {
    config = PipelineConfig::from_file(args.config_path);
  }
  if (args.seed_set) config.seed = args.seed;
  return config;
}

int fail_with(const std::string& stage, const std::exception& ex) {
  nlohmann::json err;
  err["stage"] = stage;
  if (const auto* e = dynamic_cast<const ambidist::Error*>(&ex)) {
    err["error"] = {{"kind", e->kind()}, {"message", e->what()}};
  } else {
    err["error"] = {{"kind", "Unexpected"}, {"message", ex.what()}};
  }
  std::fprintf(stderr, "%s\n", err.dump().c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ambidist: emotion distribution pipeline"};
  app.require_subcommand(1);

  GlobalArgs global;
  app.add_option("--config", global.config_path,
                 "pipeline config JSON (defaults apply when omitted)");
  app.add_option("--out", global.out_dir, "run output directory");
  app.add_option("--seed", global.seed, "master seed (overrides config)")
      ->each([&global](const std::string&) { global.seed_set = true; });

  ambidist::pipeline::IngestOptions ingest;
  auto* cmd_ingest = app.add_subcommand(
      "ingest", "load, validate, filter, and optionally split a manifest");
  cmd_ingest->add_option("--manifest", ingest.manifest, "input JSONL manifest")
      ->required();
  cmd_ingest->add_flag("--split", ingest.split, "write train/test manifests");

  ambidist::pipeline::AnnotateOptions annotate;
  std::string provider_override;
  auto* cmd_annotate = app.add_subcommand(
      "annotate", "generate synthetic annotations for every utterance");
  cmd_annotate
      ->add_option("--manifest", annotate.manifest, "input JSONL manifest")
      ->required();
  cmd_annotate->add_option("--n", annotate.n_per_utterance,
                           "synthetic annotations per utterance");
  cmd_annotate->add_option("--cache", annotate.cache_dir,
                           "annotation cache directory (default <out>/cache)");
  cmd_annotate->add_option("--provider", provider_override,
                           "provider mode override: mock|remote");

  ambidist::pipeline::AggregateOptions aggregate;
  auto* cmd_aggregate = app.add_subcommand(
      "aggregate", "write per-utterance emotion distributions");
  cmd_aggregate
      ->add_option("--manifest", aggregate.manifest, "input JSONL manifest")
      ->required();
  cmd_aggregate->add_option("--synthetic", aggregate.synthetic,
                            "synthetic.jsonl from annotate");
  cmd_aggregate->add_option("--source", aggregate.source,
                            "human|synthetic|combined");

  ambidist::pipeline::AugmentOptions augment;
  double ratio_flag = -1.0;
  auto* cmd_augment = app.add_subcommand(
      "augment", "balance minority classes with distribution-aware mixup");
  cmd_augment
      ->add_option("--manifest", augment.manifest, "training manifest")
      ->required();
  cmd_augment->add_option("--synthetic", augment.synthetic,
                          "synthetic.jsonl from annotate");
  cmd_augment->add_option("--source", augment.source,
                          "distribution source: human|synthetic|combined");
  cmd_augment->add_option("--ratio", ratio_flag,
                          "augmentation budget as a fraction of train size");

  ambidist::pipeline::SaturationOptions saturation;
  auto* cmd_saturation = app.add_subcommand(
      "analyze-saturation", "JSD vs. annotation count with fitted decay");
  cmd_saturation
      ->add_option("--manifest", saturation.manifest, "input JSONL manifest")
      ->required();
  cmd_saturation
      ->add_option("--synthetic", saturation.synthetic,
                   "synthetic.jsonl from annotate")
      ->required();
  cmd_saturation->add_option("--n-max", saturation.n_max,
                             "evaluate n = 1..n_max");
  cmd_saturation->add_option("--n-values", saturation.n_values,
                             "explicit annotation counts");

  ambidist::pipeline::AmbiguityOptions ambiguity;
  auto* cmd_ambiguity = app.add_subcommand(
      "analyze-ambiguity", "per-tertile metrics over human-label entropy");
  cmd_ambiguity
      ->add_option("--manifest", ambiguity.manifest, "test manifest")
      ->required();
  cmd_ambiguity
      ->add_option("--predictions", ambiguity.predictions,
                   "predictions.jsonl from evaluate")
      ->required();

  ambidist::pipeline::StatsOptions stats;
  auto* cmd_stats = app.add_subcommand(
      "stats", "Fleiss' kappa and entropy per annotation source");
  cmd_stats->add_option("--manifest", stats.manifest, "input JSONL manifest")
      ->required();
  cmd_stats->add_option("--synthetic", stats.synthetic,
                        "synthetic.jsonl from annotate");

  ambidist::pipeline::TrainHeadOptions train_head;
  auto* cmd_train = app.add_subcommand(
      "train-head", "train the distributional head on feature sequences");
  cmd_train
      ->add_option("--manifest", train_head.manifest, "training manifest")
      ->required();
  cmd_train->add_option("--synthetic", train_head.synthetic,
                        "synthetic.jsonl from annotate");
  cmd_train->add_option("--source", train_head.source,
                        "target source: human|synthetic|combined");

  ambidist::pipeline::EvaluateOptions evaluate;
  auto* cmd_evaluate = app.add_subcommand(
      "evaluate", "evaluate a checkpoint against human references");
  cmd_evaluate
      ->add_option("--manifest", evaluate.manifest, "test manifest")
      ->required();
  cmd_evaluate
      ->add_option("--checkpoint", evaluate.checkpoint_bin, "checkpoint.bin")
      ->required();
  cmd_evaluate->add_option("--checkpoint-json", evaluate.checkpoint_json,
                           "sidecar (default: checkpoint with .json)");
  cmd_evaluate->add_option("--source", evaluate.source,
                           "training source recorded in the report");
  cmd_evaluate->add_flag("--augmented", evaluate.augmented,
                         "mark the row as trained with augmentation");

  ambidist::pipeline::ReportOptions report;
  auto* cmd_report = app.add_subcommand(
      "report", "assemble report.csv / stats.csv from stage outputs");
  cmd_report->add_option("--metrics", report.metrics,
                         "metrics.json files from evaluate runs");
  cmd_report->add_option("--stats", report.stats,
                         "stats.csv files to merge");

  CLI11_PARSE(app, argc, argv);

  std::string stage = "config";
  try {
    PipelineConfig config = resolve_config(global);
    if (!provider_override.empty()) config.provider_mode = provider_override;
    if (ratio_flag > 0.0) augment.ratio = ratio_flag;

    if (cmd_ingest->parsed()) {
      stage = "ingest";
      ambidist::pipeline::stage_ingest(config, ingest, global.out_dir);
    } else if (cmd_annotate->parsed()) {
      stage = "annotate";
      ambidist::pipeline::stage_annotate(config, annotate, global.out_dir);
    } else if (cmd_aggregate->parsed()) {
      stage = "aggregate";
      ambidist::pipeline::stage_aggregate(config, aggregate, global.out_dir);
    } else if (cmd_augment->parsed()) {
      stage = "augment";
      ambidist::pipeline::stage_augment(config, augment, global.out_dir);
    } else if (cmd_saturation->parsed()) {
      stage = "analyze-saturation";
      ambidist::pipeline::stage_saturation(config, saturation, global.out_dir);
    } else if (cmd_ambiguity->parsed()) {
      stage = "analyze-ambiguity";
      ambidist::pipeline::stage_ambiguity(config, ambiguity, global.out_dir);
    } else if (cmd_stats->parsed()) {
      stage = "stats";
      ambidist::pipeline::stage_stats(config, stats, global.out_dir);
    } else if (cmd_train->parsed()) {
      stage = "train-head";
      ambidist::pipeline::stage_train_head(config, train_head, global.out_dir);
    } else if (cmd_evaluate->parsed()) {
      stage = "evaluate";
      ambidist::pipeline::stage_evaluate(config, evaluate, global.out_dir);
    } else if (cmd_report->parsed()) {
      stage = "report";
      ambidist::pipeline::stage_report(config, report, global.out_dir);
    }
  } catch (const std::exception& ex) {
    return fail_with(stage, ex);
  }
  return 0;
}
