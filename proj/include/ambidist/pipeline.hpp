#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ambidist/analysis.hpp"
#include "ambidist/corpus.hpp"
#include "ambidist/dimeaug.hpp"
#include "ambidist/disthead.hpp"
#include "ambidist/synthgen.hpp"
#include "ambidist/types.hpp"

namespace ambidist::pipeline {

// Resolved run configuration. One master seed drives every stage; stage
// streams are derived as mix_seed(seed, stage label) so no stage's
// randomness depends on another's.
struct PipelineConfig {
  std::vector<std::string> categories = {"Angry", "Happy", "Sad", "Neutral"};
  std::vector<std::string> other_labels;
  std::string dataset = "dataset";
  std::uint64_t seed = 0;

  // provider
  std::string provider_mode = "mock";  // mock | remote
  std::string endpoint;
  std::string model = "mock-alm";
  std::string credential_env = "AMBIDIST_API_KEY";
  double temperature_min = 0.1;
  double temperature_max = 1.0;
  std::vector<double> temperature_grid;
  std::string persona_sampling = "independent";  // independent | cycle
  int retries = 3;
  int max_in_flight = 1;
  double rate_per_sec = 0.0;

  // split
  double train_fraction = 0.8;
  bool split_by_speaker = false;

  // mixup
  std::string lambda_policy = "uniform_high";  // uniform_high | fixed | uniform_full
  double lambda_fixed = 0.7;
  double transcript_threshold = 0.5;
  std::string neighbor_scope = "same_class";  // same_class | any_class
  int knn_k = 1;
  double augment_ratio = 0.2;

  // distributional head
  std::size_t d_model = 8;
  std::size_t n_heads = 2;
  std::size_t d_hidden = 16;
  double learning_rate = 0.05;
  std::size_t max_epochs = 200;
  std::size_t patience = 8;
  std::string pooling = "mean";
  double val_fraction = 0.2;

  static PipelineConfig from_file(const std::filesystem::path& path);
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::string hash() const;  // sha256 of the canonical JSON dump

  CategorySet category_set() const;
  corpus::LoadOptions load_options() const;
  corpus::SplitSpec split_spec() const;
  dimeaug::MixConfig mix_config() const;
  disthead::HeadConfig head_config() const;
  synthgen::GeneratePolicy generate_policy() const;
};

analysis::Source parse_source(const std::string& name);

// One stored synthetic annotation, as serialized in synthetic.jsonl.
struct StoredAnnotation {
  int draw = 0;
  int label_id = -1;
  std::string label;
  std::string persona;
  double temperature = 1.0;
  std::string model;
  int attempt = 1;
  std::string raw_response;
};

using SyntheticMap = std::map<std::string, std::vector<StoredAnnotation>>;

SyntheticMap load_synthetic(const std::filesystem::path& path);

// --- stages -----------------------------------------------------------

struct IngestOptions {
  std::filesystem::path manifest;
  bool split = false;
};

struct AnnotateOptions {
  std::filesystem::path manifest;
  int n_per_utterance = 6;
  std::filesystem::path cache_dir;  // empty -> <out>/cache
};

struct AggregateOptions {
  std::filesystem::path manifest;
  std::filesystem::path synthetic;  // optional for source=human
  std::string source = "human";
};

struct AugmentOptions {
  std::filesystem::path manifest;   // training manifest
  std::filesystem::path synthetic;  // optional for source=human
  std::string source = "human";
  std::optional<double> ratio;  // default: config.augment_ratio
};

struct SaturationOptions {
  std::filesystem::path manifest;
  std::filesystem::path synthetic;
  int n_max = 20;
  std::vector<int> n_values;  // overrides n_max when non-empty
};

struct AmbiguityOptions {
  std::filesystem::path manifest;  // test manifest (human references)
  std::filesystem::path predictions;
};

struct StatsOptions {
  std::filesystem::path manifest;
  std::filesystem::path synthetic;  // optional: human-only stats
};

struct TrainHeadOptions {
  std::filesystem::path manifest;   // training manifest (may be augmented)
  std::filesystem::path synthetic;  // optional for source=human
  std::string source = "human";
};

struct EvaluateOptions {
  std::filesystem::path manifest;  // test manifest
  std::filesystem::path checkpoint_bin;
  std::filesystem::path checkpoint_json;  // empty -> bin with .json extension
  std::string source = "human";  // bookkeeping: the training source
  bool augmented = false;        // bookkeeping: trained with augmentation?
};

struct ReportOptions {
  std::vector<std::filesystem::path> metrics;  // evaluate outputs
  std::vector<std::filesystem::path> stats;    // stats.csv files to merge
};

void stage_ingest(const PipelineConfig& config, const IngestOptions& opts,
                  const std::filesystem::path& out_dir);
void stage_annotate(const PipelineConfig& config, const AnnotateOptions& opts,
                    const std::filesystem::path& out_dir);
void stage_aggregate(const PipelineConfig& config, const AggregateOptions& opts,
                     const std::filesystem::path& out_dir);
void stage_augment(const PipelineConfig& config, const AugmentOptions& opts,
                   const std::filesystem::path& out_dir);
void stage_saturation(const PipelineConfig& config,
                      const SaturationOptions& opts,
                      const std::filesystem::path& out_dir);
void stage_ambiguity(const PipelineConfig& config, const AmbiguityOptions& opts,
                     const std::filesystem::path& out_dir);
void stage_stats(const PipelineConfig& config, const StatsOptions& opts,
                 const std::filesystem::path& out_dir);
void stage_train_head(const PipelineConfig& config,
                      const TrainHeadOptions& opts,
                      const std::filesystem::path& out_dir);
void stage_evaluate(const PipelineConfig& config, const EvaluateOptions& opts,
                    const std::filesystem::path& out_dir);
void stage_report(const PipelineConfig& config, const ReportOptions& opts,
                  const std::filesystem::path& out_dir);

}  // namespace ambidist::pipeline
