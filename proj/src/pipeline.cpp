#include "ambidist/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <utility>

#include "ambidist/audio_io.hpp"
#include "ambidist/distmath.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/features_io.hpp"
#include "ambidist/rng.hpp"
#include "ambidist/strings.hpp"
#include "ambidist/svgplot.hpp"

namespace ambidist::pipeline {

namespace {

using nlohmann::json;

void ensure_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << text;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

// Every stage leaves a provenance record: inputs, config hash, seed.
void write_run_info(const std::filesystem::path& out_dir,
                    const std::string& command, const PipelineConfig& config,
                    const json& inputs, const std::vector<std::string>& outputs,
                    const json& extra = json::object()) {
  json info;
  info["command"] = command;
  info["config_hash"] = config.hash();
  info["seed"] = config.seed;
  info["inputs"] = inputs;
  info["outputs"] = outputs;
  if (!extra.empty()) info["details"] = extra;
  write_json_file(out_dir / "run_info.json", info);
}

int source_rank(const std::string& source) {
  if (source == "human") return 0;
  if (source == "synthetic") return 1;
  if (source == "combined") return 2;
  return 3;
}

// Aggregated distribution of one manifest entry for the given source.
// Augmented entries carry their mixed distribution explicitly.
EmotionDistribution entry_distribution(const corpus::ManifestEntry& entry,
                                       const SyntheticMap& synthetic,
                                       analysis::Source source,
                                       std::size_t k) {
  if (entry.augmented && entry.distribution) {
    return EmotionDistribution(*entry.distribution, 1e-6);
  }
  std::vector<int> labels;
  if (source != analysis::Source::synthetic) {
    for (int id : entry.annotation_ids) {
      if (id < 0) {
        throw UnknownCategory("entry '" + entry.id +
                              "' still carries out-of-set annotations; run "
                              "the filter first");
      }
      labels.push_back(id);
    }
  }
  if (source != analysis::Source::human) {
    const auto it = synthetic.find(entry.id);
    if (it == synthetic.end() || it->second.empty()) {
      throw EmptyAnnotationSet("entry '" + entry.id +
                               "' has no synthetic annotations; run annotate "
                               "first or use --source human");
    }
    for (const auto& rec : it->second) labels.push_back(rec.label_id);
  }
  AnnotationSet set;
  set.labels = std::move(labels);
  set.sources.assign(set.labels.size(), SourceTag::human);
  return distmath::aggregate_annotations(set, k);
}

// Materialized utterances with per-source distributions, used by the
// augmentation and analysis stages.
std::vector<Utterance> build_utterances(const corpus::CorpusManifest& manifest,
                                        const SyntheticMap& synthetic,
                                        std::optional<analysis::Source> source,
                                        bool with_audio, bool with_features) {
  std::vector<Utterance> out;
  out.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    Utterance u =
        corpus::materialize(entry, manifest.categories, with_audio,
                            with_features);
    if (const auto it = synthetic.find(entry.id); it != synthetic.end()) {
      for (const auto& rec : it->second) {
        u.synthetic_annotations.push_back(rec.label_id);
      }
    }
    if (source) {
      u.distribution = entry_distribution(entry, synthetic, *source,
                                          manifest.categories.size());
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::filesystem::path sidecar_for(const std::filesystem::path& bin) {
  std::filesystem::path p = bin;
  p.replace_extension(".json");
  return p;
}

}  // namespace

analysis::Source parse_source(const std::string& name) {
  if (name == "human") return analysis::Source::human;
  if (name == "synthetic") return analysis::Source::synthetic;
  if (name == "combined") return analysis::Source::combined;
  throw ConfigError("unknown source '" + name +
                    "' (expected human|synthetic|combined)");
}

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ConfigError("config " + path.string() + ": " + ex.what());
  }
  return from_json(j);
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    c.categories = j.value("categories", c.categories);
    c.other_labels = j.value("other_labels", c.other_labels);
    c.dataset = j.value("dataset", c.dataset);
    c.seed = j.value("seed", c.seed);
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      c.provider_mode = p.value("mode", c.provider_mode);
      c.endpoint = p.value("endpoint", c.endpoint);
      c.model = p.value("model", c.model);
      c.credential_env = p.value("credential_env", c.credential_env);
      c.temperature_min = p.value("temperature_min", c.temperature_min);
      c.temperature_max = p.value("temperature_max", c.temperature_max);
      c.temperature_grid = p.value("temperature_grid", c.temperature_grid);
      c.persona_sampling = p.value("persona_sampling", c.persona_sampling);
      c.retries = p.value("retries", c.retries);
      c.max_in_flight = p.value("max_in_flight", c.max_in_flight);
      c.rate_per_sec = p.value("rate_per_sec", c.rate_per_sec);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.train_fraction = s.value("train_fraction", c.train_fraction);
      c.split_by_speaker = s.value("by_speaker", c.split_by_speaker);
    }
    if (j.contains("mix")) {
      const auto& m = j.at("mix");
      c.lambda_policy = m.value("lambda_policy", c.lambda_policy);
      c.lambda_fixed = m.value("lambda_fixed", c.lambda_fixed);
      c.transcript_threshold =
          m.value("transcript_threshold", c.transcript_threshold);
      c.neighbor_scope = m.value("neighbor_scope", c.neighbor_scope);
      c.knn_k = m.value("k", c.knn_k);
      c.augment_ratio = m.value("ratio", c.augment_ratio);
    }
    if (j.contains("head")) {
      const auto& h = j.at("head");
      c.d_model = h.value("d_model", c.d_model);
      c.n_heads = h.value("n_heads", c.n_heads);
      c.d_hidden = h.value("d_hidden", c.d_hidden);
      c.learning_rate = h.value("learning_rate", c.learning_rate);
      c.max_epochs = h.value("max_epochs", c.max_epochs);
      c.patience = h.value("patience", c.patience);
      c.pooling = h.value("pooling", c.pooling);
      c.val_fraction = h.value("val_fraction", c.val_fraction);
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad config: ") + ex.what());
  }
  if (c.dataset.find(',') != std::string::npos ||
      c.dataset.find('"') != std::string::npos) {
    throw ConfigError("dataset name must not contain commas or quotes");
  }
  if (c.train_fraction <= 0.0 || c.train_fraction >= 1.0) {
    throw ConfigError("split.train_fraction must be in (0, 1)");
  }
  c.category_set();  // validates
  return c;
}

json PipelineConfig::to_json() const {
  json j;
  j["categories"] = categories;
  j["other_labels"] = other_labels;
  j["dataset"] = dataset;
  j["seed"] = seed;
  j["provider"] = {
      {"mode", provider_mode},
      {"endpoint", endpoint},
      {"model", model},
      {"credential_env", credential_env},
      {"temperature_min", temperature_min},
      {"temperature_max", temperature_max},
      {"temperature_grid", temperature_grid},
      {"persona_sampling", persona_sampling},
      {"retries", retries},
      {"max_in_flight", max_in_flight},
      {"rate_per_sec", rate_per_sec},
  };
  j["split"] = {{"train_fraction", train_fraction},
                {"by_speaker", split_by_speaker}};
  j["mix"] = {{"lambda_policy", lambda_policy},
              {"lambda_fixed", lambda_fixed},
              {"transcript_threshold", transcript_threshold},
              {"neighbor_scope", neighbor_scope},
              {"k", knn_k},
              {"ratio", augment_ratio}};
  j["head"] = {{"d_model", d_model},
               {"n_heads", n_heads},
               {"d_hidden", d_hidden},
               {"learning_rate", learning_rate},
               {"max_epochs", max_epochs},
               {"patience", patience},
               {"pooling", pooling},
               {"val_fraction", val_fraction}};
  return j;
}

std::string PipelineConfig::hash() const { return sha256_hex(to_json().dump()); }

CategorySet PipelineConfig::category_set() const {
  return CategorySet(categories);
}

corpus::LoadOptions PipelineConfig::load_options() const {
  corpus::LoadOptions opts;
  opts.categories = category_set();
  opts.other_labels = other_labels;
  return opts;
}

corpus::SplitSpec PipelineConfig::split_spec() const {
  corpus::SplitSpec spec;
  spec.train_fraction = train_fraction;
  spec.seed = mix_seed(seed, fnv1a64("split"));
  spec.by_speaker = split_by_speaker;
  return spec;
}

dimeaug::MixConfig PipelineConfig::mix_config() const {
  dimeaug::MixConfig m;
  if (lambda_policy == "uniform_high") {
    m.lambda_policy = dimeaug::MixConfig::LambdaPolicy::uniform_high;
  } else if (lambda_policy == "fixed") {
    m.lambda_policy = dimeaug::MixConfig::LambdaPolicy::fixed;
  } else if (lambda_policy == "uniform_full") {
    m.lambda_policy = dimeaug::MixConfig::LambdaPolicy::uniform_full;
  } else {
    throw ConfigError("unknown lambda_policy '" + lambda_policy + "'");
  }
  m.lambda_fixed = lambda_fixed;
  m.transcript_threshold = transcript_threshold;
  if (neighbor_scope == "same_class") {
    m.neighbor_scope = dimeaug::MixConfig::NeighborScope::same_class;
  } else if (neighbor_scope == "any_class") {
    m.neighbor_scope = dimeaug::MixConfig::NeighborScope::any_class;
  } else {
    throw ConfigError("unknown neighbor_scope '" + neighbor_scope + "'");
  }
  m.k = knn_k;
  m.seed = mix_seed(seed, fnv1a64("dimeaug"));
  return m;
}

disthead::HeadConfig PipelineConfig::head_config() const {
  disthead::HeadConfig h;
  h.d_model = d_model;
  h.n_heads = n_heads;
  h.d_hidden = d_hidden;
  h.k_out = categories.size();
  h.seed = mix_seed(seed, fnv1a64("disthead"));
  h.learning_rate = learning_rate;
  h.max_epochs = max_epochs;
  h.patience = patience;
  if (pooling == "mean") {
    h.pooling = disthead::HeadConfig::Pooling::mean;
  } else if (pooling == "max") {
    h.pooling = disthead::HeadConfig::Pooling::max;
  } else {
    throw ConfigError("unknown pooling '" + pooling + "'");
  }
  h.validate();
  return h;
}

synthgen::GeneratePolicy PipelineConfig::generate_policy() const {
  synthgen::GeneratePolicy p;
  p.seed = mix_seed(seed, fnv1a64("annotate"));
  p.temperature_min = temperature_min;
  p.temperature_max = temperature_max;
  p.temperature_grid = temperature_grid;
  p.persona_sampling =
      persona_sampling == "cycle"
          ? synthgen::GeneratePolicy::PersonaSampling::cycle
          : synthgen::GeneratePolicy::PersonaSampling::independent;
  p.retries = retries;
  p.max_in_flight = max_in_flight;
  p.rate_per_sec = rate_per_sec;
  return p;
}

SyntheticMap load_synthetic(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open synthetic annotations " + path.string());
  }
  SyntheticMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      StoredAnnotation rec;
      rec.draw = j.at("draw").get<int>();
      rec.label_id = j.at("label_id").get<int>();
      rec.label = j.at("label").get<std::string>();
      rec.persona = j.value("persona", std::string{});
      rec.temperature = j.value("temperature", 1.0);
      rec.model = j.value("model", std::string{});
      rec.attempt = j.value("attempt", 1);
      rec.raw_response = j.value("raw_response", std::string{});
      map[j.at("utterance_id").get<std::string>()].push_back(std::move(rec));
    } catch (const json::exception& ex) {
      throw ConfigError(path.string() + " line " + std::to_string(line_no) +
                        ": " + ex.what());
    }
  }
  for (auto& [id, recs] : map) {
    std::sort(recs.begin(), recs.end(),
              [](const StoredAnnotation& a, const StoredAnnotation& b) {
                return a.draw < b.draw;
              });
  }
  return map;
}

void stage_ingest(const PipelineConfig& config, const IngestOptions& opts,
                  const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  const auto filtered =
      corpus::filter_by_categories(manifest, config.category_set());
  corpus::write_manifest(out_dir / "filtered.jsonl", filtered.manifest);

  json counts;
  counts["loaded"] = manifest.entries.size();
  counts["kept"] = filtered.kept;
  counts["dropped"] = filtered.dropped;

  std::vector<std::string> outputs = {"filtered.jsonl", "counts.json",
                                      "run_info.json"};
  if (opts.split) {
    std::vector<std::string> warnings;
    const auto split = corpus::split_train_test(filtered.manifest.entries,
                                                config.split_spec(), &warnings);
    corpus::CorpusManifest train = filtered.manifest;
    corpus::CorpusManifest test = filtered.manifest;
    train.entries.clear();
    test.entries.clear();
    for (std::size_t i : split.train) {
      train.entries.push_back(filtered.manifest.entries[i]);
    }
    for (std::size_t i : split.test) {
      test.entries.push_back(filtered.manifest.entries[i]);
    }
    corpus::write_manifest(out_dir / "train.jsonl", train);
    corpus::write_manifest(out_dir / "test.jsonl", test);
    counts["train"] = train.entries.size();
    counts["test"] = test.entries.size();
    if (!warnings.empty()) counts["warnings"] = warnings;
    outputs.push_back("train.jsonl");
    outputs.push_back("test.jsonl");
  }
  write_json_file(out_dir / "counts.json", counts);
  write_run_info(out_dir, "ingest", config,
                 {{"manifest", opts.manifest.string()}}, outputs, counts);
}

void stage_annotate(const PipelineConfig& config, const AnnotateOptions& opts,
                    const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  const CategorySet cats = config.category_set();
  const bool remote = config.provider_mode == "remote";

  std::vector<Utterance> utterances;
  utterances.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    // Remote calls ship the audio; the mock samples from human labels only.
    utterances.push_back(corpus::materialize(entry, cats, remote, false));
  }

  std::unique_ptr<synthgen::Provider> provider;
  if (remote) {
    synthgen::RemoteProvider::Options po;
    po.endpoint = config.endpoint;
    po.model = config.model;
    po.credential_env = config.credential_env;
    provider = std::make_unique<synthgen::RemoteProvider>(po);
  } else if (config.provider_mode == "mock") {
    provider = std::make_unique<synthgen::MockProvider>(cats);
  } else {
    throw ConfigError("unknown provider mode '" + config.provider_mode + "'");
  }

  const auto cache_dir =
      opts.cache_dir.empty() ? out_dir / "cache" : opts.cache_dir;
  synthgen::AnnotationCache cache(cache_dir);
  auto report = synthgen::generate_annotation_sets(
      utterances, opts.n_per_utterance, config.generate_policy(), *provider,
      cats, &cache);

  std::ofstream synth(out_dir / "synthetic.jsonl");
  for (const auto& rec : report.records) {
    json j;
    j["utterance_id"] = rec.utterance_id;
    j["draw"] = rec.config.draw;
    j["label"] = rec.label_name;
    j["label_id"] = rec.label;
    j["persona"] = rec.config.persona;
    j["temperature"] = rec.config.temperature;
    j["model"] = rec.config.model_name;
    j["attempt"] = rec.attempt;
    j["raw_response"] = rec.raw_response;
    synth << j.dump() << '\n';
  }
  synth.close();

  std::vector<std::string> outputs = {"synthetic.jsonl", "run_info.json"};
  if (!report.failures.empty()) {
    std::ofstream fail(out_dir / "failures.jsonl");
    for (const auto& f : report.failures) {
      json j;
      j["utterance_id"] = f.utterance_id;
      j["draw"] = f.draw;
      j["reason"] = f.reason;
      fail << j.dump() << '\n';
    }
    outputs.push_back("failures.jsonl");
  }

  json details;
  details["n_per_utterance"] = opts.n_per_utterance;
  details["provider"] = config.provider_mode;
  details["records"] = report.records.size();
  details["failures"] = report.failures.size();
  details["provider_calls"] = report.provider_calls;
  details["cache_hits"] = report.cache_hits;
  details["cache_dir"] = cache_dir.string();
  write_run_info(out_dir, "annotate", config,
                 {{"manifest", opts.manifest.string()}}, outputs, details);
}

void stage_aggregate(const PipelineConfig& config, const AggregateOptions& opts,
                     const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  const auto source = parse_source(opts.source);
  SyntheticMap synthetic;
  if (!opts.synthetic.empty()) synthetic = load_synthetic(opts.synthetic);

  std::ofstream out(out_dir / "distributions.jsonl");
  for (const auto& entry : manifest.entries) {
    const auto dist = entry_distribution(entry, synthetic, source,
                                         manifest.categories.size());
    json j;
    j["id"] = entry.id;
    j["source"] = opts.source;
    j["distribution"] = dist.probs();
    out << j.dump() << '\n';
  }
  out.close();
  write_run_info(out_dir, "aggregate", config,
                 {{"manifest", opts.manifest.string()},
                  {"synthetic", opts.synthetic.string()},
                  {"source", opts.source}},
                 {"distributions.jsonl", "run_info.json"});
}

void stage_augment(const PipelineConfig& config, const AugmentOptions& opts,
                   const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  ensure_dir(out_dir / "audio");
  ensure_dir(out_dir / "features");
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  const auto source = parse_source(opts.source);
  SyntheticMap synthetic;
  if (!opts.synthetic.empty()) synthetic = load_synthetic(opts.synthetic);

  const auto utterances =
      build_utterances(manifest, synthetic, source, true, true);
  const auto mix = config.mix_config();
  const double ratio = opts.ratio.value_or(config.augment_ratio);
  const std::size_t k = manifest.categories.size();

  const auto plan =
      dimeaug::plan_augmentation(utterances, ratio, mix, k);
  std::vector<std::string> warnings;
  const auto samples =
      dimeaug::balance_dataset(utterances, plan, mix, &warnings);

  corpus::CorpusManifest augmented = manifest;
  std::vector<std::size_t> counts_before(k, 0), counts_after(k, 0);
  for (const auto& u : utterances) {
    const auto c = static_cast<std::size_t>(
        distmath::dominant_emotion(*u.distribution));
    counts_before[c]++;
    counts_after[c]++;
  }
  for (const auto& s : samples) {
    const auto wav_path = out_dir / "audio" / (s.id + ".wav");
    audio::write_wav16(wav_path, s.audio, s.sample_rate);
    corpus::ManifestEntry entry;
    entry.id = s.id;
    entry.audio_path = wav_path.string();
    entry.transcript = s.transcript;
    entry.augmented = true;
    entry.distribution = s.distribution.probs();
    entry.parents = s.parents;
    entry.lambda = s.lambda;
    entry.embedding = s.embedding;
    if (s.feature_sequence) {
      const auto feat_path = out_dir / "features" / (s.id + ".bin");
      features::write_features(feat_path, *s.feature_sequence);
      entry.features_path = feat_path.string();
    }
    augmented.entries.push_back(std::move(entry));
    counts_after[static_cast<std::size_t>(
        distmath::dominant_emotion(s.distribution))]++;
  }
  corpus::write_manifest(out_dir / "augmented.jsonl", augmented);

  json plan_json;
  plan_json["ratio"] = ratio;
  plan_json["source"] = opts.source;
  plan_json["budget"] = plan.budget();
  json targets, before, after;
  for (std::size_t c = 0; c < k; ++c) {
    const auto& name = manifest.categories.name(c);
    targets[name] = plan.per_class_targets[c];
    before[name] = counts_before[c];
    after[name] = counts_after[c];
  }
  plan_json["targets"] = targets;
  plan_json["dominant_counts_before"] = before;
  plan_json["dominant_counts_after"] = after;
  if (!warnings.empty()) plan_json["warnings"] = warnings;
  write_json_file(out_dir / "plan.json", plan_json);

  write_run_info(out_dir, "augment", config,
                 {{"manifest", opts.manifest.string()},
                  {"synthetic", opts.synthetic.string()},
                  {"source", opts.source},
                  {"ratio", ratio}},
                 {"augmented.jsonl", "plan.json", "run_info.json"}, plan_json);
}

void stage_saturation(const PipelineConfig& config,
                      const SaturationOptions& opts,
                      const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  const auto synthetic = load_synthetic(opts.synthetic);
  const auto utterances =
      build_utterances(manifest, synthetic, std::nullopt, false, false);

  std::vector<int> n_values = opts.n_values;
  if (n_values.empty()) {
    for (int n = 1; n <= opts.n_max; ++n) n_values.push_back(n);
  }
  const auto curve = analysis::saturation_curve(utterances, n_values,
                                                manifest.categories.size());

  std::string csv = "n,mean_jsd,std_jsd\n";
  for (const auto& pt : curve.points) {
    csv += std::to_string(pt.n) + "," + format_fixed(pt.mean_jsd, 8) + "," +
           format_fixed(pt.std_jsd, 8) + "\n";
  }
  write_text(out_dir / "curve.csv", csv);

  json fit_json;
  std::optional<analysis::SaturationFit> fit;
  try {
    fit = analysis::fit_decay(curve);
    fit_json["a"] = fit->a;
    fit_json["b"] = fit->b;
    fit_json["c"] = fit->c;
    fit_json["n_star"] = fit->n_star;
    fit_json["rmse"] = fit->rmse;
    fit_json["model"] = "a*exp(-b*n)+c";
  } catch (const FitDiverged& ex) {
    fit_json["diverged"] = true;
    fit_json["reason"] = ex.what();
  }
  write_json_file(out_dir / "fit.json", fit_json);

  svgplot::LinePlotSpec plot;
  plot.title = config.dataset + ": JS divergence vs. synthetic annotations";
  plot.x_label = "number of synthetic annotations";
  plot.y_label = "mean JS divergence";
  svgplot::Series measured;
  measured.label = "measured";
  for (const auto& pt : curve.points) {
    measured.x.push_back(pt.n);
    measured.y.push_back(pt.mean_jsd);
    plot.error_bars.push_back(pt.std_jsd);
  }
  plot.series.push_back(measured);
  if (fit) {
    svgplot::Series fitted;
    fitted.label = "fit a*exp(-b*n)+c";
    fitted.color = "#ff7f0e";
    fitted.dashed = true;
    fitted.markers = false;
    const double n_lo = curve.points.front().n;
    const double n_hi = curve.points.back().n;
    for (double n = n_lo; n <= n_hi + 1e-9; n += (n_hi - n_lo) / 96.0) {
      fitted.x.push_back(n);
      fitted.y.push_back(analysis::decay_model(*fit, n));
    }
    plot.series.push_back(fitted);
    plot.vertical_marker = fit->n_star;
  }
  write_text(out_dir / "saturation.svg", svgplot::line_plot(plot));

  write_run_info(out_dir, "analyze-saturation", config,
                 {{"manifest", opts.manifest.string()},
                  {"synthetic", opts.synthetic.string()}},
                 {"curve.csv", "fit.json", "saturation.svg", "run_info.json"},
                 fit_json);
}

void stage_ambiguity(const PipelineConfig& config, const AmbiguityOptions& opts,
                     const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  const std::size_t k = manifest.categories.size();

  std::ifstream pred_in(opts.predictions);
  if (!pred_in) {
    throw ConfigError("cannot open predictions " + opts.predictions.string());
  }
  std::map<std::string, EmotionDistribution> by_id;
  std::string line;
  while (std::getline(pred_in, line)) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    by_id.emplace(j.at("id").get<std::string>(),
                  EmotionDistribution(
                      j.at("predicted").get<std::vector<double>>(), 1e-6));
  }

  std::vector<EmotionDistribution> reference, predicted;
  SyntheticMap empty;
  for (const auto& entry : manifest.entries) {
    const auto it = by_id.find(entry.id);
    if (it == by_id.end()) {
      throw ConfigError("no prediction for utterance '" + entry.id + "'");
    }
    reference.push_back(
        entry_distribution(entry, empty, analysis::Source::human, k));
    predicted.push_back(it->second);
  }
  std::vector<std::string> warnings;
  const auto bins = analysis::tertile_bins(reference, predicted, &warnings);

  json out;
  out["entropy_min"] = bins.entropy_min;
  out["entropy_max"] = bins.entropy_max;
  out["edges"] = {bins.edge_low, bins.edge_high};
  out["degenerate"] = bins.degenerate;
  json jbins = json::array();
  std::string csv = "bin,count,mean_js,mean_bc\n";
  for (const auto& b : bins.bins) {
    jbins.push_back({{"label", b.label},
                     {"count", b.count},
                     {"mean_js", b.mean_jsd},
                     {"mean_bc", b.mean_bc}});
    csv += b.label + "," + std::to_string(b.count) + "," +
           format_fixed(b.mean_jsd, 6) + "," + format_fixed(b.mean_bc, 6) +
           "\n";
  }
  out["bins"] = jbins;
  if (!warnings.empty()) out["warnings"] = warnings;
  write_json_file(out_dir / "ambiguity.json", out);
  write_text(out_dir / "ambiguity.csv", csv);

  svgplot::BarGroupSpec bars;
  bars.title = config.dataset + ": performance by ambiguity level";
  bars.y_label = "mean metric value";
  for (const auto& b : bins.bins) bars.groups.push_back(b.label);
  svgplot::BarGroupSpec::BarSeries js_series{"JS divergence", {}, "#1f77b4"};
  svgplot::BarGroupSpec::BarSeries bc_series{"Bhattacharyya", {}, "#ff7f0e"};
  for (const auto& b : bins.bins) {
    js_series.values.push_back(b.mean_jsd);
    bc_series.values.push_back(b.mean_bc);
  }
  bars.series = {js_series, bc_series};
  write_text(out_dir / "ambiguity.svg", svgplot::grouped_bars(bars));

  write_run_info(out_dir, "analyze-ambiguity", config,
                 {{"manifest", opts.manifest.string()},
                  {"predictions", opts.predictions.string()}},
                 {"ambiguity.csv", "ambiguity.json", "ambiguity.svg",
                  "run_info.json"});
}

void stage_stats(const PipelineConfig& config, const StatsOptions& opts,
                 const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  SyntheticMap synthetic;
  if (!opts.synthetic.empty()) synthetic = load_synthetic(opts.synthetic);
  const auto utterances =
      build_utterances(manifest, synthetic, std::nullopt, false, false);

  std::vector<analysis::Source> sources = {analysis::Source::human};
  if (!synthetic.empty()) {
    sources.push_back(analysis::Source::synthetic);
    sources.push_back(analysis::Source::combined);
  }

  std::string csv =
      "dataset,source,fleiss_kappa,mean_entropy_normalized,mean_entropy_bits\n";
  json rows = json::array();
  std::vector<std::string> warnings;
  for (const auto source : sources) {
    const auto stats = analysis::annotation_statistics(
        utterances, source, manifest.categories.size(), &warnings);
    csv += config.dataset + std::string(",") + analysis::source_name(source) +
           "," + format_fixed(stats.fleiss_kappa, 6) + "," +
           format_fixed(stats.mean_entropy_normalized, 6) + "," +
           format_fixed(stats.mean_entropy_bits, 6) + "\n";
    rows.push_back({{"dataset", config.dataset},
                    {"source", analysis::source_name(source)},
                    {"fleiss_kappa", stats.fleiss_kappa},
                    {"mean_entropy_normalized", stats.mean_entropy_normalized},
                    {"mean_entropy_bits", stats.mean_entropy_bits},
                    {"items", stats.items}});
  }
  write_text(out_dir / "stats.csv", csv);
  json out;
  out["rows"] = rows;
  if (!warnings.empty()) out["warnings"] = warnings;
  write_json_file(out_dir / "stats.json", out);

  write_run_info(out_dir, "stats", config,
                 {{"manifest", opts.manifest.string()},
                  {"synthetic", opts.synthetic.string()}},
                 {"stats.csv", "stats.json", "run_info.json"});
}

namespace {

std::vector<disthead::TrainSample> samples_from_manifest(
    const corpus::CorpusManifest& manifest, const SyntheticMap& synthetic,
    analysis::Source source) {
  std::vector<disthead::TrainSample> samples;
  samples.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    if (entry.features_path.empty()) {
      throw ConfigError("entry '" + entry.id +
                        "' has no features_path; the distributional head "
                        "needs precomputed feature sequences");
    }
    disthead::TrainSample s;
    s.features = features::read_features(entry.features_path);
    s.target = entry_distribution(entry, synthetic, source,
                                  manifest.categories.size());
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

void stage_train_head(const PipelineConfig& config,
                      const TrainHeadOptions& opts,
                      const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  SyntheticMap synthetic;
  if (!opts.synthetic.empty()) synthetic = load_synthetic(opts.synthetic);
  auto samples =
      samples_from_manifest(manifest, synthetic, parse_source(opts.source));
  if (samples.size() < 2) {
    throw ConfigError("need at least 2 samples to train");
  }

  // Seeded train/validation split.
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(config.seed, fnv1a64("train-val-split")));
  rng.shuffle(order);
  auto val_n = static_cast<std::size_t>(
      std::llround(config.val_fraction * static_cast<double>(samples.size())));
  val_n = std::clamp<std::size_t>(val_n, 1, samples.size() - 1);
  std::vector<disthead::TrainSample> train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < samples.size() - val_n ? train_set : val_set;
    dst.push_back(std::move(samples[order[i]]));
  }

  const auto head_config = config.head_config();
  const auto result = disthead::train(train_set, val_set, head_config);

  save_checkpoint(result.params, out_dir / "checkpoint.bin",
                  out_dir / "checkpoint.json");
  std::string history = "epoch,train_jsd,val_jsd,lr\n";
  for (const auto& e : result.history) {
    history += std::to_string(e.epoch) + "," + format_fixed(e.train_jsd, 8) +
               "," + format_fixed(e.val_jsd, 8) + "," +
               format_fixed(e.lr, 8) + "\n";
  }
  write_text(out_dir / "history.csv", history);

  json details;
  details["source"] = opts.source;
  details["train_samples"] = train_set.size();
  details["val_samples"] = val_set.size();
  details["epochs_run"] = result.history.size();
  details["best_epoch"] = result.best_epoch;
  details["best_val_jsd"] = result.best_val_jsd;
  write_run_info(out_dir, "train-head", config,
                 {{"manifest", opts.manifest.string()},
                  {"synthetic", opts.synthetic.string()},
                  {"source", opts.source}},
                 {"checkpoint.bin", "checkpoint.json", "history.csv",
                  "run_info.json"},
                 details);
}

void stage_evaluate(const PipelineConfig& config, const EvaluateOptions& opts,
                    const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const auto manifest = corpus::load_manifest(opts.manifest,
                                              config.load_options());
  // The evaluation reference is always the human-derived distribution.
  SyntheticMap empty;
  auto samples =
      samples_from_manifest(manifest, empty, analysis::Source::human);

  const auto sidecar = opts.checkpoint_json.empty()
                           ? sidecar_for(opts.checkpoint_bin)
                           : opts.checkpoint_json;
  const auto params = disthead::load_checkpoint(opts.checkpoint_bin, sidecar);

  std::vector<std::string> warnings;
  const auto eval = disthead::evaluate_model(params, samples, &warnings);

  std::ofstream pred(out_dir / "predictions.jsonl");
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto p = disthead::forward(samples[i].features, params);
    json j;
    j["id"] = manifest.entries[i].id;
    j["predicted"] = p.probs();
    pred << j.dump() << '\n';
  }
  pred.close();

  json metrics;
  metrics["dataset"] = config.dataset;
  metrics["source"] = opts.source;
  metrics["augmented"] = opts.augmented;
  metrics["n"] = eval.n;
  metrics["mean_js"] = eval.mean_jsd;
  metrics["mean_bc"] = eval.mean_bc;
  json tert;
  tert["entropy_min"] = eval.tertiles.entropy_min;
  tert["entropy_max"] = eval.tertiles.entropy_max;
  tert["edges"] = {eval.tertiles.edge_low, eval.tertiles.edge_high};
  tert["degenerate"] = eval.tertiles.degenerate;
  json jbins = json::array();
  for (const auto& b : eval.tertiles.bins) {
    jbins.push_back({{"label", b.label},
                     {"count", b.count},
                     {"mean_js", b.mean_jsd},
                     {"mean_bc", b.mean_bc}});
  }
  tert["bins"] = jbins;
  metrics["tertiles"] = tert;
  if (!warnings.empty()) metrics["warnings"] = warnings;
  write_json_file(out_dir / "metrics.json", metrics);

  write_run_info(out_dir, "evaluate", config,
                 {{"manifest", opts.manifest.string()},
                  {"checkpoint", opts.checkpoint_bin.string()},
                  {"source", opts.source},
                  {"augmented", opts.augmented}},
                 {"predictions.jsonl", "metrics.json", "run_info.json"});
}

void stage_report(const PipelineConfig& config, const ReportOptions& opts,
                  const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  struct Row {
    std::string dataset;
    bool augmented;
    std::string source;
    double js;
    double bc;
  };
  std::vector<Row> rows;
  for (const auto& path : opts.metrics) {
    std::ifstream in(path);
    if (!in) {
      throw ConfigError("cannot open metrics " + path.string());
    }
    json j;
    try {
      in >> j;
      rows.push_back({j.at("dataset").get<std::string>(),
                      j.at("augmented").get<bool>(),
                      j.at("source").get<std::string>(),
                      j.at("mean_js").get<double>(),
                      j.at("mean_bc").get<double>()});
    } catch (const json::exception& ex) {
      throw ConfigError(path.string() + ": " + ex.what());
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.dataset != b.dataset) return a.dataset < b.dataset;
    if (a.augmented != b.augmented) return a.augmented;  // w/ Aug first
    return source_rank(a.source) < source_rank(b.source);
  });

  std::string csv = "dataset,augmented,source,js,bc\n";
  json jrows = json::array();
  for (const auto& r : rows) {
    csv += r.dataset + "," + (r.augmented ? "true" : "false") + "," +
           r.source + "," + format_fixed(r.js, 6) + "," +
           format_fixed(r.bc, 6) + "\n";
    jrows.push_back({{"dataset", r.dataset},
                     {"augmented", r.augmented},
                     {"source", r.source},
                     {"js", r.js},
                     {"bc", r.bc}});
  }
  write_text(out_dir / "report.csv", csv);
  write_json_file(out_dir / "report.json", json{{"rows", jrows}});

  std::vector<std::string> outputs = {"report.csv", "report.json",
                                      "run_info.json"};
  if (!opts.stats.empty()) {
    // Merge per-dataset stats tables into one deterministic file.
    std::vector<std::string> lines;
    std::string header;
    for (const auto& path : opts.stats) {
      std::ifstream in(path);
      if (!in) {
        throw ConfigError("cannot open stats " + path.string());
      }
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        if (first) {
          header = line;
          first = false;
          continue;
        }
        lines.push_back(line);
      }
    }
    std::sort(lines.begin(), lines.end(), [](const std::string& a,
                                             const std::string& b) {
      const auto split = [](const std::string& s) {
        const auto c1 = s.find(',');
        const auto c2 = s.find(',', c1 + 1);
        return std::pair(s.substr(0, c1), s.substr(c1 + 1, c2 - c1 - 1));
      };
      const auto [da, sa] = split(a);
      const auto [db, sb] = split(b);
      if (da != db) return da < db;
      return source_rank(sa) < source_rank(sb);
    });
    std::string merged = header + "\n";
    for (const auto& line : lines) merged += line + "\n";
    write_text(out_dir / "stats.csv", merged);
    outputs.push_back("stats.csv");
  }

  json inputs;
  json metric_paths = json::array();
  for (const auto& p : opts.metrics) metric_paths.push_back(p.string());
  json stats_paths = json::array();
  for (const auto& p : opts.stats) stats_paths.push_back(p.string());
  inputs["metrics"] = metric_paths;
  inputs["stats"] = stats_paths;
  write_run_info(out_dir, "report", config, inputs, outputs);
}

}  // namespace ambidist::pipeline
