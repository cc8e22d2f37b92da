// Deterministic corpus fixtures for unit, pipeline, and acceptance tests.
#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ambidist/audio_io.hpp"
#include "ambidist/distmath.hpp"
#include "ambidist/features_io.hpp"
#include "ambidist/matrix.hpp"
#include "ambidist/rng.hpp"
#include "ambidist/types.hpp"

namespace fixtures {

inline std::filesystem::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ambidist-" + tag + "-" + std::to_string(::getpid()) +
                    "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

struct CorpusOptions {
  std::size_t n = 50;
  std::uint64_t seed = 42;
  std::size_t raters = 3;
  std::size_t embedding_dim = 6;
  std::size_t d_model = 8;
  // Dominant-class tendencies; skewed so augmentation has minority classes.
  std::vector<double> class_weights = {0.4, 0.3, 0.15, 0.15};
};

inline std::vector<float> synth_tone(std::size_t length, double freq,
                                     double amplitude = 0.5,
                                     int rate = 16000) {
  std::vector<float> samples(length);
  for (std::size_t t = 0; t < length; ++t) {
    samples[t] = static_cast<float>(
        amplitude *
        std::sin(2.0 * 3.14159265358979323846 * freq *
                 static_cast<double>(t) / rate));
  }
  return samples;
}

// In-memory utterances: human labels drawn from a per-utterance latent,
// embeddings clustered by dominant class, short tones as audio.
inline std::vector<ambidist::Utterance> make_utterances(
    const CorpusOptions& opts) {
  using namespace ambidist;
  Rng rng(mix_seed(opts.seed, fnv1a64("fixture-corpus")));
  const std::size_t k = opts.class_weights.size();
  std::vector<Utterance> corpus;
  corpus.reserve(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) {
    Utterance u;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "u%03zu", i);
    u.id = idbuf;
    u.transcript = "fixture utterance " + std::to_string(i);
    u.sample_rate = 16000;
    u.audio = synth_tone(800 + (i % 5) * 400, 180.0 + 13.0 * i);

    const auto lead = rng.categorical(opts.class_weights);
    std::vector<double> latent(k, 0.0);
    const double head_mass = 0.45 + 0.5 * rng.uniform01();
    latent[lead] = head_mass;
    double rest = 1.0 - head_mass;
    for (std::size_t c = 0; c < k; ++c) {
      if (c == lead) continue;
      const double share = rng.uniform01();
      latent[c] = share;
    }
    double tail_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (c != lead) tail_sum += latent[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (c != lead) latent[c] = latent[c] / tail_sum * rest;
    }
    for (std::size_t r = 0; r < opts.raters; ++r) {
      u.human_annotations.push_back(static_cast<int>(rng.categorical(latent)));
    }

    const auto agg = distmath::aggregate_annotations(
        AnnotationSet::human(u.human_annotations), k);
    const auto dom = static_cast<std::size_t>(distmath::dominant_emotion(agg));
    std::vector<double> emb(opts.embedding_dim, 0.0);
    for (std::size_t dcol = 0; dcol < opts.embedding_dim; ++dcol) {
      emb[dcol] = (dcol % k == dom ? 3.0 : 0.0) + 0.5 * rng.normal();
    }
    u.embedding = std::move(emb);
    u.distribution = agg;

    Matrix features(3 + i % 4, opts.d_model);
    for (double& v : features.data) v = 0.7 * rng.normal();
    u.feature_sequence = std::move(features);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

// Utterances whose dominant-class counts match `counts` exactly: human
// annotations are unanimous, embeddings cluster per class.
inline std::vector<ambidist::Utterance> make_imbalanced_utterances(
    const std::vector<std::size_t>& counts, std::uint64_t seed) {
  using namespace ambidist;
  Rng rng(mix_seed(seed, fnv1a64("fixture-imbalanced")));
  std::vector<Utterance> corpus;
  std::size_t serial = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      Utterance u;
      char idbuf[16];
      std::snprintf(idbuf, sizeof(idbuf), "c%zu-%03zu", c, i);
      u.id = idbuf;
      u.transcript = "class " + std::to_string(c) + " member " +
                     std::to_string(i);
      u.sample_rate = 16000;
      u.audio = synth_tone(640 + (serial % 3) * 160, 150.0 + 11.0 * serial);
      u.human_annotations = {static_cast<int>(c), static_cast<int>(c),
                             static_cast<int>(c)};
      std::vector<double> emb(4, 0.0);
      emb[c % 4] = 4.0;
      for (double& v : emb) v += 0.3 * rng.normal();
      u.embedding = std::move(emb);
      u.distribution = distmath::aggregate_annotations(
          AnnotationSet::human(u.human_annotations), counts.size());
      ++serial;
      corpus.push_back(std::move(u));
    }
  }
  return corpus;
}

// Writes a complete on-disk corpus (WAV files, feature files, JSONL
// manifest) and returns the manifest path.
inline std::filesystem::path write_corpus(const std::filesystem::path& dir,
                                          const CorpusOptions& opts) {
  using namespace ambidist;
  namespace fs = std::filesystem;
  fs::create_directories(dir / "audio");
  fs::create_directories(dir / "features");
  const auto& cats = CategorySet::defaults();
  const auto corpus = make_utterances(opts);

  std::ofstream manifest(dir / "manifest.jsonl");
  for (const auto& u : corpus) {
    const std::string wav_rel = "audio/" + u.id + ".wav";
    const std::string feat_rel = "features/" + u.id + ".bin";
    audio::write_wav16(dir / wav_rel, u.audio, u.sample_rate);
    features::write_features(dir / feat_rel, *u.feature_sequence);

    nlohmann::json j;
    j["id"] = u.id;
    j["audio_path"] = wav_rel;
    j["transcript"] = u.transcript;
    std::vector<std::string> names;
    for (int a : u.human_annotations) {
      names.push_back(cats.name(static_cast<std::size_t>(a)));
    }
    j["annotations"] = names;
    j["embedding"] = *u.embedding;
    j["features_path"] = feat_rel;
    manifest << j.dump() << '\n';
  }
  return dir / "manifest.jsonl";
}

}  // namespace fixtures
