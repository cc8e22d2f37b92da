#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ambidist/types.hpp"

namespace ambidist::corpus {

// One manifest line. Regular entries carry human annotations; augmented
// entries (written back by the augmentation stage) carry an explicit
// distribution plus parent/lambda provenance instead.
struct ManifestEntry {
  std::string id;
  std::string audio_path;
  std::string transcript;
  std::vector<std::string> annotations;  // raw label strings
  std::vector<int> annotation_ids;       // resolved against the category set
  std::optional<std::vector<double>> embedding;
  std::string features_path;  // empty when absent
  std::optional<std::string> speaker;
  bool augmented = false;
  std::optional<std::vector<double>> distribution;  // augmented entries only
  std::optional<std::array<std::string, 2>> parents;
  std::optional<double> lambda;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  CategorySet categories = CategorySet::defaults();
  std::vector<std::string> other_labels;
  std::map<std::string, std::string> metadata;
};

struct LoadOptions {
  CategorySet categories = CategorySet::defaults();
  // Labels tolerated at load time (they survive ingestion and are removed by
  // filter_by_categories); anything else raises UnknownCategory.
  std::vector<std::string> other_labels;
  bool check_paths = true;
};

// Parses a JSONL manifest. Audio and features stay on disk (lazy); entries
// are fully validated. Throws MalformedManifest (with line number),
// DuplicateId, UnknownCategory.
CorpusManifest load_manifest(const std::filesystem::path& path,
                             const LoadOptions& opts = {});

void write_manifest(const std::filesystem::path& path,
                    const CorpusManifest& manifest);

struct FilterResult {
  CorpusManifest manifest;
  std::size_t kept = 0;
  std::size_t dropped = 0;
};

// Keeps exactly the entries whose every human annotation is in `categories`
// (augmented entries are kept when their distribution is over `categories`).
// Order preserved; idempotent.
FilterResult filter_by_categories(const CorpusManifest& manifest,
                                  const CategorySet& categories);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool by_speaker = false;
};

struct SplitResult {
  std::vector<std::size_t> train;  // indices in original corpus order
  std::vector<std::size_t> test;
};

// Seed-deterministic exact partition with |train| = round(fraction * N).
// by_speaker keeps all entries of a speaker on the same side (entries
// without a speaker field are treated as singleton speakers).
SplitResult split_train_test(const std::vector<ManifestEntry>& entries,
                             const SplitSpec& spec,
                             std::vector<std::string>* warnings = nullptr);

SplitResult split_train_test(const std::vector<Utterance>& corpus,
                             const SplitSpec& spec,
                             std::vector<std::string>* warnings = nullptr);

// Decoded, normalized, mono 16 kHz samples for a manifest entry.
std::vector<float> load_audio(const ManifestEntry& entry,
                              int target_rate = 16000);

// Materializes an in-memory Utterance: resolves annotations, loads audio
// and/or the feature sequence when requested.
Utterance materialize(const ManifestEntry& entry, const CategorySet& cats,
                      bool with_audio = false, bool with_features = false);

}  // namespace ambidist::corpus
