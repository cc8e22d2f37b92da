#include "ambidist/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "ambidist/audio_io.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/features_io.hpp"
#include "ambidist/rng.hpp"
#include "ambidist/strings.hpp"

namespace ambidist::corpus {

namespace {

using nlohmann::json;

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw MalformedManifest("line " + std::to_string(line_no) + ": " + why);
}

ManifestEntry parse_entry(const json& j, std::size_t line_no,
                          const LoadOptions& opts,
                          const std::filesystem::path& base_dir) {
  if (!j.is_object()) malformed(line_no, "entry is not a JSON object");

  auto require_string = [&](const char* field) -> std::string {
    if (!j.contains(field) || !j.at(field).is_string()) {
      malformed(line_no, std::string("missing or non-string '") + field + "'");
    }
    return j.at(field).get<std::string>();
  };

  ManifestEntry e;
  e.id = require_string("id");
  if (e.id.empty()) malformed(line_no, "empty id");
  e.audio_path = require_string("audio_path");
  e.transcript = require_string("transcript");
  e.augmented = j.value("augmented", false);

  if (j.contains("annotations")) {
    if (!j.at("annotations").is_array()) {
      malformed(line_no, "'annotations' is not an array");
    }
    for (const auto& a : j.at("annotations")) {
      if (!a.is_string()) malformed(line_no, "annotation is not a string");
      e.annotations.push_back(a.get<std::string>());
    }
  }

  if (j.contains("embedding")) {
    if (!j.at("embedding").is_array()) {
      malformed(line_no, "'embedding' is not an array");
    }
    std::vector<double> emb;
    for (const auto& v : j.at("embedding")) {
      if (!v.is_number()) malformed(line_no, "embedding entry is not numeric");
      emb.push_back(v.get<double>());
    }
    e.embedding = std::move(emb);
  }
  if (j.contains("features_path")) {
    if (!j.at("features_path").is_string()) {
      malformed(line_no, "'features_path' is not a string");
    }
    e.features_path = j.at("features_path").get<std::string>();
  }
  if (j.contains("speaker")) {
    if (!j.at("speaker").is_string()) {
      malformed(line_no, "'speaker' is not a string");
    }
    e.speaker = j.at("speaker").get<std::string>();
  }

  if (e.augmented) {
    if (!j.contains("distribution") || !j.at("distribution").is_array()) {
      malformed(line_no, "augmented entry without 'distribution'");
    }
    std::vector<double> dist;
    for (const auto& v : j.at("distribution")) {
      if (!v.is_number()) malformed(line_no, "distribution entry not numeric");
      dist.push_back(v.get<double>());
    }
    if (dist.size() != opts.categories.size()) {
      malformed(line_no, "distribution has " + std::to_string(dist.size()) +
                             " entries for K=" +
                             std::to_string(opts.categories.size()));
    }
    double s = 0.0;
    for (double v : dist) s += v;
    if (std::abs(s - 1.0) > 1e-6) {
      malformed(line_no, "distribution sums to " + format_g17(s));
    }
    e.distribution = std::move(dist);
    if (j.contains("parents")) {
      const auto& p = j.at("parents");
      if (!p.is_array() || p.size() != 2 || !p[0].is_string() ||
          !p[1].is_string()) {
        malformed(line_no, "'parents' must be two id strings");
      }
      e.parents = {p[0].get<std::string>(), p[1].get<std::string>()};
    }
    if (j.contains("lambda")) {
      if (!j.at("lambda").is_number()) malformed(line_no, "'lambda' not numeric");
      e.lambda = j.at("lambda").get<double>();
    }
  } else {
    // Zero annotations are rejected here, not at filter time.
    if (e.annotations.empty()) {
      malformed(line_no, "entry '" + e.id + "' has no annotations");
    }
  }

  for (const auto& label : e.annotations) {
    if (auto id = opts.categories.find(label)) {
      e.annotation_ids.push_back(*id);
    } else {
      const bool other =
          std::any_of(opts.other_labels.begin(), opts.other_labels.end(),
                      [&](const std::string& o) { return iequals(o, label); });
      if (!other) {
        throw UnknownCategory("line " + std::to_string(line_no) +
                              ": annotation '" + label +
                              "' not in category set {" +
                              opts.categories.joined() + "} or other labels");
      }
      e.annotation_ids.push_back(-1);  // tolerated; removed by filtering
    }
  }

  if (opts.check_paths) {
    auto resolve = [&](const std::string& rel) {
      std::filesystem::path p(rel);
      return p.is_absolute() ? p : base_dir / p;
    };
    if (!std::filesystem::exists(resolve(e.audio_path))) {
      malformed(line_no, "audio_path not resolvable: " + e.audio_path);
    }
    if (!e.features_path.empty() &&
        !std::filesystem::exists(resolve(e.features_path))) {
      malformed(line_no, "features_path not resolvable: " + e.features_path);
    }
  }
  return e;
}

}  // namespace

CorpusManifest load_manifest(const std::filesystem::path& path,
                             const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) {
    throw MalformedManifest("cannot open " + path.string());
  }
  CorpusManifest manifest;
  manifest.categories = opts.categories;
  manifest.other_labels = opts.other_labels;

  const auto base_dir = path.has_parent_path()
                            ? path.parent_path()
                            : std::filesystem::path(".");
  std::unordered_set<std::string> seen_ids;
  std::optional<std::size_t> embedding_dim;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      malformed(line_no, ex.what());
    }
    ManifestEntry e = parse_entry(j, line_no, opts, base_dir);
    if (!seen_ids.insert(e.id).second) {
      throw DuplicateId("line " + std::to_string(line_no) + ": id '" + e.id +
                        "' appears more than once");
    }
    if (e.embedding) {
      if (embedding_dim && *embedding_dim != e.embedding->size()) {
        malformed(line_no, "embedding dimension " +
                               std::to_string(e.embedding->size()) +
                               " differs from earlier " +
                               std::to_string(*embedding_dim));
      }
      embedding_dim = e.embedding->size();
    }
    // Paths are stored relative to the manifest location.
    auto rebase = [&](std::string& p) {
      if (!p.empty() && !std::filesystem::path(p).is_absolute()) {
        p = (base_dir / p).string();
      }
    };
    rebase(e.audio_path);
    rebase(e.features_path);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path,
                    const CorpusManifest& manifest) {
  std::ofstream out(path);
  if (!out) {
    throw MalformedManifest("cannot write " + path.string());
  }
  for (const auto& e : manifest.entries) {
    json j;
    j["id"] = e.id;
    j["audio_path"] = e.audio_path;
    j["transcript"] = e.transcript;
    if (!e.annotations.empty()) j["annotations"] = e.annotations;
    if (e.embedding) j["embedding"] = *e.embedding;
    if (!e.features_path.empty()) j["features_path"] = e.features_path;
    if (e.speaker) j["speaker"] = *e.speaker;
    if (e.augmented) {
      j["augmented"] = true;
      if (e.distribution) j["distribution"] = *e.distribution;
      if (e.parents) j["parents"] = {(*e.parents)[0], (*e.parents)[1]};
      if (e.lambda) j["lambda"] = *e.lambda;
    }
    out << j.dump() << '\n';
  }
}

FilterResult filter_by_categories(const CorpusManifest& manifest,
                                  const CategorySet& categories) {
  FilterResult result;
  result.manifest.categories = categories;
  result.manifest.other_labels = manifest.other_labels;
  result.manifest.metadata = manifest.metadata;
  for (const auto& e : manifest.entries) {
    bool keep = true;
    if (e.augmented) {
      keep = e.distribution && e.distribution->size() == categories.size();
    } else {
      for (const auto& label : e.annotations) {
        if (!categories.find(label)) {
          keep = false;
          break;
        }
      }
    }
    if (keep) {
      ManifestEntry copy = e;
      copy.annotation_ids.clear();
      for (const auto& label : copy.annotations) {
        copy.annotation_ids.push_back(*categories.find(label));
      }
      result.manifest.entries.push_back(std::move(copy));
      ++result.kept;
    } else {
      ++result.dropped;
    }
  }
  return result;
}

namespace {

SplitResult split_indices(std::size_t n,
                          const std::vector<std::string>& speakers,
                          const SplitSpec& spec,
                          std::vector<std::string>* warnings) {
  if (n == 0) {
    throw EmptyCorpus("cannot split an empty corpus");
  }
  const auto train_n = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(n)));
  if (train_n == 0 || train_n == n) {
    warn(warnings, "split_train_test: rounding left " +
                       std::string(train_n == 0 ? "train" : "test") +
                       " side empty (N=" + std::to_string(n) + ")");
  }

  std::vector<char> in_train(n, 0);
  Rng rng(mix_seed(spec.seed, fnv1a64("split")));

  if (!spec.by_speaker) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < train_n; ++i) in_train[order[i]] = 1;
  } else {
    // Group indices by speaker, shuffle speakers, then fill the train side
    // group by group until the target count is reached.
    std::vector<std::string> names;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
      std::string key = speakers[i].empty()
                            ? "\x01singleton:" + std::to_string(i)
                            : speakers[i];
      auto [it, inserted] = groups.try_emplace(key);
      if (inserted) names.push_back(key);
      it->second.push_back(i);
    }
    rng.shuffle(names);
    std::size_t assigned = 0;
    for (const auto& name : names) {
      if (assigned >= train_n) break;
      for (std::size_t idx : groups[name]) in_train[idx] = 1;
      assigned += groups[name].size();
    }
    if (assigned != train_n) {
      warn(warnings, "split_train_test: speaker grouping gives |train|=" +
                         std::to_string(assigned) + " instead of " +
                         std::to_string(train_n));
    }
  }

  SplitResult result;
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? result.train : result.test).push_back(i);
  }
  return result;
}

}  // namespace

SplitResult split_train_test(const std::vector<ManifestEntry>& entries,
                             const SplitSpec& spec,
                             std::vector<std::string>* warnings) {
  std::vector<std::string> speakers(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].speaker) speakers[i] = *entries[i].speaker;
  }
  return split_indices(entries.size(), speakers, spec, warnings);
}

SplitResult split_train_test(const std::vector<Utterance>& corpus,
                             const SplitSpec& spec,
                             std::vector<std::string>* warnings) {
  std::vector<std::string> speakers(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].speaker) speakers[i] = *corpus[i].speaker;
  }
  return split_indices(corpus.size(), speakers, spec, warnings);
}

std::vector<float> load_audio(const ManifestEntry& entry, int target_rate) {
  return audio::load_wav(entry.audio_path, target_rate);
}

Utterance materialize(const ManifestEntry& entry, const CategorySet& cats,
                      bool with_audio, bool with_features) {
  Utterance u;
  u.id = entry.id;
  u.transcript = entry.transcript;
  u.speaker = entry.speaker;
  u.embedding = entry.embedding;
  for (const auto& label : entry.annotations) {
    if (auto id = cats.find(label)) u.human_annotations.push_back(*id);
  }
  if (entry.distribution) {
    u.distribution = EmotionDistribution(*entry.distribution, 1e-6);
  }
  if (with_audio) {
    u.audio = load_audio(entry);
    u.sample_rate = 16000;
  }
  if (with_features && !entry.features_path.empty()) {
    u.feature_sequence = features::read_features(entry.features_path);
  }
  return u;
}

}  // namespace ambidist::corpus
