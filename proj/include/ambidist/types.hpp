#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ambidist/matrix.hpp"

namespace ambidist {

struct EmotionCategory {
  int id = -1;
  std::string name;
};

// The fixed emotion label alphabet for a pipeline run.
class CategorySet {
 public:
  // Throws ConfigError unless there are >= 2 names, unique case-insensitively.
  explicit CategorySet(std::vector<std::string> names);

  static const CategorySet& defaults();  // Angry, Happy, Sad, Neutral

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t id) const { return names_[id]; }
  const std::vector<std::string>& names() const { return names_; }
  EmotionCategory category(std::size_t id) const {
    return {static_cast<int>(id), names_[id]};
  }

  // Case-insensitive lookup; returns the category index or nullopt.
  std::optional<int> find(std::string_view label) const;

  std::string joined(std::string_view sep = ", ") const;

  bool operator==(const CategorySet& other) const {
    return names_ == other.names_;
  }

 private:
  std::vector<std::string> names_;
};

// Probability vector over the category alphabet; sums to 1.
class EmotionDistribution {
 public:
  EmotionDistribution() = default;

  // Validates non-negativity and normalization (|sum - 1| <= tol).
  explicit EmotionDistribution(std::vector<double> probs, double tol = 1e-9);

  // Skips validation; for values that are normalized by construction
  // (counting, softmax, convex mixes) and for building test inputs.
  static EmotionDistribution unchecked(std::vector<double> probs);

  const std::vector<double>& probs() const { return probs_; }
  std::size_t k() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  bool operator==(const EmotionDistribution& other) const {
    return probs_ == other.probs_;
  }

 private:
  std::vector<double> probs_;
};

enum class SourceTag { human, synthetic };

// Label multiset with per-label source tags; input to aggregation and
// agreement statistics.
struct AnnotationSet {
  std::vector<int> labels;  // category ids
  std::vector<SourceTag> sources;

  static AnnotationSet human(std::vector<int> labels);
  static AnnotationSet fused(const std::vector<int>& human_labels,
                             const std::vector<int>& synthetic_labels);

  std::size_t size() const { return labels.size(); }
};

// The corpus unit: audio + transcript + annotations (+ optional embedding,
// feature sequence, and the aggregated distribution for the active source).
struct Utterance {
  std::string id;
  std::vector<float> audio;  // samples in [-1, 1]
  int sample_rate = 16000;
  std::string transcript;
  std::vector<int> human_annotations;      // category ids
  std::vector<int> synthetic_annotations;  // category ids in stored draw order
  std::optional<std::vector<double>> embedding;
  std::optional<Matrix> feature_sequence;  // L x d
  std::optional<EmotionDistribution> distribution;  // P for the active source
  std::optional<std::string> speaker;
};

}  // namespace ambidist
