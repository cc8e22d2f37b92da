#include "ambidist/types.hpp"

#include <cmath>
#include <set>

#include "ambidist/errors.hpp"
#include "ambidist/strings.hpp"

namespace ambidist {

CategorySet::CategorySet(std::vector<std::string> names)
    : names_(std::move(names)) {
  if (names_.size() < 2) {
    throw ConfigError("category set needs at least 2 categories, got " +
                      std::to_string(names_.size()));
  }
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (trim(n).size() != n.size() || n.empty()) {
      throw ConfigError("category name '" + n + "' is empty or untrimmed");
    }
    if (!seen.insert(to_lower(n)).second) {
      throw ConfigError("duplicate category name (case-insensitive): " + n);
    }
  }
}

const CategorySet& CategorySet::defaults() {
  static const CategorySet set(
      std::vector<std::string>{"Angry", "Happy", "Sad", "Neutral"});
  return set;
}

std::optional<int> CategorySet::find(std::string_view label) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (iequals(names_[i], label)) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::string CategorySet::joined(std::string_view sep) const {
  return join(names_, sep);
}

EmotionDistribution::EmotionDistribution(std::vector<double> probs, double tol)
    : probs_(std::move(probs)) {
  if (probs_.empty()) {
    throw DimensionMismatch("distribution must have at least one category");
  }
  double sum = 0.0;
  for (double& p : probs_) {
    if (!std::isfinite(p) || p < -1e-12) {
      throw NotNormalized("probability out of range: " + format_g17(p));
    }
    if (p < 0.0) p = 0.0;  // clear fp dust
    sum += p;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw NotNormalized("probabilities sum to " + format_g17(sum));
  }
}

EmotionDistribution EmotionDistribution::unchecked(std::vector<double> probs) {
  EmotionDistribution d;
  d.probs_ = std::move(probs);
  return d;
}

AnnotationSet AnnotationSet::human(std::vector<int> labels) {
  AnnotationSet s;
  s.sources.assign(labels.size(), SourceTag::human);
  s.labels = std::move(labels);
  return s;
}

AnnotationSet AnnotationSet::fused(const std::vector<int>& human_labels,
                                   const std::vector<int>& synthetic_labels) {
  AnnotationSet s;
  s.labels = human_labels;
  s.labels.insert(s.labels.end(), synthetic_labels.begin(),
                  synthetic_labels.end());
  s.sources.assign(human_labels.size(), SourceTag::human);
  s.sources.insert(s.sources.end(), synthetic_labels.size(),
                   SourceTag::synthetic);
  return s;
}

}  // namespace ambidist
