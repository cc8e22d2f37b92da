#include "ambidist/distmath.hpp"

#include <cmath>

#include "ambidist/errors.hpp"
#include "ambidist/strings.hpp"

namespace ambidist::distmath {

namespace {

constexpr double kNormTolerance = 1e-6;

void check_one(const EmotionDistribution& d) {
  double sum = 0.0;
  for (double v : d.probs()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw NotNormalized("negative or non-finite probability");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kNormTolerance) {
    throw NotNormalized("probabilities sum to " + format_g17(sum));
  }
}

void check_pair(const EmotionDistribution& p, const EmotionDistribution& q) {
  if (p.k() != q.k()) {
    throw DimensionMismatch("distributions have K=" + std::to_string(p.k()) +
                            " and K=" + std::to_string(q.k()));
  }
  check_one(p);
  check_one(q);
}

double log2_sane(double x) { return std::log2(x); }

}  // namespace

EmotionDistribution aggregate_annotations(const AnnotationSet& set,
                                          std::size_t k) {
  if (set.labels.empty()) {
    throw EmptyAnnotationSet("cannot aggregate an empty annotation set");
  }
  std::vector<double> counts(k, 0.0);
  for (int label : set.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw DimensionMismatch("label id " + std::to_string(label) +
                              " outside alphabet of size " + std::to_string(k));
    }
    counts[static_cast<std::size_t>(label)] += 1.0;
  }
  const double n = static_cast<double>(set.labels.size());
  for (double& c : counts) c /= n;
  return EmotionDistribution::unchecked(std::move(counts));
}

double js_divergence(const EmotionDistribution& p,
                     const EmotionDistribution& q) {
  check_pair(p, q);
  double jsd = 0.0;
  for (std::size_t c = 0; c < p.k(); ++c) {
    const double pc = p[c], qc = q[c];
    const double m = 0.5 * (pc + qc);
    if (pc > 0.0) jsd += 0.5 * pc * log2_sane(pc / m);
    if (qc > 0.0) jsd += 0.5 * qc * log2_sane(qc / m);
  }
  // Exact in theory; clamp fp residue so callers can rely on [0, 1].
  if (jsd < 0.0) jsd = 0.0;
  if (jsd > 1.0) jsd = 1.0;
  return jsd;
}

double bhattacharyya(const EmotionDistribution& p,
                     const EmotionDistribution& q) {
  check_pair(p, q);
  double bc = 0.0;
  for (std::size_t c = 0; c < p.k(); ++c) {
    bc += std::sqrt(p[c] * q[c]);
  }
  if (bc > 1.0) bc = 1.0;
  return bc;
}

double shannon_entropy(const EmotionDistribution& p, bool normalized) {
  check_one(p);
  double h = 0.0;
  for (double v : p.probs()) {
    if (v > 0.0) h -= v * log2_sane(v);
  }
  if (h < 0.0) h = 0.0;
  if (normalized && p.k() > 1) {
    h /= log2_sane(static_cast<double>(p.k()));
    if (h > 1.0) h = 1.0;
  }
  return h;
}

double fleiss_kappa(const std::vector<std::vector<int>>& label_sets,
                    std::size_t k, std::vector<std::string>* warnings) {
  if (label_sets.size() < 2) {
    throw InsufficientRaters("need at least 2 items, got " +
                             std::to_string(label_sets.size()));
  }
  double sum_pi = 0.0;
  std::vector<double> category_totals(k, 0.0);
  double total_labels = 0.0;
  for (std::size_t i = 0; i < label_sets.size(); ++i) {
    const auto& labels = label_sets[i];
    const double ni = static_cast<double>(labels.size());
    if (labels.size() < 2) {
      throw InsufficientRaters("item " + std::to_string(i) + " has " +
                               std::to_string(labels.size()) + " label(s)");
    }
    std::vector<double> nic(k, 0.0);
    for (int label : labels) {
      if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw DimensionMismatch("label id " + std::to_string(label) +
                                " outside alphabet of size " +
                                std::to_string(k));
      }
      nic[static_cast<std::size_t>(label)] += 1.0;
    }
    double agree = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      agree += nic[c] * (nic[c] - 1.0);
      category_totals[c] += nic[c];
    }
    sum_pi += agree / (ni * (ni - 1.0));
    total_labels += ni;
  }
  const double p_bar = sum_pi / static_cast<double>(label_sets.size());
  double pe = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double pc = category_totals[c] / total_labels;
    pe += pc * pc;
  }
  if (pe >= 1.0 - 1e-15) {
    warn(warnings,
         "fleiss_kappa: only one category ever used (P_e = 1); "
         "returning kappa = 1 by convention");
    return 1.0;
  }
  return (p_bar - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<AnnotationSet>& sets, std::size_t k,
                    std::vector<std::string>* warnings) {
  std::vector<std::vector<int>> label_sets;
  label_sets.reserve(sets.size());
  for (const auto& s : sets) label_sets.push_back(s.labels);
  return fleiss_kappa(label_sets, k, warnings);
}

int dominant_emotion(const EmotionDistribution& p) {
  check_one(p);
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.k(); ++c) {
    if (p[c] > p[best]) best = c;
  }
  return static_cast<int>(best);
}

}  // namespace ambidist::distmath
