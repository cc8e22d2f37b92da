#pragma once

#include <span>
#include <string>
#include <vector>

#include "ambidist/types.hpp"

namespace ambidist::analysis {

struct SaturationPoint {
  int n = 0;           // synthetic annotation count
  double mean_jsd = 0.0;
  double std_jsd = 0.0;  // sample std across utterances
};

struct SaturationCurve {
  std::vector<SaturationPoint> points;  // n strictly increasing
};

// Decay model JSD(n) = a*exp(-b*n) + c fitted by Gauss-Newton; n_star is
// the smallest n where the decaying term has shed 95% of its amplitude,
// ceil(ln(20)/b), clamped to >= 1 (a ~ 0 means nothing decays: n_star = 1).
struct SaturationFit {
  double a = 0.0;
  double b = 1.0;
  double c = 0.0;
  int n_star = 1;
  double rmse = 0.0;
};

// Per n in n_values: mean +- std over the corpus of
// js_divergence(aggregate(first n synthetic), aggregate(human)). "First n"
// follows stored draw order. Throws InsufficientSyntheticAnnotations when
// any utterance has fewer than max(n_values) synthetic labels.
SaturationCurve saturation_curve(std::span<const Utterance> corpus,
                                 std::span<const int> n_values,
                                 std::size_t k_categories);

// Multi-start Gauss-Newton fit (b0 in {0.1, 0.3, 1, 3}; c0 = min mean_jsd,
// a0 = range). Needs >= 4 points; throws FitDiverged if every start fails.
SaturationFit fit_decay(const SaturationCurve& curve);

double decay_model(const SaturationFit& fit, double n);

struct AmbiguityBins {
  double entropy_min = 0.0;
  double entropy_max = 0.0;
  double edge_low = 0.0;   // inner edges of the range tertiles
  double edge_high = 0.0;
  bool degenerate = false;  // all entropies equal: single bin

  struct Bin {
    std::string label;  // Low / Medium / High (or All when degenerate)
    std::size_t count = 0;
    double mean_jsd = 0.0;
    double mean_bc = 0.0;
  };
  std::vector<Bin> bins;
};

// Splits [min, max] of the references' normalized entropies into three
// equal-width intervals (range tertiles, right-closed top bin) and reports
// per-bin count and mean JSD/BC between predicted and reference.
AmbiguityBins tertile_bins(std::span<const EmotionDistribution> reference,
                           std::span<const EmotionDistribution> predicted,
                           std::vector<std::string>* warnings = nullptr);

// Convenience overload: references are the utterances' aggregated human
// distributions.
AmbiguityBins tertile_bins(std::span<const Utterance> test_set,
                           std::span<const EmotionDistribution> predicted,
                           std::size_t k_categories,
                           std::vector<std::string>* warnings = nullptr);

enum class Source { human, synthetic, combined };

const char* source_name(Source source);

struct AnnotationStatistics {
  double fleiss_kappa = 0.0;
  double mean_entropy_normalized = 0.0;
  double mean_entropy_bits = 0.0;
  std::size_t items = 0;
};

// Fleiss' kappa over the per-utterance label sets of the chosen source plus
// the mean entropy (normalized and raw bits) of the aggregated distributions.
AnnotationStatistics annotation_statistics(std::span<const Utterance> corpus,
                                           Source source,
                                           std::size_t k_categories,
                                           std::vector<std::string>* warnings =
                                               nullptr);

}  // namespace ambidist::analysis
