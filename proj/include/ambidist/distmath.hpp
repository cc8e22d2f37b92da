#pragma once

#include <span>
#include <string>
#include <vector>

#include "ambidist/types.hpp"

namespace ambidist::distmath {

// Normalized counting over the label multiset: probs[c] = count(c) / n.
// No smoothing. Throws EmptyAnnotationSet / DimensionMismatch.
EmotionDistribution aggregate_annotations(const AnnotationSet& set,
                                          std::size_t k);

// Jensen-Shannon divergence with base-2 logarithms, range [0, 1].
// JSD(p,q) = 1/2 KL(p||m) + 1/2 KL(q||m), m = (p+q)/2, 0*log(0/x) := 0.
double js_divergence(const EmotionDistribution& p,
                     const EmotionDistribution& q);

// Bhattacharyya coefficient: sum_c sqrt(p_c * q_c), range [0, 1].
double bhattacharyya(const EmotionDistribution& p,
                     const EmotionDistribution& q);

// Shannon entropy, base 2. When normalized, divided by log2(K) so the range
// is [0, 1]; normalized is the default reporting convention here.
double shannon_entropy(const EmotionDistribution& p, bool normalized = true);

// Generalized Fleiss' kappa with per-item rater counts n_i:
//   P_i = [sum_c n_ic (n_ic - 1)] / [n_i (n_i - 1)]
//   Pbar = mean_i P_i,  p_c = sum_i n_ic / sum_i n_i,  Pe = sum_c p_c^2
//   kappa = (Pbar - Pe) / (1 - Pe)
// Equal rater counts reduce to the textbook formula. Every item needs >= 2
// labels (InsufficientRaters). If chance agreement is degenerate (only one
// category ever used, Pe = 1) returns 1 with a warning.
double fleiss_kappa(const std::vector<std::vector<int>>& label_sets,
                    std::size_t k,
                    std::vector<std::string>* warnings = nullptr);

double fleiss_kappa(const std::vector<AnnotationSet>& sets, std::size_t k,
                    std::vector<std::string>* warnings = nullptr);

// Argmax category; ties broken by the lowest category index.
int dominant_emotion(const EmotionDistribution& p);

}  // namespace ambidist::distmath
