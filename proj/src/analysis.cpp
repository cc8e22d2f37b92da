#include "ambidist/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "ambidist/distmath.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/strings.hpp"

namespace ambidist::analysis {

namespace {

std::vector<int> source_labels(const Utterance& u, Source source) {
  switch (source) {
    case Source::human:
      return u.human_annotations;
    case Source::synthetic:
      return u.synthetic_annotations;
    case Source::combined: {
      std::vector<int> labels = u.human_annotations;
      labels.insert(labels.end(), u.synthetic_annotations.begin(),
                    u.synthetic_annotations.end());
      return labels;
    }
  }
  return {};
}

}  // namespace

const char* source_name(Source source) {
  switch (source) {
    case Source::human:
      return "human";
    case Source::synthetic:
      return "synthetic";
    case Source::combined:
      return "combined";
  }
  return "?";
}

SaturationCurve saturation_curve(std::span<const Utterance> corpus,
                                 std::span<const int> n_values,
                                 std::size_t k_categories) {
  if (corpus.empty()) {
    throw EmptyCorpus("saturation_curve needs a non-empty corpus");
  }
  int max_n = 0;
  for (int n : n_values) max_n = std::max(max_n, n);
  for (const Utterance& u : corpus) {
    if (static_cast<int>(u.synthetic_annotations.size()) < max_n) {
      throw InsufficientSyntheticAnnotations(
          "utterance '" + u.id + "' has " +
          std::to_string(u.synthetic_annotations.size()) +
          " synthetic labels, need " + std::to_string(max_n));
    }
  }

  std::vector<EmotionDistribution> human;
  human.reserve(corpus.size());
  for (const Utterance& u : corpus) {
    human.push_back(distmath::aggregate_annotations(
        AnnotationSet::human(u.human_annotations), k_categories));
  }

  SaturationCurve curve;
  std::vector<int> sorted_n(n_values.begin(), n_values.end());
  std::sort(sorted_n.begin(), sorted_n.end());
  for (int n : sorted_n) {
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& syn = corpus[i].synthetic_annotations;
      AnnotationSet first_n;
      first_n.labels.assign(syn.begin(), syn.begin() + n);
      first_n.sources.assign(static_cast<std::size_t>(n),
                             SourceTag::synthetic);
      const auto dist =
          distmath::aggregate_annotations(first_n, k_categories);
      const double jsd = distmath::js_divergence(dist, human[i]);
      sum += jsd;
      sum_sq += jsd * jsd;
    }
    const auto count = static_cast<double>(corpus.size());
    const double mean = sum / count;
    const double var =
        count > 1.0 ? std::max(0.0, (sum_sq - count * mean * mean) /
                                        (count - 1.0))
                    : 0.0;
    curve.points.push_back({n, mean, std::sqrt(var)});
  }
  return curve;
}

double decay_model(const SaturationFit& fit, double n) {
  return fit.a * std::exp(-fit.b * n) + fit.c;
}

namespace {

double sse_of(const SaturationCurve& curve, double a, double b, double c) {
  double sse = 0.0;
  for (const auto& pt : curve.points) {
    const double r = pt.mean_jsd - (a * std::exp(-b * pt.n) + c);
    sse += r * r;
  }
  return sse;
}

// One Gauss-Newton run from (a0, b0, c0); returns false when it fails to
// produce finite parameters.
bool gauss_newton(const SaturationCurve& curve, double a, double b, double c,
                  std::array<double, 3>& out) {
  constexpr int kMaxIterations = 200;
  constexpr double kRidge = 1e-12;
  double sse = sse_of(curve, a, b, c);
  for (int it = 0; it < kMaxIterations; ++it) {
    // Normal equations J^T J delta = J^T r with J = df/d(a,b,c).
    double jtj[3][3] = {};
    double jtr[3] = {};
    for (const auto& pt : curve.points) {
      const double e = std::exp(-b * pt.n);
      const double f = a * e + c;
      const double r = pt.mean_jsd - f;
      const double j[3] = {e, -a * pt.n * e, 1.0};
      for (int row = 0; row < 3; ++row) {
        jtr[row] += j[row] * r;
        for (int col = 0; col < 3; ++col) jtj[row][col] += j[row] * j[col];
      }
    }
    for (int d = 0; d < 3; ++d) jtj[d][d] += kRidge;

    // 3x3 Gaussian elimination with partial pivoting.
    double m[3][4];
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) m[row][col] = jtj[row][col];
      m[row][3] = jtr[row];
    }
    for (int col = 0; col < 3; ++col) {
      int pivot = col;
      for (int row = col + 1; row < 3; ++row) {
        if (std::abs(m[row][col]) > std::abs(m[pivot][col])) pivot = row;
      }
      if (std::abs(m[pivot][col]) < 1e-300) return false;
      std::swap(m[col], m[pivot]);
      for (int row = col + 1; row < 3; ++row) {
        const double factor = m[row][col] / m[col][col];
        for (int cc = col; cc < 4; ++cc) m[row][cc] -= factor * m[col][cc];
      }
    }
    double delta[3];
    for (int row = 2; row >= 0; --row) {
      double acc = m[row][3];
      for (int col = row + 1; col < 3; ++col) acc -= m[row][col] * delta[col];
      delta[row] = acc / m[row][row];
    }

    // Backtracking step control; b stays positive.
    double step = 1.0;
    double na = a, nb = b, nc = c, nsse = sse;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      na = a + step * delta[0];
      nb = std::clamp(b + step * delta[1], 1e-8, 50.0);
      nc = c + step * delta[2];
      nsse = sse_of(curve, na, nb, nc);
      if (std::isfinite(nsse) && nsse <= sse) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double improvement = sse - nsse;
    a = na;
    b = nb;
    c = nc;
    sse = nsse;
    if (improvement < 1e-18) break;
  }
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) {
    return false;
  }
  out = {a, b, c};
  return true;
}

}  // namespace

SaturationFit fit_decay(const SaturationCurve& curve) {
  if (curve.points.size() < 4) {
    throw FitDiverged("need at least 4 curve points, got " +
                      std::to_string(curve.points.size()));
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& pt : curve.points) {
    if (!std::isfinite(pt.mean_jsd)) {
      throw FitDiverged("non-finite curve value at n=" + std::to_string(pt.n));
    }
    lo = std::min(lo, pt.mean_jsd);
    hi = std::max(hi, pt.mean_jsd);
  }

  const double a0 = hi - lo;
  const double c0 = lo;
  bool any = false;
  std::array<double, 3> best{};
  double best_sse = std::numeric_limits<double>::infinity();
  for (double b0 : {0.1, 0.3, 1.0, 3.0}) {
    std::array<double, 3> params{};
    if (!gauss_newton(curve, a0, b0, c0, params)) continue;
    const double sse = sse_of(curve, params[0], params[1], params[2]);
    if (std::isfinite(sse) && sse < best_sse) {
      best_sse = sse;
      best = params;
      any = true;
    }
  }
  if (!any) {
    throw FitDiverged("all Gauss-Newton starts failed");
  }

  SaturationFit fit;
  fit.a = best[0];
  fit.b = best[1];
  fit.c = std::max(best[2], 0.0);
  fit.rmse = std::sqrt(best_sse / static_cast<double>(curve.points.size()));
  // Amplitude below 5% of its n=0 value: exp(-b n) <= 1/20.
  if (std::abs(fit.a) < 1e-9 * std::max(1.0, std::abs(fit.c)) ||
      a0 == 0.0) {
    fit.n_star = 1;
  } else {
    fit.n_star = std::max(1, static_cast<int>(std::ceil(
                                 std::log(20.0) / fit.b)));
  }
  return fit;
}

AmbiguityBins tertile_bins(std::span<const EmotionDistribution> reference,
                           std::span<const EmotionDistribution> predicted,
                           std::vector<std::string>* warnings) {
  if (reference.empty() || reference.size() != predicted.size()) {
    throw DimensionMismatch("tertile_bins needs equal non-empty reference and "
                            "prediction lists");
  }
  std::vector<double> entropies(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    entropies[i] = distmath::shannon_entropy(reference[i], true);
  }
  AmbiguityBins bins;
  bins.entropy_min = *std::min_element(entropies.begin(), entropies.end());
  bins.entropy_max = *std::max_element(entropies.begin(), entropies.end());

  const double range = bins.entropy_max - bins.entropy_min;
  if (range < 1e-12) {
    warn(warnings,
         "tertile_bins: all reference entropies equal (" +
             format_fixed(bins.entropy_min, 6) + "); using a single bin");
    bins.degenerate = true;
    bins.edge_low = bins.edge_high = bins.entropy_min;
    AmbiguityBins::Bin all{"All", 0, 0.0, 0.0};
    for (std::size_t i = 0; i < reference.size(); ++i) {
      all.count++;
      all.mean_jsd += distmath::js_divergence(predicted[i], reference[i]);
      all.mean_bc += distmath::bhattacharyya(predicted[i], reference[i]);
    }
    all.mean_jsd /= static_cast<double>(all.count);
    all.mean_bc /= static_cast<double>(all.count);
    bins.bins.push_back(all);
    return bins;
  }

  bins.edge_low = bins.entropy_min + range / 3.0;
  bins.edge_high = bins.entropy_min + 2.0 * range / 3.0;
  bins.bins = {{"Low", 0, 0.0, 0.0},
               {"Medium", 0, 0.0, 0.0},
               {"High", 0, 0.0, 0.0}};
  for (std::size_t i = 0; i < reference.size(); ++i) {
    std::size_t which = 2;  // top bin right-closed
    if (entropies[i] < bins.edge_low) {
      which = 0;
    } else if (entropies[i] < bins.edge_high) {
      which = 1;
    }
    auto& bin = bins.bins[which];
    bin.count++;
    bin.mean_jsd += distmath::js_divergence(predicted[i], reference[i]);
    bin.mean_bc += distmath::bhattacharyya(predicted[i], reference[i]);
  }
  for (auto& bin : bins.bins) {
    if (bin.count > 0) {
      bin.mean_jsd /= static_cast<double>(bin.count);
      bin.mean_bc /= static_cast<double>(bin.count);
    }
  }
  return bins;
}

AmbiguityBins tertile_bins(std::span<const Utterance> test_set,
                           std::span<const EmotionDistribution> predicted,
                           std::size_t k_categories,
                           std::vector<std::string>* warnings) {
  std::vector<EmotionDistribution> reference;
  reference.reserve(test_set.size());
  for (const Utterance& u : test_set) {
    reference.push_back(distmath::aggregate_annotations(
        AnnotationSet::human(u.human_annotations), k_categories));
  }
  return tertile_bins(reference, predicted, warnings);
}

AnnotationStatistics annotation_statistics(std::span<const Utterance> corpus,
                                           Source source,
                                           std::size_t k_categories,
                                           std::vector<std::string>* warnings) {
  if (corpus.empty()) {
    throw EmptyCorpus("annotation_statistics needs a non-empty corpus");
  }
  std::vector<std::vector<int>> label_sets;
  label_sets.reserve(corpus.size());
  AnnotationStatistics stats;
  stats.items = corpus.size();
  for (const Utterance& u : corpus) {
    auto labels = source_labels(u, source);
    if (labels.empty()) {
      throw EmptyAnnotationSet("utterance '" + u.id + "' has no " +
                               source_name(source) + " annotations");
    }
    AnnotationSet set;
    set.labels = labels;
    set.sources.assign(labels.size(), SourceTag::human);
    const auto dist = distmath::aggregate_annotations(set, k_categories);
    stats.mean_entropy_normalized += distmath::shannon_entropy(dist, true);
    stats.mean_entropy_bits += distmath::shannon_entropy(dist, false);
    label_sets.push_back(std::move(labels));
  }
  stats.mean_entropy_normalized /= static_cast<double>(corpus.size());
  stats.mean_entropy_bits /= static_cast<double>(corpus.size());
  stats.fleiss_kappa = distmath::fleiss_kappa(label_sets, k_categories,
                                              warnings);
  return stats;
}

}  // namespace ambidist::analysis
