// Independently coded reference implementations used as test oracles.
// These deliberately avoid the library's code paths: different formulas,
// different traversal order, no shared helpers.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ambidist/disthead.hpp"
#include "ambidist/matrix.hpp"
#include "ambidist/rng.hpp"

namespace refimpl {

// KL in nats accumulated termwise, converted to bits at the end.
inline double kl_nats(const std::vector<double>& p,
                      const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

inline double ref_jsd(const std::vector<double>& p,
                      const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = (p[i] + q[i]) / 2.0;
  return (0.5 * kl_nats(p, m) + 0.5 * kl_nats(q, m)) / std::log(2.0);
}

inline double ref_bc(const std::vector<double>& p,
                     const std::vector<double>& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::sqrt(p[i]) * std::sqrt(q[i]);
  return acc;
}

inline double ref_entropy_bits(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h += -v * std::log(v);
  }
  return h / std::log(2.0);
}

// Textbook Fleiss' kappa for a fixed rater count per item, from the count
// matrix n_ic (items x categories).
inline double ref_fleiss_equal(const std::vector<std::vector<int>>& counts,
                               int raters) {
  const auto items = static_cast<double>(counts.size());
  const auto k = counts.front().size();
  const double n = raters;
  double p_bar = 0.0;
  std::vector<double> pj(k, 0.0);
  for (const auto& row : counts) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      s += static_cast<double>(row[c]) * row[c];
      pj[c] += row[c];
    }
    p_bar += (s - n) / (n * (n - 1.0));
  }
  p_bar /= items;
  double pe = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double frac = pj[c] / (items * n);
    pe += frac * frac;
  }
  return (p_bar - pe) / (1.0 - pe);
}

// Ragged generalization written directly from per-item label lists.
inline double ref_fleiss_ragged(const std::vector<std::vector<int>>& label_sets,
                                std::size_t k) {
  double mean_agreement = 0.0;
  std::vector<double> totals(k, 0.0);
  double grand_total = 0.0;
  for (const auto& labels : label_sets) {
    std::vector<int> counts(k, 0);
    for (int l : labels) counts[static_cast<std::size_t>(l)]++;
    const double ni = static_cast<double>(labels.size());
    double pairs_agree = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      pairs_agree += counts[c] * (counts[c] - 1.0);
      totals[c] += counts[c];
    }
    mean_agreement += pairs_agree / (ni * (ni - 1.0));
    grand_total += ni;
  }
  mean_agreement /= static_cast<double>(label_sets.size());
  double chance = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    chance += (totals[c] / grand_total) * (totals[c] / grand_total);
  }
  return (mean_agreement - chance) / (1.0 - chance);
}

// Plain-loop forward pass of the distributional head, kept free of the
// library's matrix helpers.
inline std::vector<double> ref_head_forward(
    const ambidist::Matrix& x, const ambidist::disthead::HeadParams& P) {
  const std::size_t L = x.rows;
  const std::size_t d = P.config.d_model;
  const std::size_t n_heads = P.config.n_heads;
  const std::size_t dh = d / n_heads;
  const std::size_t dhid = P.config.d_hidden;
  const std::size_t K = P.config.k_out;

  auto mat = [](std::size_t r, std::size_t c) {
    return std::vector<std::vector<double>>(r, std::vector<double>(c, 0.0));
  };
  auto q = mat(L, d), k = mat(L, d), v = mat(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t t = 0; t < d; ++t) {
        q[i][j] += x.at(i, t) * P.wq.at(t, j);
        k[i][j] += x.at(i, t) * P.wk.at(t, j);
        v[i][j] += x.at(i, t) * P.wv.at(t, j);
      }
    }
  }
  auto heads = mat(L, d);
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> score(L, 0.0);
      for (std::size_t j = 0; j < L; ++j) {
        for (std::size_t c = 0; c < dh; ++c) {
          score[j] += q[i][h * dh + c] * k[j][h * dh + c];
        }
        score[j] /= std::sqrt(static_cast<double>(dh));
      }
      double mx = score[0];
      for (double s : score) mx = std::max(mx, s);
      double z = 0.0;
      for (double& s : score) {
        s = std::exp(s - mx);
        z += s;
      }
      for (double& s : score) s /= z;
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) acc += score[j] * v[j][h * dh + c];
        heads[i][h * dh + c] = acc;
      }
    }
  }
  auto x1 = mat(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = x.at(i, j);
      for (std::size_t t = 0; t < d; ++t) acc += heads[i][t] * P.wo.at(t, j);
      x1[i][j] = acc;
    }
  }
  auto x2 = mat(L, d);
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> hidden(dhid, 0.0);
    for (std::size_t j = 0; j < dhid; ++j) {
      double acc = P.b1[j];
      for (std::size_t t = 0; t < d; ++t) acc += x1[i][t] * P.w1.at(t, j);
      hidden[j] = std::tanh(acc);
    }
    for (std::size_t j = 0; j < d; ++j) {
      double acc = P.b2[j] + x1[i][j];
      for (std::size_t t = 0; t < dhid; ++t) acc += hidden[t] * P.w2.at(t, j);
      x2[i][j] = acc;
    }
  }
  std::vector<double> pooled(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < L; ++i) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) acc += x2[i][t] * P.wp.at(t, j);
      pooled[j] += acc;
    }
    pooled[j] /= static_cast<double>(L);
  }
  std::vector<double> logits(K, 0.0);
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t j = 0; j < d; ++j) logits[c] += pooled[j] * P.wout.at(j, c);
  }
  double mx = logits[0];
  for (double s : logits) mx = std::max(mx, s);
  double z = 0.0;
  std::vector<double> probs(K);
  for (std::size_t c = 0; c < K; ++c) {
    probs[c] = std::exp(logits[c] - mx);
    z += probs[c];
  }
  for (double& s : probs) s /= z;
  return probs;
}

// Central finite differences of jsd_loss(forward(x), target) w.r.t. every
// parameter of a copy of `params`.
inline std::vector<double> finite_diff_gradient(
    const ambidist::Matrix& x, const ambidist::EmotionDistribution& target,
    const ambidist::disthead::HeadParams& params, double h = 1e-5) {
  ambidist::disthead::HeadParams copy = params;
  auto blocks = copy.blocks();
  std::vector<double> grad;
  for (auto& block : blocks) {
    for (std::size_t i = 0; i < block.size; ++i) {
      const double orig = block.data[i];
      block.data[i] = orig + h;
      const double up = ambidist::disthead::jsd_loss(
          ambidist::disthead::forward(x, copy), target);
      block.data[i] = orig - h;
      const double down = ambidist::disthead::jsd_loss(
          ambidist::disthead::forward(x, copy), target);
      block.data[i] = orig;
      grad.push_back((up - down) / (2.0 * h));
    }
  }
  return grad;
}

// One-sided Mann-Kendall p-value for a decreasing trend (normal
// approximation with continuity correction).
inline double mann_kendall_p_decreasing(const std::vector<double>& x) {
  const auto n = static_cast<int>(x.size());
  long long s = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (x[j] > x[i]) ++s;
      if (x[j] < x[i]) --s;
    }
  }
  const double var =
      static_cast<double>(n) * (n - 1) * (2.0 * n + 5.0) / 18.0;
  double z;
  if (s < 0) {
    z = (static_cast<double>(s) + 1.0) / std::sqrt(var);
  } else if (s > 0) {
    z = (static_cast<double>(s) - 1.0) / std::sqrt(var);
  } else {
    z = 0.0;
  }
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Pearson chi-square statistic against expected probabilities; compare with
// the 99th-percentile critical value for the support's degrees of freedom.
inline double chi_square_stat(const std::vector<std::size_t>& observed,
                              const std::vector<double>& expected_probs,
                              std::size_t draws) {
  double stat = 0.0;
  for (std::size_t c = 0; c < observed.size(); ++c) {
    const double expected = expected_probs[c] * static_cast<double>(draws);
    if (expected <= 0.0) continue;
    const double diff = static_cast<double>(observed[c]) - expected;
    stat += diff * diff / expected;
  }
  return stat;
}

// 99th percentile of chi-square for df = 1..9.
inline double chi_square_crit99(std::size_t df) {
  static const double table[] = {6.634897, 9.210340,  11.344867,
                                 13.276704, 15.086272, 16.811894,
                                 18.475307, 20.090235, 21.665994};
  return table[df - 1];
}

// Random distribution on the K-simplex (occasionally sparse).
inline std::vector<double> random_distribution(ambidist::Rng& rng,
                                               std::size_t k,
                                               bool allow_zeros = true) {
  std::vector<double> p(k, 0.0);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const bool zero = allow_zeros && rng.uniform01() < 0.2;
    p[c] = zero ? 0.0 : -std::log(rng.uniform01() + 1e-300);
    sum += p[c];
  }
  if (sum == 0.0) {
    p[rng.below(k)] = 1.0;
    return p;
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace refimpl
