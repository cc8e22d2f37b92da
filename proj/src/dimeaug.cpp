#include "ambidist/dimeaug.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ambidist/distmath.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/rng.hpp"
#include "ambidist/strings.hpp"

namespace ambidist::dimeaug {

namespace {

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

int dominant_of(const Utterance& u) {
  if (!u.distribution) {
    throw MissingDistribution("utterance '" + u.id +
                              "' has no aggregated distribution");
  }
  return distmath::dominant_emotion(*u.distribution);
}

double draw_lambda(const MixConfig& config, Rng& rng) {
  switch (config.lambda_policy) {
    case MixConfig::LambdaPolicy::fixed:
      return config.lambda_fixed;
    case MixConfig::LambdaPolicy::uniform_full:
      return rng.uniform01();
    case MixConfig::LambdaPolicy::uniform_high:
    default:
      return rng.uniform(0.5, 1.0);
  }
}

}  // namespace

std::size_t AugmentationPlan::budget() const {
  return std::accumulate(per_class_targets.begin(), per_class_targets.end(),
                         std::size_t{0});
}

std::vector<const Utterance*> k_nearest(const Utterance& query,
                                        std::span<const Utterance> pool,
                                        int k, const MixConfig& config) {
  if (!query.embedding) {
    throw MissingEmbedding("query '" + query.id + "' has no embedding");
  }
  const int query_class =
      config.neighbor_scope == MixConfig::NeighborScope::same_class
          ? dominant_of(query)
          : -1;

  struct Scored {
    double dist2;
    const Utterance* u;
  };
  std::vector<Scored> scored;
  for (const Utterance& candidate : pool) {
    if (candidate.id == query.id) continue;
    if (query_class >= 0 && dominant_of(candidate) != query_class) continue;
    if (!candidate.embedding) {
      throw MissingEmbedding("pool utterance '" + candidate.id +
                             "' has no embedding");
    }
    if (candidate.embedding->size() != query.embedding->size()) {
      throw MissingEmbedding("embedding dimension mismatch: '" + query.id +
                             "' vs '" + candidate.id + "'");
    }
    scored.push_back({squared_distance(*query.embedding, *candidate.embedding),
                      &candidate});
  }
  if (scored.empty()) {
    throw EmptyPool("no eligible neighbor for '" + query.id + "'" +
                    (query_class >= 0
                         ? " within its dominant class"
                         : ""));
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
    return a.u->id < b.u->id;
  });
  const std::size_t count =
      std::min<std::size_t>(scored.size(), static_cast<std::size_t>(
                                               std::max(1, k)));
  std::vector<const Utterance*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(scored[i].u);
  return out;
}

const Utterance& nearest_neighbor(const Utterance& query,
                                  std::span<const Utterance> pool,
                                  const MixConfig& config) {
  return *k_nearest(query, pool, 1, config).front();
}

std::vector<float> mix_audio(const Waveform& xi, const Waveform& xj,
                             double lambda) {
  if (xi.sample_rate != xj.sample_rate) {
    throw SampleRateMismatch(std::to_string(xi.sample_rate) + " Hz vs " +
                             std::to_string(xj.sample_rate) + " Hz");
  }
  const std::size_t n = std::max(xi.samples.size(), xj.samples.size());
  std::vector<float> out(n);
  const double l = lambda;
  for (std::size_t t = 0; t < n; ++t) {
    const double a = t < xi.samples.size() ? xi.samples[t] : 0.0;
    const double b = t < xj.samples.size() ? xj.samples[t] : 0.0;
    const double v = l * a + (1.0 - l) * b;
    out[t] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

AugmentedSample mix_sample(const Utterance& ui, const Utterance& uj,
                           double lambda, const MixConfig& config) {
  if (!ui.distribution || !uj.distribution) {
    throw MissingDistribution("mix_sample needs aggregated distributions for '" +
                              ui.id + "' and '" + uj.id + "'");
  }
  const auto& pi = ui.distribution->probs();
  const auto& pj = uj.distribution->probs();
  if (pi.size() != pj.size()) {
    throw DimensionMismatch("parent distributions have K=" +
                            std::to_string(pi.size()) + " and K=" +
                            std::to_string(pj.size()));
  }

  AugmentedSample sample;
  sample.id = "aug-" + ui.id + "-" + uj.id;
  sample.sample_rate = ui.sample_rate;
  sample.audio = mix_audio({ui.audio, ui.sample_rate},
                           {uj.audio, uj.sample_rate}, lambda);
  sample.transcript =
      lambda >= config.transcript_threshold ? ui.transcript : uj.transcript;

  std::vector<double> mixed(pi.size());
  for (std::size_t c = 0; c < pi.size(); ++c) {
    mixed[c] = lambda * pi[c] + (1.0 - lambda) * pj[c];
  }
  sample.distribution = EmotionDistribution::unchecked(std::move(mixed));
  sample.parents = {ui.id, uj.id};
  sample.lambda = lambda;

  if (ui.embedding && uj.embedding &&
      ui.embedding->size() == uj.embedding->size()) {
    std::vector<double> emb(ui.embedding->size());
    for (std::size_t i = 0; i < emb.size(); ++i) {
      emb[i] = lambda * (*ui.embedding)[i] + (1.0 - lambda) * (*uj.embedding)[i];
    }
    sample.embedding = std::move(emb);
  }
  if (ui.feature_sequence && uj.feature_sequence) {
    const Matrix& fi = *ui.feature_sequence;
    const Matrix& fj = *uj.feature_sequence;
    if (fi.cols != fj.cols) {
      throw DimensionMismatch("feature widths differ: " +
                              std::to_string(fi.cols) + " vs " +
                              std::to_string(fj.cols));
    }
    // Shorter sequence zero-padded at the end, like the waveforms.
    Matrix mixed_f(std::max(fi.rows, fj.rows), fi.cols);
    for (std::size_t r = 0; r < mixed_f.rows; ++r) {
      for (std::size_t c = 0; c < mixed_f.cols; ++c) {
        const double a = r < fi.rows ? fi.at(r, c) : 0.0;
        const double b = r < fj.rows ? fj.at(r, c) : 0.0;
        mixed_f.at(r, c) = lambda * a + (1.0 - lambda) * b;
      }
    }
    sample.feature_sequence = std::move(mixed_f);
  }
  return sample;
}

AugmentationPlan plan_augmentation(std::span<const Utterance> train,
                                   double ratio, const MixConfig& /*config*/,
                                   std::size_t k_categories) {
  if (train.empty()) {
    throw EmptyCorpus("plan_augmentation needs a non-empty training set");
  }
  if (!(ratio > 0.0) || ratio > 1.0) {
    throw ConfigError("augmentation ratio must be in (0, 1], got " +
                      format_g17(ratio));
  }
  std::vector<std::size_t> counts(k_categories, 0);
  for (const Utterance& u : train) {
    counts[static_cast<std::size_t>(dominant_of(u))]++;
  }
  auto budget = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(train.size())));

  AugmentationPlan plan;
  plan.ratio = ratio;
  plan.per_class_targets.assign(k_categories, 0);
  // Water-filling: each grant goes to the currently smallest class, so no
  // class ever rises above the running maximum and the imbalance ratio
  // cannot grow.
  std::vector<std::size_t> level = counts;
  for (std::size_t b = 0; b < budget; ++b) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < level.size(); ++c) {
      if (level[c] < level[arg]) arg = c;
    }
    level[arg]++;
    plan.per_class_targets[arg]++;
  }
  return plan;
}

std::vector<AugmentedSample> balance_dataset(
    std::span<const Utterance> train, const AugmentationPlan& plan,
    const MixConfig& config, std::vector<std::string>* warnings) {
  // Class membership in stable id order, then a seeded shuffle so round-robin
  // coverage is reproducible but not tied to corpus order.
  const std::size_t k = plan.per_class_targets.size();
  std::vector<std::vector<const Utterance*>> members(k);
  for (const Utterance& u : train) {
    members[static_cast<std::size_t>(dominant_of(u))].push_back(&u);
  }
  for (auto& m : members) {
    std::sort(m.begin(), m.end(),
              [](const Utterance* a, const Utterance* b) { return a->id < b->id; });
  }

  std::vector<AugmentedSample> augmented;
  augmented.reserve(plan.budget());
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t target = plan.per_class_targets[c];
    if (target == 0) continue;
    if (members[c].empty()) {
      throw EmptyPool("class " + std::to_string(c) +
                      " has no members to augment from");
    }

    MixConfig class_config = config;
    if (members[c].size() == 1 &&
        config.neighbor_scope == MixConfig::NeighborScope::same_class) {
      warn(warnings, "balance_dataset: class " + std::to_string(c) +
                         " has a single member; falling back to any_class "
                         "neighbor scope for it");
      class_config.neighbor_scope = MixConfig::NeighborScope::any_class;
    }

    std::vector<const Utterance*> order = members[c];
    Rng order_rng(mix_seed(config.seed, fnv1a64("class-order") ^ c));
    order_rng.shuffle(order);

    for (std::size_t e = 0; e < target; ++e) {
      const Utterance& ui = *order[e % order.size()];
      // Per-emission stream: depends only on (seed, class, emission index).
      Rng rng(mix_seed(mix_seed(config.seed, fnv1a64("emit") ^ c),
                       static_cast<std::uint64_t>(e)));
      const double lambda = draw_lambda(class_config, rng);
      const auto neighbors =
          k_nearest(ui, train, class_config.k, class_config);
      const Utterance& uj =
          class_config.k <= 1 || neighbors.size() == 1
              ? *neighbors.front()
              : *neighbors[rng.below(neighbors.size())];
      AugmentedSample sample = mix_sample(ui, uj, lambda, class_config);
      sample.id = "aug-" + std::to_string(c) + "-" + std::to_string(e) + "-" +
                  ui.id;
      augmented.push_back(std::move(sample));
    }
  }
  return augmented;
}

}  // namespace ambidist::dimeaug
