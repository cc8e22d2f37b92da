#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ambidist/types.hpp"

namespace ambidist::dimeaug {

struct MixConfig {
  enum class LambdaPolicy { uniform_high, fixed, uniform_full };
  enum class NeighborScope { same_class, any_class };

  // uniform_high (lambda ~ U(0.5, 1)) keeps the minority parent dominant so
  // every emitted sample's dominant class stays in the class being filled.
  LambdaPolicy lambda_policy = LambdaPolicy::uniform_high;
  double lambda_fixed = 0.7;
  double transcript_threshold = 0.5;
  NeighborScope neighbor_scope = NeighborScope::same_class;
  int k = 1;  // neighbor count searched; >1 samples uniformly among them
  std::uint64_t seed = 0;
};

struct AugmentedSample {
  std::string id;
  std::vector<float> audio;
  int sample_rate = 16000;
  std::string transcript;
  EmotionDistribution distribution;
  std::array<std::string, 2> parents;
  double lambda = 0.0;
  std::optional<std::vector<double>> embedding;
  std::optional<Matrix> feature_sequence;
};

struct AugmentationPlan {
  std::vector<std::size_t> per_class_targets;  // indexed by category id
  double ratio = 0.0;
  std::string source = "human";  // annotation source behind the distributions

  std::size_t budget() const;
};

struct Waveform {
  std::span<const float> samples;
  int sample_rate = 16000;
};

// Euclidean nearest neighbor over embeddings; pool must exclude the query.
// same_class scope restricts the pool to the query's dominant class; exact
// distance ties break by lexicographic id. Throws MissingEmbedding/EmptyPool.
const Utterance& nearest_neighbor(const Utterance& query,
                                  std::span<const Utterance> pool,
                                  const MixConfig& config);

// The k nearest, ascending by (distance, id).
std::vector<const Utterance*> k_nearest(const Utterance& query,
                                        std::span<const Utterance> pool,
                                        int k, const MixConfig& config);

// x_k = lambda*x_i + (1-lambda)*x_j, the shorter signal zero-padded at the
// end; result clamped to [-1, 1]. Throws SampleRateMismatch.
std::vector<float> mix_audio(const Waveform& xi, const Waveform& xj,
                             double lambda);

// Full sample mix: audio via mix_audio, P_k = lambda*P_i + (1-lambda)*P_j,
// transcript inherited exactly from the lambda-dominant parent
// (lambda >= threshold -> parent i). Embeddings and feature sequences, when
// both parents carry them, are mixed with the same coefficient so augmented
// samples stay usable downstream.
AugmentedSample mix_sample(const Utterance& ui, const Utterance& uj,
                           double lambda, const MixConfig& config);

// Water-filling budget allocation: B = round(ratio * |train|) new samples,
// repeatedly granted to the class with the smallest dominant-emotion count
// (ties to the lowest category index).
AugmentationPlan plan_augmentation(std::span<const Utterance> train,
                                   double ratio, const MixConfig& config,
                                   std::size_t k_categories);

// Emits the planned samples: round-robin over seeded-shuffled class members,
// nearest-neighbor partner, lambda from the policy. Classes of size one fall
// back to any_class scope with a warning. Returned samples are appended to
// the originals by the caller; class counts never decrease.
std::vector<AugmentedSample> balance_dataset(
    std::span<const Utterance> train, const AugmentationPlan& plan,
    const MixConfig& config, std::vector<std::string>* warnings = nullptr);

}  // namespace ambidist::dimeaug
