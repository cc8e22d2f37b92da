#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ambidist/analysis.hpp"
#include "ambidist/matrix.hpp"
#include "ambidist/types.hpp"

namespace ambidist::disthead {

struct HeadConfig {
  std::size_t d_model = 8;
  std::size_t n_heads = 2;
  std::size_t d_hidden = 16;
  std::size_t k_out = 4;
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  std::size_t max_epochs = 500;
  std::size_t patience = 8;
  enum class Pooling { mean, max } pooling = Pooling::mean;

  void validate() const;  // throws ConfigError
};

// Parameters of the head: attention projections, residual tanh MLP,
// projection, output layer. Only the MLP carries biases.
struct HeadParams {
  HeadConfig config;
  Matrix wq, wk, wv, wo;       // d x d
  Matrix w1;                   // d x d_hidden
  std::vector<double> b1;      // d_hidden
  Matrix w2;                   // d_hidden x d
  std::vector<double> b2;      // d
  Matrix wp;                   // d x d
  Matrix wout;                 // d x K

  // Seed-deterministic init: matrices uniform in [-1/sqrt(fan_in),
  // +1/sqrt(fan_in)], biases zero.
  static HeadParams init(const HeadConfig& config);
  static HeadParams zeros(const HeadConfig& config);

  std::size_t n_params() const;

  // Fixed traversal order (wq, wk, wv, wo, w1, b1, w2, b2, wp, wout) used by
  // checkpoints, the optimizer, and gradient checks.
  struct Block {
    const char* name;
    double* data;
    std::size_t size;
  };
  std::vector<Block> blocks();
  std::vector<Block> blocks() const;  // const_cast-free read view

  void axpy(double alpha, const HeadParams& other);  // this += alpha * other
};

// MHSA (residual) -> residual tanh MLP -> projection -> pool over L ->
// linear -> softmax. No positional encoding; the output is therefore
// invariant to permutations of the L positions.
EmotionDistribution forward(const Matrix& features, const HeadParams& params);

// Identical to distmath::js_divergence; kept as the named training loss.
double jsd_loss(const EmotionDistribution& predicted,
                const EmotionDistribution& target);

// Analytic gradient of scale * jsd_loss(forward(features), target) with
// respect to every parameter.
HeadParams gradient(const Matrix& features, const EmotionDistribution& target,
                    const HeadParams& params, double scale = 1.0);

struct TrainSample {
  Matrix features;
  EmotionDistribution target;
};

struct EpochStats {
  std::size_t epoch;
  double train_jsd;
  double val_jsd;
  double lr;
};

struct TrainResult {
  HeadParams params;  // best-validation parameters
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_jsd = 0.0;
};

// Full-batch gradient descent with cosine learning-rate decay and early
// stopping (patience epochs without validation improvement). Deterministic
// for a fixed config seed. Throws DivergedTraining when the loss goes
// non-finite.
TrainResult train(std::span<const TrainSample> train_set,
                  std::span<const TrainSample> val_set,
                  const HeadConfig& config);

struct Evaluation {
  double mean_jsd = 0.0;
  double mean_bc = 0.0;
  std::size_t n = 0;
  analysis::AmbiguityBins tertiles;
};

// Mean JSD / BC between predictions and the samples' reference
// distributions, plus the ambiguity-tertile breakdown.
Evaluation evaluate_model(const HeadParams& params,
                          std::span<const TrainSample> test_set,
                          std::vector<std::string>* warnings = nullptr);

// Checkpoint: little-endian float32 of the blocks in traversal order, with a
// JSON sidecar recording the config and shapes.
void save_checkpoint(const HeadParams& params,
                     const std::filesystem::path& bin_path,
                     const std::filesystem::path& json_path);
HeadParams load_checkpoint(const std::filesystem::path& bin_path,
                           const std::filesystem::path& json_path);

}  // namespace ambidist::disthead
