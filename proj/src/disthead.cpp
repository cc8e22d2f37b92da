#include "ambidist/disthead.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "ambidist/distmath.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/rng.hpp"

namespace ambidist::disthead {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogEps = 1e-12;  // guard inside gradient logarithms

// C = A (r x k) * B (k x c)
Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t kk = 0; kk < a.cols; ++kk) {
      const double av = a.at(i, kk);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) {
        c.at(i, j) += av * b.at(kk, j);
      }
    }
  }
  return c;
}

// C = A^T (k x r)^T... i.e. A (k x r) used transposed: (r x k') result r=cols
Matrix matmul_ta(const Matrix& a, const Matrix& b) {  // A^T * B
  Matrix c(a.cols, b.cols);
  for (std::size_t kk = 0; kk < a.rows; ++kk) {
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double av = a.at(kk, i);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) {
        c.at(i, j) += av * b.at(kk, j);
      }
    }
  }
  return c;
}

Matrix matmul_tb(const Matrix& a, const Matrix& b) {  // A * B^T
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < a.cols; ++kk) {
        acc += a.at(i, kk) * b.at(j, kk);
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

std::vector<double> softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

struct ForwardTrace {
  Matrix x;                    // L x d input
  Matrix q, k, v;              // L x d
  std::vector<Matrix> attn;    // per head, L x L row-softmax
  Matrix heads;                // L x d concatenated head outputs
  Matrix x1;                   // after attention residual
  Matrix z;                    // tanh(U), L x d_hidden
  Matrix x2;                   // after MLP residual
  Matrix x3;                   // after projection
  std::vector<double> pooled;  // d
  std::vector<std::size_t> argmax_rows;  // max pooling backprop routes
  std::vector<double> logits;  // K
  std::vector<double> probs;   // K
};

void check_shapes(const Matrix& features, const HeadParams& params) {
  params.config.validate();
  const std::size_t d = params.config.d_model;
  if (features.rows < 1 || features.cols != d) {
    throw ShapeMismatch("features are " + std::to_string(features.rows) + "x" +
                        std::to_string(features.cols) + ", expected Lx" +
                        std::to_string(d));
  }
}

ForwardTrace run_forward(const Matrix& features, const HeadParams& params) {
  check_shapes(features, params);
  const auto& cfg = params.config;
  const std::size_t L = features.rows;
  const std::size_t d = cfg.d_model;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardTrace t;
  t.x = features;
  t.q = matmul(features, params.wq);
  t.k = matmul(features, params.wk);
  t.v = matmul(features, params.wv);

  t.heads = Matrix(L, d);
  t.attn.resize(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    Matrix scores(L, L);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          acc += t.q.at(i, off + c) * t.k.at(j, off + c);
        }
        scores.at(i, j) = acc * scale;
      }
    }
    Matrix& a = t.attn[h];
    a = Matrix(L, L);
    for (std::size_t i = 0; i < L; ++i) {
      const auto row = softmax(
          std::span<const double>(scores.data.data() + i * L, L));
      std::copy(row.begin(), row.end(), a.data.begin() + i * L);
    }
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          acc += a.at(i, j) * t.v.at(j, off + c);
        }
        t.heads.at(i, off + c) = acc;
      }
    }
  }

  t.x1 = matmul(t.heads, params.wo);
  add_inplace(t.x1, t.x);  // attention residual

  // Residual tanh MLP
  Matrix u = matmul(t.x1, params.w1);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < cfg.d_hidden; ++j) {
      u.at(i, j) += params.b1[j];
    }
  }
  t.z = Matrix(L, cfg.d_hidden);
  for (std::size_t i = 0; i < u.data.size(); ++i) {
    t.z.data[i] = std::tanh(u.data[i]);
  }
  t.x2 = matmul(t.z, params.w2);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      t.x2.at(i, j) += params.b2[j];
    }
  }
  add_inplace(t.x2, t.x1);  // MLP residual

  t.x3 = matmul(t.x2, params.wp);

  t.pooled.assign(d, 0.0);
  if (cfg.pooling == HeadConfig::Pooling::mean) {
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < d; ++j) t.pooled[j] += t.x3.at(i, j);
    }
    for (double& v : t.pooled) v /= static_cast<double>(L);
  } else {
    t.argmax_rows.assign(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
      double best = t.x3.at(0, j);
      std::size_t arg = 0;
      for (std::size_t i = 1; i < L; ++i) {
        if (t.x3.at(i, j) > best) {
          best = t.x3.at(i, j);
          arg = i;
        }
      }
      t.pooled[j] = best;
      t.argmax_rows[j] = arg;
    }
  }

  t.logits.assign(cfg.k_out, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double hj = t.pooled[j];
    if (hj == 0.0) continue;
    for (std::size_t kk = 0; kk < cfg.k_out; ++kk) {
      t.logits[kk] += hj * params.wout.at(j, kk);
    }
  }
  for (double v : t.logits) {
    if (!std::isfinite(v)) {
      throw NonFiniteActivation("non-finite logit");
    }
  }
  t.probs = softmax(t.logits);
  return t;
}

}  // namespace

void HeadConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || d_hidden < 1 || k_out < 1) {
    throw ConfigError("head dimensions must all be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) +
                      ") not divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
}

HeadParams HeadParams::zeros(const HeadConfig& config) {
  config.validate();
  HeadParams p;
  p.config = config;
  const std::size_t d = config.d_model;
  p.wq = Matrix(d, d);
  p.wk = Matrix(d, d);
  p.wv = Matrix(d, d);
  p.wo = Matrix(d, d);
  p.w1 = Matrix(d, config.d_hidden);
  p.b1.assign(config.d_hidden, 0.0);
  p.w2 = Matrix(config.d_hidden, d);
  p.b2.assign(d, 0.0);
  p.wp = Matrix(d, d);
  p.wout = Matrix(d, config.k_out);
  return p;
}

HeadParams HeadParams::init(const HeadConfig& config) {
  HeadParams p = zeros(config);
  Rng rng(mix_seed(config.seed, fnv1a64("head-init")));
  auto fill = [&rng](Matrix& m) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows));
    for (double& v : m.data) v = rng.uniform(-bound, bound);
  };
  fill(p.wq);
  fill(p.wk);
  fill(p.wv);
  fill(p.wo);
  fill(p.w1);
  fill(p.w2);
  fill(p.wp);
  fill(p.wout);
  return p;
}

std::vector<HeadParams::Block> HeadParams::blocks() {
  return {
      {"wq", wq.data.data(), wq.data.size()},
      {"wk", wk.data.data(), wk.data.size()},
      {"wv", wv.data.data(), wv.data.size()},
      {"wo", wo.data.data(), wo.data.size()},
      {"w1", w1.data.data(), w1.data.size()},
      {"b1", b1.data(), b1.size()},
      {"w2", w2.data.data(), w2.data.size()},
      {"b2", b2.data(), b2.size()},
      {"wp", wp.data.data(), wp.data.size()},
      {"wout", wout.data.data(), wout.data.size()},
  };
}

std::vector<HeadParams::Block> HeadParams::blocks() const {
  return const_cast<HeadParams*>(this)->blocks();
}

std::size_t HeadParams::n_params() const {
  std::size_t total = 0;
  for (const auto& b : blocks()) total += b.size;
  return total;
}

void HeadParams::axpy(double alpha, const HeadParams& other) {
  auto mine = blocks();
  const auto theirs = other.blocks();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    for (std::size_t j = 0; j < mine[i].size; ++j) {
      mine[i].data[j] += alpha * theirs[i].data[j];
    }
  }
}

EmotionDistribution forward(const Matrix& features, const HeadParams& params) {
  const auto trace = run_forward(features, params);
  return EmotionDistribution::unchecked(trace.probs);
}

double jsd_loss(const EmotionDistribution& predicted,
                const EmotionDistribution& target) {
  return distmath::js_divergence(predicted, target);
}

HeadParams gradient(const Matrix& features, const EmotionDistribution& target,
                    const HeadParams& params, double scale) {
  const ForwardTrace t = run_forward(features, params);
  const auto& cfg = params.config;
  if (target.k() != cfg.k_out) {
    throw DimensionMismatch("target has K=" + std::to_string(target.k()) +
                            ", head outputs K=" + std::to_string(cfg.k_out));
  }
  const std::size_t L = t.x.rows;
  const std::size_t d = cfg.d_model;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = d / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // dLoss/dp for JSD(p, q) is 0.5*log2(p_c/m_c); the epsilon only guards
  // the logarithm when softmax probabilities underflow.
  std::vector<double> gp(cfg.k_out);
  for (std::size_t c = 0; c < cfg.k_out; ++c) {
    const double pc = t.probs[c];
    const double mc = 0.5 * (pc + target[c]);
    gp[c] = scale * 0.5 *
            (std::log2(std::max(pc, kLogEps)) -
             std::log2(std::max(mc, kLogEps)));
  }

  // Softmax backward.
  std::vector<double> dlogits(cfg.k_out);
  double dot = 0.0;
  for (std::size_t c = 0; c < cfg.k_out; ++c) dot += gp[c] * t.probs[c];
  for (std::size_t c = 0; c < cfg.k_out; ++c) {
    dlogits[c] = t.probs[c] * (gp[c] - dot);
  }

  HeadParams g = HeadParams::zeros(cfg);

  // Output layer and pooling.
  std::vector<double> dpooled(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t kk = 0; kk < cfg.k_out; ++kk) {
      g.wout.at(j, kk) += t.pooled[j] * dlogits[kk];
      dpooled[j] += params.wout.at(j, kk) * dlogits[kk];
    }
  }
  Matrix dx3(L, d);
  if (cfg.pooling == HeadConfig::Pooling::mean) {
    const double inv_l = 1.0 / static_cast<double>(L);
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < d; ++j) dx3.at(i, j) = dpooled[j] * inv_l;
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      dx3.at(t.argmax_rows[j], j) = dpooled[j];
    }
  }

  // Projection.
  g.wp = matmul_ta(t.x2, dx3);
  Matrix dx2 = matmul_tb(dx3, params.wp);

  // Residual MLP (dM flows into the branch, dx2 continues to x1).
  const Matrix& dm = dx2;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < d; ++j) g.b2[j] += dm.at(i, j);
  }
  g.w2 = matmul_ta(t.z, dm);
  Matrix dz = matmul_tb(dm, params.w2);
  Matrix du(L, cfg.d_hidden);
  for (std::size_t i = 0; i < dz.data.size(); ++i) {
    du.data[i] = dz.data[i] * (1.0 - t.z.data[i] * t.z.data[i]);
  }
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < cfg.d_hidden; ++j) g.b1[j] += du.at(i, j);
  }
  g.w1 = matmul_ta(t.x1, du);
  Matrix dx1 = matmul_tb(du, params.w1);
  add_inplace(dx1, dx2);  // residual path

  // Attention output projection.
  g.wo = matmul_ta(t.heads, dx1);
  Matrix dheads = matmul_tb(dx1, params.wo);

  // Per-head attention backward.
  Matrix dq(L, d), dk(L, d), dv(L, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const Matrix& a = t.attn[h];

    // dV_h = A^T * dO_h
    for (std::size_t j = 0; j < L; ++j) {
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
          acc += a.at(i, j) * dheads.at(i, off + c);
        }
        dv.at(j, off + c) = acc;
      }
    }
    // dA = dO_h * V_h^T, then row-softmax backward into dS.
    Matrix ds(L, L);
    for (std::size_t i = 0; i < L; ++i) {
      double row_dot = 0.0;
      std::vector<double> da(L);
      for (std::size_t j = 0; j < L; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          acc += dheads.at(i, off + c) * t.v.at(j, off + c);
        }
        da[j] = acc;
        row_dot += acc * a.at(i, j);
      }
      for (std::size_t j = 0; j < L; ++j) {
        ds.at(i, j) = a.at(i, j) * (da[j] - row_dot);
      }
    }
    // dQ_h = dS * K_h * scale ; dK_h = dS^T * Q_h * scale
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t c = 0; c < dh; ++c) {
        double acc_q = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          acc_q += ds.at(i, j) * t.k.at(j, off + c);
        }
        dq.at(i, off + c) = acc_q * attn_scale;
      }
    }
    for (std::size_t j = 0; j < L; ++j) {
      for (std::size_t c = 0; c < dh; ++c) {
        double acc_k = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
          acc_k += ds.at(i, j) * t.q.at(i, off + c);
        }
        dk.at(j, off + c) = acc_k * attn_scale;
      }
    }
  }

  g.wq = matmul_ta(t.x, dq);
  g.wk = matmul_ta(t.x, dk);
  g.wv = matmul_ta(t.x, dv);

  for (const auto& block : g.blocks()) {
    for (std::size_t i = 0; i < block.size; ++i) {
      if (!std::isfinite(block.data[i])) {
        throw NonFiniteGradient(std::string("in block ") + block.name);
      }
    }
  }
  return g;
}

TrainResult train(std::span<const TrainSample> train_set,
                  std::span<const TrainSample> val_set,
                  const HeadConfig& config) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw ConfigError("train/val sets must be non-empty");
  }

  HeadParams params = HeadParams::init(config);
  auto mean_val_loss = [&](const HeadParams& p) {
    double acc = 0.0;
    for (const auto& s : val_set) {
      acc += jsd_loss(forward(s.features, p), s.target);
    }
    return acc / static_cast<double>(val_set.size());
  };

  TrainResult result;
  result.best_val_jsd = std::numeric_limits<double>::infinity();
  std::size_t stall = 0;
  const double inv_n = 1.0 / static_cast<double>(train_set.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr =
        config.learning_rate * 0.5 *
        (1.0 + std::cos(kPi * static_cast<double>(epoch - 1) /
                        static_cast<double>(config.max_epochs)));

    HeadParams grad = HeadParams::zeros(config);
    double train_loss = 0.0;
    double val_loss = 0.0;
    try {
      for (const auto& s : train_set) {
        train_loss += jsd_loss(forward(s.features, params), s.target);
        grad.axpy(1.0, gradient(s.features, s.target, params, inv_n));
      }
      train_loss *= inv_n;
      if (!std::isfinite(train_loss)) {
        throw DivergedTraining("training loss is not finite at epoch " +
                               std::to_string(epoch));
      }
      params.axpy(-lr, grad);
      val_loss = mean_val_loss(params);
    } catch (const NonFiniteActivation& ex) {
      throw DivergedTraining("epoch " + std::to_string(epoch) + ": " +
                             ex.what());
    } catch (const NonFiniteGradient& ex) {
      throw DivergedTraining("epoch " + std::to_string(epoch) + ": " +
                             ex.what());
    }
    if (!std::isfinite(val_loss)) {
      throw DivergedTraining("validation loss is not finite at epoch " +
                             std::to_string(epoch));
    }
    result.history.push_back({epoch, train_loss, val_loss, lr});

    if (val_loss < result.best_val_jsd) {
      result.best_val_jsd = val_loss;
      result.params = params;
      result.best_epoch = epoch;
      stall = 0;
    } else {
      ++stall;
      if (stall >= config.patience) break;
    }
  }
  if (result.best_epoch == 0) {
    result.params = params;  // no epoch ran (max_epochs = 0)
  }
  return result;
}

Evaluation evaluate_model(const HeadParams& params,
                          std::span<const TrainSample> test_set,
                          std::vector<std::string>* warnings) {
  if (test_set.empty()) {
    throw EmptyCorpus("evaluate_model needs a non-empty test set");
  }
  Evaluation eval;
  eval.n = test_set.size();
  std::vector<EmotionDistribution> reference, predicted;
  reference.reserve(test_set.size());
  predicted.reserve(test_set.size());
  for (const auto& s : test_set) {
    auto p = forward(s.features, params);
    eval.mean_jsd += distmath::js_divergence(p, s.target);
    eval.mean_bc += distmath::bhattacharyya(p, s.target);
    reference.push_back(s.target);
    predicted.push_back(std::move(p));
  }
  eval.mean_jsd /= static_cast<double>(eval.n);
  eval.mean_bc /= static_cast<double>(eval.n);
  eval.tertiles = analysis::tertile_bins(reference, predicted, warnings);
  return eval;
}

void save_checkpoint(const HeadParams& params,
                     const std::filesystem::path& bin_path,
                     const std::filesystem::path& json_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) {
    throw ConfigError("cannot write checkpoint " + bin_path.string());
  }
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& block : params.blocks()) {
    shapes.push_back({{"name", block.name}, {"size", block.size}});
    for (std::size_t i = 0; i < block.size; ++i) {
      const auto v = static_cast<float>(block.data[i]);
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      const std::uint8_t bytes[4] = {
          static_cast<std::uint8_t>(u & 0xff),
          static_cast<std::uint8_t>((u >> 8) & 0xff),
          static_cast<std::uint8_t>((u >> 16) & 0xff),
          static_cast<std::uint8_t>((u >> 24) & 0xff)};
      bin.write(reinterpret_cast<const char*>(bytes), 4);
    }
  }

  nlohmann::json sidecar;
  sidecar["dtype"] = "float32";
  sidecar["byte_order"] = "little";
  sidecar["blocks"] = shapes;
  sidecar["config"] = {
      {"d_model", params.config.d_model},
      {"n_heads", params.config.n_heads},
      {"d_hidden", params.config.d_hidden},
      {"k_out", params.config.k_out},
      {"seed", params.config.seed},
      {"learning_rate", params.config.learning_rate},
      {"max_epochs", params.config.max_epochs},
      {"patience", params.config.patience},
      {"pooling",
       params.config.pooling == HeadConfig::Pooling::mean ? "mean" : "max"},
  };
  std::ofstream side(json_path);
  side << sidecar.dump(2) << '\n';
}

HeadParams load_checkpoint(const std::filesystem::path& bin_path,
                           const std::filesystem::path& json_path) {
  std::ifstream side(json_path);
  if (!side) {
    throw ConfigError("cannot read checkpoint sidecar " + json_path.string());
  }
  nlohmann::json sidecar;
  side >> sidecar;
  HeadConfig config;
  const auto& jc = sidecar.at("config");
  config.d_model = jc.at("d_model").get<std::size_t>();
  config.n_heads = jc.at("n_heads").get<std::size_t>();
  config.d_hidden = jc.at("d_hidden").get<std::size_t>();
  config.k_out = jc.at("k_out").get<std::size_t>();
  config.seed = jc.value("seed", std::uint64_t{0});
  config.learning_rate = jc.value("learning_rate", 0.05);
  config.max_epochs = jc.value("max_epochs", std::size_t{500});
  config.patience = jc.value("patience", std::size_t{8});
  config.pooling = jc.value("pooling", std::string("mean")) == "max"
                       ? HeadConfig::Pooling::max
                       : HeadConfig::Pooling::mean;

  HeadParams params = HeadParams::zeros(config);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) {
    throw ConfigError("cannot read checkpoint " + bin_path.string());
  }
  for (auto& block : params.blocks()) {
    for (std::size_t i = 0; i < block.size; ++i) {
      std::uint8_t bytes[4];
      bin.read(reinterpret_cast<char*>(bytes), 4);
      if (!bin) {
        throw ConfigError("checkpoint " + bin_path.string() + " truncated");
      }
      const std::uint32_t u = static_cast<std::uint32_t>(bytes[0]) |
                              (static_cast<std::uint32_t>(bytes[1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[3]) << 24);
      float v;
      std::memcpy(&v, &u, 4);
      block.data[i] = static_cast<double>(v);
    }
  }
  return params;
}

}  // namespace ambidist::disthead
