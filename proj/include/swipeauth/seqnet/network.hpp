#pragma once

// Embedding network: recurrent layer, batch normalization, dropout,
// recurrent layer; the last hidden state of the second layer is the
// embedding.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/error.hpp"
#include "swipeauth/seqnet/lstm.hpp"
#include "swipeauth/seqnet/params.hpp"
#include "swipeauth/touch.hpp"

namespace swipeauth::seqnet {

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

enum class Mode { Train, Infer };

using Embedding = Eigen::VectorXd;

/// All stochastic masks of one training forward pass.
struct DropoutMasks {
  RecurrentMasks layer1;
  RecurrentMasks layer2;
  Eigen::MatrixXd between;  // H x TB, empty when dropout is off
};

namespace detail {

inline Eigen::MatrixXd bernoulli_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng) < rate ? 0.0 : keep_scale;
  }
  return m;
}

inline void require_finite(const Eigen::MatrixXd& m, const char* stage) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::NumericFailure, std::string("non-finite values after ") + stage);
  }
}

}  // namespace detail

/// Samples the masks for a batch. Zero rates yield empty (disabled) masks.
inline DropoutMasks sample_masks(const ModelParams& model, int batch, int steps, double dropout,
                                 double recurrent_dropout, std::mt19937_64& rng) {
  const int H1 = model.layer1.hidden();
  const int H2 = model.layer2.hidden();
  DropoutMasks m;
  if (recurrent_dropout > 0.0) {
    for (auto& mask : m.layer1) mask = detail::bernoulli_mask(H1, batch, recurrent_dropout, rng);
    for (auto& mask : m.layer2) mask = detail::bernoulli_mask(H2, batch, recurrent_dropout, rng);
  }
  if (dropout > 0.0) m.between = detail::bernoulli_mask(H1, static_cast<Eigen::Index>(steps) * batch, dropout, rng);
  return m;
}

/// Packs feature matrices (In x T each) into the batched column layout.
inline Eigen::MatrixXd pack_batch(std::span<const Eigen::MatrixXd* const> inputs) {
  if (inputs.empty()) throw Error(ErrorKind::Contract, "pack_batch: empty batch");
  const auto rows = inputs.front()->rows();
  const auto steps = inputs.front()->cols();
  const auto B = static_cast<Eigen::Index>(inputs.size());
  Eigen::MatrixXd X(rows, steps * B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& m = *inputs[static_cast<std::size_t>(b)];
    if (m.rows() != rows || m.cols() != steps) throw Error(ErrorKind::Contract, "pack_batch: ragged batch");
    for (Eigen::Index t = 0; t < steps; ++t) X.col(t * B + b) = m.col(t);
  }
  return X;
}

/// Inference-mode normalization: gamma * (h - mean) / sqrt(var + eps) + beta.
inline Eigen::MatrixXd batch_norm_infer(const BatchNormParams& norm, const Eigen::MatrixXd& h) {
  Eigen::MatrixXd out(h.rows(), h.cols());
  for (Eigen::Index c = 0; c < h.cols(); ++c) {
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      out(r, c) = norm.gamma(r) * (h(r, c) - norm.running_mean(r)) /
                      std::sqrt(norm.running_var(r) + kBatchNormEpsilon) +
                  norm.beta(r);
    }
  }
  return out;
}

struct ForwardCache {
  LstmCache layer1;
  Eigen::MatrixXd normalized;  // x-hat, H x TB
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;
  Eigen::VectorXd inv_std;
  Eigen::MatrixXd between_mask;
  LstmCache layer2;
};

/// Batched forward pass. Train mode normalizes with batch statistics (over
/// batch and steps) and applies the given masks; Infer mode uses running
/// statistics and no masks. Returns embeddings as columns (E x B).
inline Eigen::MatrixXd forward(const ModelParams& model, Eigen::MatrixXd input, int batch, Mode mode,
                               DropoutMasks masks = {}, ForwardCache* cache = nullptr) {
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  const bool train = mode == Mode::Train;

  fc.layer1 = lstm_forward(model.layer1, std::move(input), batch, train ? std::move(masks.layer1) : RecurrentMasks{});
  detail::require_finite(fc.layer1.hidden, "layer1");
  const int T = fc.layer1.steps;

  Eigen::MatrixXd layer2_input;
  if (train) {
    const auto& h = fc.layer1.hidden;
    const double n = static_cast<double>(h.cols());
    fc.batch_mean = h.rowwise().sum() / n;
    const Eigen::MatrixXd centered = h.colwise() - fc.batch_mean;
    fc.batch_var = centered.array().square().rowwise().sum().matrix() / n;
    fc.inv_std = (fc.batch_var.array() + kBatchNormEpsilon).rsqrt().matrix();
    fc.normalized = fc.inv_std.asDiagonal() * centered;
    layer2_input = (model.norm.gamma.asDiagonal() * fc.normalized).colwise() + model.norm.beta;
    fc.between_mask = std::move(masks.between);
    if (fc.between_mask.size() > 0) layer2_input = layer2_input.cwiseProduct(fc.between_mask);
  } else {
    layer2_input = batch_norm_infer(model.norm, fc.layer1.hidden);
  }
  detail::require_finite(layer2_input, "batch-normalization");

  fc.layer2 = lstm_forward(model.layer2, std::move(layer2_input), batch, train ? std::move(masks.layer2) : RecurrentMasks{});
  detail::require_finite(fc.layer2.hidden, "layer2");
  return fc.layer2.hidden.middleCols(static_cast<Eigen::Index>(T - 1) * batch, batch);
}

/// Backward pass given dLoss/dEmbedding (E x B). Accumulates into grads.
inline void backward(const ModelParams& model, const ForwardCache& fc, const Eigen::MatrixXd& d_embedding,
                     ModelGrads& grads) {
  const int B = fc.layer2.batch;
  const int T = fc.layer2.steps;
  Eigen::MatrixXd d_h2 = Eigen::MatrixXd::Zero(model.layer2.hidden(), static_cast<Eigen::Index>(T) * B);
  d_h2.middleCols(static_cast<Eigen::Index>(T - 1) * B, B) = d_embedding;
  Eigen::MatrixXd d_z = lstm_backward(model.layer2, fc.layer2, d_h2, grads.layer2, true);

  if (fc.between_mask.size() > 0) d_z = d_z.cwiseProduct(fc.between_mask);
  grads.beta += d_z.rowwise().sum();
  grads.gamma += d_z.cwiseProduct(fc.normalized).rowwise().sum();

  const double n = static_cast<double>(d_z.cols());
  const Eigen::MatrixXd d_xhat = model.norm.gamma.asDiagonal() * d_z;
  const Eigen::VectorXd sum_dxhat = d_xhat.rowwise().sum();
  const Eigen::VectorXd sum_dxhat_xhat = d_xhat.cwiseProduct(fc.normalized).rowwise().sum();
  Eigen::MatrixXd d_h1 = (d_xhat * n).colwise() - sum_dxhat;
  d_h1 -= sum_dxhat_xhat.asDiagonal() * fc.normalized;
  d_h1 = (fc.inv_std / n).asDiagonal() * d_h1;

  lstm_backward(model.layer1, fc.layer1, d_h1, grads.layer1, false);
}

/// Folds the batch statistics of a training pass into the running averages.
inline void update_running_stats(BatchNormParams& norm, const ForwardCache& fc) {
  norm.running_mean = kBatchNormMomentum * norm.running_mean + (1.0 - kBatchNormMomentum) * fc.batch_mean;
  norm.running_var = kBatchNormMomentum * norm.running_var + (1.0 - kBatchNormMomentum) * fc.batch_var;
}

/// Single-sequence embedding. Infer mode is deterministic; Train mode draws
/// dropout masks from `rng` and normalizes with the sequence's own statistics.
inline Embedding embed(const ModelParams& model, const Eigen::MatrixXd& features, Mode mode = Mode::Infer,
                       std::mt19937_64* rng = nullptr, double dropout = 0.5, double recurrent_dropout = 0.2) {
  if (features.rows() != model.input_size()) throw Error(ErrorKind::Contract, "embed: feature rows mismatch");
  DropoutMasks masks;
  if (mode == Mode::Train && rng != nullptr) {
    masks = sample_masks(model, 1, static_cast<int>(features.cols()), dropout, recurrent_dropout, *rng);
  }
  return forward(model, features, 1, mode, std::move(masks)).col(0);
}

inline Embedding embed(const ModelParams& model, const FeatureMatrix& features) {
  return embed(model, features.values, Mode::Infer);
}

}  // namespace swipeauth::seqnet
