#pragma once

// Gated recurrent layer, forward and backpropagation through time.
//
// Batched layout: a batch of B sequences of T steps is one matrix with
// In rows and T*B columns; column t*B + b holds step t of sequence b.

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "swipeauth/error.hpp"
#include "swipeauth/seqnet/params.hpp"

namespace swipeauth::seqnet {

struct LstmState {
  Eigen::VectorXd hidden;
  Eigen::VectorXd cell;
};

/// Per-gate recurrent dropout masks (H x B), fixed across all steps of a
/// sequence. Entries are 0 or 1/(1-rate). Empty means no dropout.
using RecurrentMasks = std::array<Eigen::MatrixXd, 4>;

inline bool has_masks(const RecurrentMasks& m) { return m[0].size() > 0; }

namespace detail {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

template <typename Derived>
void sigmoid_inplace(Eigen::MatrixBase<Derived>&& m) {
  m = m.unaryExpr([](double v) { return sigmoid(v); });
}

template <typename Derived>
void tanh_inplace(Eigen::MatrixBase<Derived>&& m) {
  m = m.array().tanh().matrix();
}

}  // namespace detail

/// One cell update for a single sequence.
inline LstmState recurrent_step(const LstmParams& layer, const Eigen::VectorXd& input, const Eigen::VectorXd& hidden,
                                const Eigen::VectorXd& cell) {
  const int H = layer.hidden();
  if (input.size() != layer.inputs() || hidden.size() != H || cell.size() != H) {
    throw Error(ErrorKind::Contract, "recurrent_step: shape mismatch");
  }
  Eigen::VectorXd z = layer.W * input + layer.U * hidden + layer.b;
  detail::sigmoid_inplace(z.segment(kGateInput * H, H));
  detail::sigmoid_inplace(z.segment(kGateForget * H, H));
  detail::tanh_inplace(z.segment(kGateCell * H, H));
  detail::sigmoid_inplace(z.segment(kGateOutput * H, H));
  LstmState next;
  next.cell = z.segment(kGateForget * H, H).cwiseProduct(cell) +
              z.segment(kGateInput * H, H).cwiseProduct(z.segment(kGateCell * H, H));
  next.hidden = z.segment(kGateOutput * H, H).cwiseProduct(next.cell.array().tanh().matrix());
  return next;
}

/// Everything the backward pass needs from one layer's forward pass.
struct LstmCache {
  int batch = 0;
  int steps = 0;
  Eigen::MatrixXd input;       // In x TB
  Eigen::MatrixXd gates;       // 4H x TB, post-activation
  Eigen::MatrixXd cells;       // H x TB
  Eigen::MatrixXd tanh_cells;  // H x TB
  Eigen::MatrixXd hidden;      // H x TB
  RecurrentMasks masks;
};

/// Runs the layer over every step of every sequence in the batch.
inline LstmCache lstm_forward(const LstmParams& layer, Eigen::MatrixXd input, int batch, RecurrentMasks masks = {}) {
  const int H = layer.hidden();
  if (batch <= 0 || input.rows() != layer.inputs() || input.cols() % batch != 0) {
    throw Error(ErrorKind::Contract, "lstm_forward: shape mismatch");
  }
  const int T = static_cast<int>(input.cols() / batch);
  const bool masked = has_masks(masks);

  LstmCache cache;
  cache.batch = batch;
  cache.steps = T;
  cache.gates.noalias() = layer.W * input;
  cache.gates.colwise() += layer.b;
  cache.cells.resize(H, input.cols());
  cache.tanh_cells.resize(H, input.cols());
  cache.hidden.resize(H, input.cols());

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(H, batch);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(H, batch);
  for (int t = 0; t < T; ++t) {
    auto z = cache.gates.middleCols(t * batch, batch);
    if (masked) {
      for (int g = 0; g < 4; ++g) {
        z.middleRows(g * H, H).noalias() += layer.U.middleRows(g * H, H) * h.cwiseProduct(masks[g]);
      }
    } else {
      z.noalias() += layer.U * h;
    }
    detail::sigmoid_inplace(z.middleRows(kGateInput * H, H));
    detail::sigmoid_inplace(z.middleRows(kGateForget * H, H));
    detail::tanh_inplace(z.middleRows(kGateCell * H, H));
    detail::sigmoid_inplace(z.middleRows(kGateOutput * H, H));

    c = z.middleRows(kGateForget * H, H).cwiseProduct(c) +
        z.middleRows(kGateInput * H, H).cwiseProduct(z.middleRows(kGateCell * H, H));
    auto tc = cache.tanh_cells.middleCols(t * batch, batch);
    tc = c.array().tanh().matrix();
    h = z.middleRows(kGateOutput * H, H).cwiseProduct(tc);
    cache.cells.middleCols(t * batch, batch) = c;
    cache.hidden.middleCols(t * batch, batch) = h;
  }
  cache.input = std::move(input);
  cache.masks = std::move(masks);
  return cache;
}

/// Backpropagation through time. `d_hidden` is dLoss/dh for every step
/// (H x TB). Accumulates into `grads` and returns dLoss/dinput when asked.
inline Eigen::MatrixXd lstm_backward(const LstmParams& layer, const LstmCache& cache, const Eigen::MatrixXd& d_hidden,
                                     LstmParams& grads, bool want_input_grad) {
  const int H = layer.hidden();
  const int B = cache.batch;
  const int T = cache.steps;
  const bool masked = has_masks(cache.masks);

  Eigen::MatrixXd d_pre(4 * H, static_cast<Eigen::Index>(T) * B);
  Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(H, B);
  Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(H, B);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(H, B);

  for (int t = T - 1; t >= 0; --t) {
    const auto gates = cache.gates.middleCols(t * B, B);
    const auto i = gates.middleRows(kGateInput * H, H).array();
    const auto f = gates.middleRows(kGateForget * H, H).array();
    const auto g = gates.middleRows(kGateCell * H, H).array();
    const auto o = gates.middleRows(kGateOutput * H, H).array();
    const auto tc = cache.tanh_cells.middleCols(t * B, B).array();
    const auto c_prev = t > 0 ? cache.cells.middleCols((t - 1) * B, B) : zero.middleCols(0, B);
    const auto h_prev = t > 0 ? cache.hidden.middleCols((t - 1) * B, B) : zero.middleCols(0, B);

    const Eigen::ArrayXXd dh = d_hidden.middleCols(t * B, B).array() + dh_next.array();
    const Eigen::ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc * tc);

    auto dp = d_pre.middleCols(t * B, B);
    dp.middleRows(kGateInput * H, H) = (dc * g * i * (1.0 - i)).matrix();
    dp.middleRows(kGateForget * H, H) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
    dp.middleRows(kGateCell * H, H) = (dc * i * (1.0 - g * g)).matrix();
    dp.middleRows(kGateOutput * H, H) = (dh * tc * o * (1.0 - o)).matrix();
    dc_next = (dc * f).matrix();

    if (masked) {
      dh_next.setZero();
      for (int k = 0; k < 4; ++k) {
        const auto dpk = dp.middleRows(k * H, H);
        const Eigen::MatrixXd h_masked = h_prev.cwiseProduct(cache.masks[k]);
        grads.U.middleRows(k * H, H).noalias() += dpk * h_masked.transpose();
        dh_next.noalias() += (layer.U.middleRows(k * H, H).transpose() * dpk).cwiseProduct(cache.masks[k]);
      }
    } else {
      grads.U.noalias() += dp * h_prev.transpose();
      dh_next.noalias() = layer.U.transpose() * dp;
    }
  }
  grads.W.noalias() += d_pre * cache.input.transpose();
  grads.b += d_pre.rowwise().sum();
  if (!want_input_grad) return {};
  return layer.W.transpose() * d_pre;
}

}  // namespace swipeauth::seqnet
