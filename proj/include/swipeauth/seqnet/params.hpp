#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/error.hpp"

namespace swipeauth::seqnet {

inline constexpr const char* kModelVersion = "swipeauth-seqnet-v1";

/// Gates are stacked row-wise in the order [input, forget, cell, output].
enum Gate : int { kGateInput = 0, kGateForget = 1, kGateCell = 2, kGateOutput = 3 };
inline constexpr const char* kGateNames[4] = {"input", "forget", "cell", "output"};

struct LstmParams {
  Eigen::MatrixXd W;  // 4H x In
  Eigen::MatrixXd U;  // 4H x H
  Eigen::VectorXd b;  // 4H

  int hidden() const { return static_cast<int>(U.cols()); }
  int inputs() const { return static_cast<int>(W.cols()); }

  static LstmParams zeros(int inputs, int hidden) {
    return {Eigen::MatrixXd::Zero(4 * hidden, inputs), Eigen::MatrixXd::Zero(4 * hidden, hidden),
            Eigen::VectorXd::Zero(4 * hidden)};
  }
};

struct BatchNormParams {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;

  static BatchNormParams identity(int features) {
    return {Eigen::VectorXd::Ones(features), Eigen::VectorXd::Zero(features), Eigen::VectorXd::Zero(features),
            Eigen::VectorXd::Ones(features)};
  }
};

struct ModelParams {
  LstmParams layer1;
  BatchNormParams norm;
  LstmParams layer2;
  std::string version = kModelVersion;

  int input_size() const { return layer1.inputs(); }
  int hidden_size() const { return layer1.hidden(); }
  int embedding_size() const { return layer2.hidden(); }

  static ModelParams zeros(int inputs, int hidden) {
    return {LstmParams::zeros(inputs, hidden), BatchNormParams::identity(hidden), LstmParams::zeros(hidden, hidden),
            kModelVersion};
  }
};

/// Trainable tensors only; running statistics are not gradient targets.
struct ModelGrads {
  LstmParams layer1;
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  LstmParams layer2;

  static ModelGrads zeros_like(const ModelParams& p) {
    return {LstmParams::zeros(p.layer1.inputs(), p.layer1.hidden()), Eigen::VectorXd::Zero(p.hidden_size()),
            Eigen::VectorXd::Zero(p.hidden_size()), LstmParams::zeros(p.layer2.inputs(), p.layer2.hidden())};
  }
};

using TensorRef = Eigen::Ref<Eigen::MatrixXd>;

/// Visits every trainable tensor with a stable name, in a fixed order.
template <typename Fn>
void for_each_trainable(ModelParams& p, Fn&& fn) {
  fn("layer1.W", TensorRef(p.layer1.W));
  fn("layer1.U", TensorRef(p.layer1.U));
  fn("layer1.b", TensorRef(p.layer1.b));
  fn("norm.gamma", TensorRef(p.norm.gamma));
  fn("norm.beta", TensorRef(p.norm.beta));
  fn("layer2.W", TensorRef(p.layer2.W));
  fn("layer2.U", TensorRef(p.layer2.U));
  fn("layer2.b", TensorRef(p.layer2.b));
}

template <typename Fn>
void for_each_trainable(ModelGrads& g, Fn&& fn) {
  fn("layer1.W", TensorRef(g.layer1.W));
  fn("layer1.U", TensorRef(g.layer1.U));
  fn("layer1.b", TensorRef(g.layer1.b));
  fn("norm.gamma", TensorRef(g.gamma));
  fn("norm.beta", TensorRef(g.beta));
  fn("layer2.W", TensorRef(g.layer2.W));
  fn("layer2.U", TensorRef(g.layer2.U));
  fn("layer2.b", TensorRef(g.layer2.b));
}

inline std::size_t trainable_count(const ModelParams& p) {
  auto lstm = [](const LstmParams& l) { return static_cast<std::size_t>(l.W.size() + l.U.size() + l.b.size()); };
  return lstm(p.layer1) + lstm(p.layer2) + static_cast<std::size_t>(p.norm.gamma.size() + p.norm.beta.size());
}

inline bool all_finite(const ModelParams& p) {
  return p.layer1.W.allFinite() && p.layer1.U.allFinite() && p.layer1.b.allFinite() && p.norm.gamma.allFinite() &&
         p.norm.beta.allFinite() && p.norm.running_mean.allFinite() && p.norm.running_var.allFinite() &&
         (p.norm.running_var.array() >= 0.0).all() && p.layer2.W.allFinite() && p.layer2.U.allFinite() &&
         p.layer2.b.allFinite();
}

struct TrainConfig {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double margin = 1.5;
  int epochs = 30;
  int batches_per_epoch = 100;
  int batch_size = 512;  // pairs
  double dropout = 0.5;
  double recurrent_dropout = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v < 1.0; };
    if (!(learning_rate > 0.0) || !in_unit(beta1) || !in_unit(beta2) || !(epsilon > 0.0) || !in_unit(dropout) ||
        !in_unit(recurrent_dropout)) {
      throw Error(ErrorKind::Configuration, "rates out of range");
    }
    if (!(margin > 0.0)) throw Error(ErrorKind::Configuration, "margin must be positive");
    if (epochs <= 0 || batches_per_epoch <= 0 || batch_size <= 0) {
      throw Error(ErrorKind::Configuration, "epochs, batches and batch size must be positive");
    }
    if (batch_size % 2 != 0) {
      throw Error(ErrorKind::Configuration, "batch size must be even to balance genuine and impostor pairs");
    }
  }

  bool operator==(const TrainConfig&) const = default;
};

namespace detail {

inline void glorot_fill(Eigen::Ref<Eigen::MatrixXd> m, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
  }
}

inline LstmParams init_lstm(int inputs, int hidden, std::mt19937_64& rng) {
  LstmParams p = LstmParams::zeros(inputs, hidden);
  // per-gate matrices: fan_in is the gate input width, fan_out the unit count
  for (int g = 0; g < 4; ++g) {
    glorot_fill(p.W.middleRows(g * hidden, hidden), inputs, hidden, rng);
    glorot_fill(p.U.middleRows(g * hidden, hidden), hidden, hidden, rng);
  }
  p.b.segment(kGateForget * hidden, hidden).setOnes();
  return p;
}

}  // namespace detail

inline ModelParams init_model(int inputs, int hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.layer1 = detail::init_lstm(inputs, hidden, rng);
  p.norm = BatchNormParams::identity(hidden);
  p.layer2 = detail::init_lstm(hidden, hidden, rng);
  return p;
}

}  // namespace swipeauth::seqnet
