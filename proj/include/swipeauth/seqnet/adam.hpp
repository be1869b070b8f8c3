#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/error.hpp"
#include "swipeauth/seqnet/params.hpp"

namespace swipeauth::seqnet {

struct AdamHyper {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamHyper from(const TrainConfig& c) { return {c.learning_rate, c.beta1, c.beta2, c.epsilon}; }
};

/// Bias-corrected Adam over a flat list of tensors with a constant step size.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamHyper hyper) : hyper_(hyper) {}

  std::int64_t step_count() const { return step_; }
  const AdamHyper& hyper() const { return hyper_; }

  /// Applies one update. Rejects the whole step, leaving params and moments
  /// untouched, if any gradient entry is non-finite.
  void step(std::vector<TensorRef>& params, const std::vector<TensorRef>& grads) {
    if (params.size() != grads.size()) throw Error(ErrorKind::Contract, "adam: tensor count mismatch");
    for (std::size_t k = 0; k < grads.size(); ++k) {
      if (params[k].rows() != grads[k].rows() || params[k].cols() != grads[k].cols()) {
        throw Error(ErrorKind::Contract, "adam: shape mismatch at tensor " + std::to_string(k));
      }
      if (!grads[k].allFinite()) {
        throw Error(ErrorKind::NumericFailure, "adam: non-finite gradient in tensor " + std::to_string(k));
      }
    }
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
        second_.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      }
    }
    ++step_;
    const double corr1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double corr2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto m = first_[k].array();
      auto v = second_[k].array();
      const auto g = grads[k].array();
      m = hyper_.beta1 * m + (1.0 - hyper_.beta1) * g;
      v = hyper_.beta2 * v + (1.0 - hyper_.beta2) * g * g;
      params[k].array() -= hyper_.learning_rate * (m / corr1) / ((v / corr2).sqrt() + hyper_.epsilon);
    }
  }

  void step(ModelParams& params, ModelGrads& grads) {
    std::vector<TensorRef> p;
    std::vector<TensorRef> g;
    for_each_trainable(params, [&](const char*, TensorRef t) { p.push_back(t); });
    for_each_trainable(grads, [&](const char*, TensorRef t) { g.push_back(t); });
    step(p, g);
  }

 private:
  AdamHyper hyper_;
  std::int64_t step_ = 0;
  std::vector<Eigen::MatrixXd> first_;
  std::vector<Eigen::MatrixXd> second_;
};

}  // namespace swipeauth::seqnet
