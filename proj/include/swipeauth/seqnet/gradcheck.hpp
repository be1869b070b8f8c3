#pragma once

// Finite-difference verification of the analytic gradients of
// contrastive_loss composed with the training-mode forward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/seqnet/network.hpp"
#include "swipeauth/seqnet/params.hpp"
#include "swipeauth/seqnet/train.hpp"

namespace swipeauth::seqnet {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t parameters_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  // denominators below this are clamped so flat directions do not divide by ~0
  double relative_floor = 1e-6;
  // applied to the analytic gradient before comparison (mutation testing)
  std::function<void(ModelGrads&)> corrupt;
};

/// Loss of one pair through a shared-weight training pass with fixed masks.
inline double pair_loss(const ModelParams& model, const Eigen::MatrixXd& first, const Eigen::MatrixXd& second,
                        bool genuine, double margin, const DropoutMasks& masks, ForwardCache* cache = nullptr,
                        Eigen::MatrixXd* d_emb = nullptr) {
  const Eigen::MatrixXd* members[2] = {&first, &second};
  const Eigen::MatrixXd emb = forward(model, pack_batch(members), 2, Mode::Train, masks, cache);
  const TrainingPair pair{{0, 0}, {0, 1}, genuine};
  return pair_batch_loss(emb, std::span<const TrainingPair>(&pair, 1), margin, d_emb);
}

inline ModelGrads analytic_pair_gradient(const ModelParams& model, const Eigen::MatrixXd& first,
                                         const Eigen::MatrixXd& second, bool genuine, double margin,
                                         const DropoutMasks& masks) {
  ForwardCache cache;
  Eigen::MatrixXd d_emb;
  pair_loss(model, first, second, genuine, margin, masks, &cache, &d_emb);
  ModelGrads grads = ModelGrads::zeros_like(model);
  backward(model, cache, d_emb, grads);
  return grads;
}

/// Compares every trainable entry's analytic gradient with a central
/// difference. Relative error is |a - n| / max(|a|, |n|, relative_floor).
inline GradCheckResult gradient_check(const ModelParams& model, const Eigen::MatrixXd& first,
                                      const Eigen::MatrixXd& second, bool genuine, double margin,
                                      const DropoutMasks& masks = {}, const GradCheckOptions& options = {}) {
  ModelGrads analytic = analytic_pair_gradient(model, first, second, genuine, margin, masks);
  if (options.corrupt) options.corrupt(analytic);

  std::vector<std::pair<std::string, Eigen::MatrixXd>> analytic_tensors;
  for_each_trainable(analytic, [&](const char* name, TensorRef t) { analytic_tensors.emplace_back(name, t); });

  GradCheckResult result;
  ModelParams probe = model;
  std::size_t k = 0;
  for_each_trainable(probe, [&](const char* name, TensorRef t) {
    const Eigen::MatrixXd& a = analytic_tensors[k++].second;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      double& w = t.data()[i];
      const double saved = w;
      w = saved + options.step;
      const double up = pair_loss(probe, first, second, genuine, margin, masks);
      w = saved - options.step;
      const double down = pair_loss(probe, first, second, genuine, margin, masks);
      w = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double an = a.data()[i];
      const double denom = std::max({std::abs(an), std::abs(numeric), options.relative_floor});
      const double err = std::abs(an - numeric) / denom;
      ++result.parameters_checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_tensor = name;
        result.worst_index = i;
        result.analytic_at_worst = an;
        result.numeric_at_worst = numeric;
      }
    }
  });
  return result;
}

}  // namespace swipeauth::seqnet
