#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace swipeauth::seqnet {

/// Pair loss on Euclidean distance d: d^2 for genuine pairs,
/// max(0, margin - d)^2 for impostor pairs.
inline double contrastive_loss(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2, bool genuine, double margin) {
  const double d = (e1 - e2).norm();
  if (genuine) return d * d;
  const double gap = std::max(0.0, margin - d);
  return gap * gap;
}

/// dLoss/de1; dLoss/de2 is its negation. At d = 0 the impostor branch is
/// not differentiable and the zero subgradient is returned.
inline Eigen::VectorXd contrastive_loss_grad(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2, bool genuine,
                                             double margin) {
  const Eigen::VectorXd diff = e1 - e2;
  if (genuine) return 2.0 * diff;
  const double d = diff.norm();
  if (d >= margin || d == 0.0) return Eigen::VectorXd::Zero(diff.size());
  return (-2.0 * (margin - d) / d) * diff;
}

}  // namespace swipeauth::seqnet
