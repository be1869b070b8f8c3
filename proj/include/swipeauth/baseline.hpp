#pragma once

// Global-feature baseline: 29 per-swipe statistics and a per-user binary
// SVM with Gaussian kernel, solved by sequential minimal optimization.
// The feature table is documented in docs/global_features.md.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/dataio.hpp"
#include "swipeauth/error.hpp"
#include "swipeauth/touch.hpp"
#include "swipeauth/verify.hpp"

namespace swipeauth::baseline {

inline constexpr std::size_t kGlobalFeatureCount = 29;
using GlobalFeatureVector = std::array<double, kGlobalFeatureCount>;

enum GlobalFeature : std::size_t {
  kDuration = 0,
  kPathLength,
  kEndToEnd,
  kStraightness,
  kMeanStepDistance,
  kStartX,
  kStartY,
  kEndX,
  kEndY,
  kMeanVx,
  kMaxVx,
  kMinVx,
  kMeanVy,
  kMaxVy,
  kMinVy,
  kMeanSpeed,
  kMaxSpeed,
  kMinSpeed,
  kMeanAx,
  kMeanAy,
  kMeanAccel,
  kMaxAccel,
  kMaxAbsAx,
  kMaxAbsAy,
  kMeanPressure,
  kMaxPressure,
  kMeanDirection,
  kDirectionSpread,
  kNetDirection,
};

inline constexpr std::array<const char*, kGlobalFeatureCount> kGlobalFeatureNames = {
    "duration",       "path_length",   "end_to_end",     "straightness",     "mean_step_distance",
    "start_x",        "start_y",       "end_x",          "end_y",            "mean_vx",
    "max_vx",         "min_vx",        "mean_vy",        "max_vy",           "min_vy",
    "mean_speed",     "max_speed",     "min_speed",      "mean_ax",          "mean_ay",
    "mean_accel",     "max_accel",     "max_abs_ax",     "max_abs_ay",       "mean_pressure",
    "max_pressure",   "mean_direction", "direction_spread", "net_direction",
};

namespace detail {

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Global features of a normalized swipe.
inline GlobalFeatureVector global_features(const TouchSequence& seq) {
  validate_sequence(seq);
  const std::size_t n = seq.size();
  const auto& s = seq.samples;
  const Derivatives d = derivatives(seq);

  GlobalFeatureVector f{};
  f[kDuration] = s.back().t - s.front().t;

  double path = 0.0;
  double sum_sin = 0.0;
  double sum_cos = 0.0;
  std::size_t moving_steps = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const double dx = s[i].x - s[i - 1].x;
    const double dy = s[i].y - s[i - 1].y;
    const double step = std::hypot(dx, dy);
    path += step;
    if (step > 0.0) {
      sum_cos += dx / step;
      sum_sin += dy / step;
      ++moving_steps;
    }
  }
  f[kPathLength] = path;
  f[kEndToEnd] = std::hypot(s.back().x - s.front().x, s.back().y - s.front().y);
  f[kStraightness] = path > 0.0 ? f[kEndToEnd] / path : 1.0;
  f[kMeanStepDistance] = path / static_cast<double>(n - 1);
  f[kStartX] = s.front().x;
  f[kStartY] = s.front().y;
  f[kEndX] = s.back().x;
  f[kEndY] = s.back().y;

  std::vector<double> speed(n), accel(n), pressure(n);
  for (std::size_t i = 0; i < n; ++i) {
    speed[i] = std::hypot(d.vx[i], d.vy[i]);
    accel[i] = std::hypot(d.ax[i], d.ay[i]);
    pressure[i] = s[i].p;
  }
  auto max_of = [](std::span<const double> v) { return *std::max_element(v.begin(), v.end()); };
  auto min_of = [](std::span<const double> v) { return *std::min_element(v.begin(), v.end()); };
  auto max_abs = [](std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  f[kMeanVx] = detail::mean_of(d.vx);
  f[kMaxVx] = max_of(d.vx);
  f[kMinVx] = min_of(d.vx);
  f[kMeanVy] = detail::mean_of(d.vy);
  f[kMaxVy] = max_of(d.vy);
  f[kMinVy] = min_of(d.vy);
  f[kMeanSpeed] = detail::mean_of(speed);
  f[kMaxSpeed] = max_of(speed);
  f[kMinSpeed] = min_of(speed);
  f[kMeanAx] = detail::mean_of(d.ax);
  f[kMeanAy] = detail::mean_of(d.ay);
  f[kMeanAccel] = detail::mean_of(accel);
  f[kMaxAccel] = max_of(accel);
  f[kMaxAbsAx] = max_abs(d.ax);
  f[kMaxAbsAy] = max_abs(d.ay);
  f[kMeanPressure] = detail::mean_of(pressure);
  f[kMaxPressure] = max_of(pressure);

  // circular statistics of the per-step heading
  if (moving_steps > 0) {
    f[kMeanDirection] = std::atan2(sum_sin, sum_cos);
    const double resultant = std::min(1.0, std::hypot(sum_sin, sum_cos) / static_cast<double>(moving_steps));
    f[kDirectionSpread] = resultant > 0.0 ? std::sqrt(-2.0 * std::log(resultant)) : 0.0;
  }
  f[kNetDirection] = std::atan2(s.back().y - s.front().y, s.back().x - s.front().x);

  for (double v : f) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NumericFailure, "non-finite global feature");
  }
  return f;
}

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  if (a.size() != b.size()) throw Error(ErrorKind::Contract, "rbf_kernel: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    d2 += diff * diff;
  }
  return std::exp(-gamma * d2);
}

// ---------------------------------------------------------------------------
// SMO

struct SmoOptions {
  double tolerance = 1e-3;
  long max_iterations = 1'000'000;
};

struct SmoSolution {
  Eigen::VectorXd alpha;
  double bias = 0.0;  // decision f(x) = sum alpha_i y_i K(x_i, x) + bias
  long iterations = 0;
  double gap = 0.0;  // final maximal violating-pair gap
};

/// Soft-margin dual with labels +-1 and box [0, C]. Working-set selection
/// uses second-order information (maximal violating pair refined by the
/// predicted objective decrease). Stops when the violating-pair gap drops
/// below the tolerance.
inline SmoSolution smo_solve(const Eigen::MatrixXd& K, std::span<const int> y, double C,
                             const SmoOptions& options = {}) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (K.rows() != n || K.cols() != n) throw Error(ErrorKind::Contract, "smo: kernel/label size mismatch");
  if (!(C > 0.0)) throw Error(ErrorKind::Configuration, "smo: C must be positive");
  bool has_pos = false, has_neg = false;
  for (int label : y) {
    if (label == 1) has_pos = true;
    else if (label == -1) has_neg = true;
    else throw Error(ErrorKind::Contract, "smo: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw Error(ErrorKind::Configuration, "smo: need samples of both classes");

  constexpr double kTau = 1e-12;
  auto yy = [&](Eigen::Index i) { return static_cast<double>(y[static_cast<std::size_t>(i)]); };
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);  // Q alpha - e
  auto is_upper = [&](Eigen::Index t) { return alpha(t) >= C; };
  auto is_lower = [&](Eigen::Index t) { return alpha(t) <= 0.0; };
  auto in_up = [&](Eigen::Index t) { return yy(t) > 0 ? !is_upper(t) : !is_lower(t); };
  auto in_low = [&](Eigen::Index t) { return yy(t) > 0 ? !is_lower(t) : !is_upper(t); };

  SmoSolution sol;
  for (;;) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (in_up(t) && -yy(t) * grad(t) >= gmax) {
        gmax = -yy(t) * grad(t);
        i = t;
      }
    }
    double gmin = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double f = -yy(t) * grad(t);
      gmin = std::min(gmin, f);
      if (i >= 0 && f < gmax) {
        const double b = gmax - f;
        double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
        if (a <= 0.0) a = kTau;
        const double obj = -(b * b) / a;
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    sol.gap = gmax - gmin;
    if (i < 0 || j < 0 || sol.gap < options.tolerance) break;
    if (sol.iterations >= options.max_iterations) {
      throw Error(ErrorKind::Convergence, "smo did not converge; residual violation " + std::to_string(sol.gap));
    }
    ++sol.iterations;

    const double yi = yy(i), yj = yy(j);
    const double old_ai = alpha(i), old_aj = alpha(j);
    const double Qij = yi * yj * K(i, j);
    if (yi != yj) {
      double quad = K(i, i) + K(j, j) + 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0.0) {
        if (alpha(j) < 0.0) {
          alpha(j) = 0.0;
          alpha(i) = diff;
        }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0;
        alpha(j) = -diff;
      }
      if (diff > 0.0) {
        if (alpha(i) > C) {
          alpha(i) = C;
          alpha(j) = C - diff;
        }
      } else if (alpha(j) > C) {
        alpha(j) = C;
        alpha(i) = C + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * Qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > C) {
        if (alpha(i) > C) {
          alpha(i) = C;
          alpha(j) = sum - C;
        }
      } else if (alpha(j) < 0.0) {
        alpha(j) = 0.0;
        alpha(i) = sum;
      }
      if (sum > C) {
        if (alpha(j) > C) {
          alpha(j) = C;
          alpha(i) = sum - C;
        }
      } else if (alpha(i) < 0.0) {
        alpha(i) = 0.0;
        alpha(j) = sum;
      }
    }
    const double dai = alpha(i) - old_ai;
    const double daj = alpha(j) - old_aj;
    for (Eigen::Index t = 0; t < n; ++t) {
      grad(t) += yy(t) * (yi * K(t, i) * dai + yj * K(t, j) * daj);
    }
  }

  // bias from free multipliers, or the midpoint of the feasible interval
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int free_count = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yg = yy(t) * grad(t);
    if (is_upper(t)) {
      if (yy(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (yy(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / free_count : (ub + lb) / 2.0;
  sol.alpha = std::move(alpha);
  sol.bias = -rho;
  return sol;
}

/// Largest per-point KKT violation of a solution:
/// alpha = 0 needs y f >= 1, 0 < alpha < C needs y f = 1, alpha = C needs y f <= 1.
inline double max_kkt_violation(const SmoSolution& sol, const Eigen::MatrixXd& K, std::span<const int> y, double C) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    double f = sol.bias;
    for (Eigen::Index j = 0; j < K.cols(); ++j) f += sol.alpha(j) * y[static_cast<std::size_t>(j)] * K(i, j);
    const double margin = y[static_cast<std::size_t>(i)] * f;
    double v = 0.0;
    if (sol.alpha(i) <= 0.0) v = std::max(0.0, 1.0 - margin);
    else if (sol.alpha(i) >= C) v = std::max(0.0, margin - 1.0);
    else v = std::abs(margin - 1.0);
    worst = std::max(worst, v);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// per-user SVM

struct SvmModel {
  std::vector<std::vector<double>> support_vectors;  // standardized
  std::vector<double> dual_coef;                     // alpha_i * y_i
  double bias = 0.0;
  double gamma = 1.0 / static_cast<double>(kGlobalFeatureCount);
  double C = 10.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;

  std::vector<double> standardize(std::span<const double> x) const {
    std::vector<double> z(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) z[k] = (x[k] - feature_mean[k]) / feature_std[k];
    return z;
  }

  /// Decision value on a raw (unstandardized) vector; positive means genuine.
  double decision(std::span<const double> x) const {
    const auto z = standardize(x);
    double f = bias;
    for (std::size_t i = 0; i < support_vectors.size(); ++i) f += dual_coef[i] * rbf_kernel(support_vectors[i], z, gamma);
    return f;
  }
};

struct SvmParams {
  double C = 10.0;
  double gamma = 1.0 / static_cast<double>(kGlobalFeatureCount);
  SmoOptions smo;
};

struct SvmTraining {
  SvmModel model;
  SmoSolution solution;
  Eigen::MatrixXd kernel;
  std::vector<int> labels;
};

/// Trains genuine (+1) versus impostor (-1) on standardized features and
/// keeps the full solver state for inspection.
inline SvmTraining train_svm_detailed(std::span<const std::vector<double>> genuine,
                                      std::span<const std::vector<double>> impostors, const SvmParams& params) {
  if (genuine.empty() || impostors.empty()) {
    throw Error(ErrorKind::Configuration, "svm needs at least one genuine and one impostor sample");
  }
  const std::size_t dim = genuine.front().size();
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (const auto& g : genuine) {
    rows.push_back(g);
    labels.push_back(1);
  }
  for (const auto& s : impostors) {
    rows.push_back(s);
    labels.push_back(-1);
  }
  for (const auto& r : rows) {
    if (r.size() != dim) throw Error(ErrorKind::Contract, "svm: ragged feature vectors");
  }

  SvmTraining out;
  SvmModel& m = out.model;
  m.C = params.C;
  m.gamma = params.gamma;
  m.feature_mean.assign(dim, 0.0);
  m.feature_std.assign(dim, 0.0);
  const double count = static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t k = 0; k < dim; ++k) m.feature_mean[k] += r[k] / count;
  for (const auto& r : rows)
    for (std::size_t k = 0; k < dim; ++k) m.feature_std[k] += (r[k] - m.feature_mean[k]) * (r[k] - m.feature_mean[k]);
  for (auto& s : m.feature_std) {
    s = std::sqrt(s / count);
    if (s < 1e-12) s = 1.0;
  }
  std::vector<std::vector<double>> z;
  z.reserve(rows.size());
  for (const auto& r : rows) z.push_back(m.standardize(r));

  const auto n = static_cast<Eigen::Index>(z.size());
  out.kernel.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.kernel(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out.kernel(i, j) = out.kernel(j, i) =
          rbf_kernel(z[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)], m.gamma);
    }
  }
  out.solution = smo_solve(out.kernel, labels, params.C, params.smo);
  out.labels = labels;
  m.bias = out.solution.bias;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.solution.alpha(i) > 0.0) {
      m.support_vectors.push_back(z[static_cast<std::size_t>(i)]);
      m.dual_coef.push_back(out.solution.alpha(i) * labels[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

inline SvmModel train_user_svm(std::span<const std::vector<double>> genuine,
                               std::span<const std::vector<double>> impostors, double C, double gamma) {
  return train_svm_detailed(genuine, impostors, {C, gamma, {}}).model;
}

/// Negated decision value so that lower means more genuine, like distances.
inline double svm_score(const SvmModel& model, std::span<const double> probe) { return -model.decision(probe); }

inline std::vector<double> to_vector(const GlobalFeatureVector& f) { return {f.begin(), f.end()}; }

/// Protocol scorer: one SVM per (user, G) trained on exactly the G gallery
/// swipes against a fixed impostor pool from training-split users.
struct SvmScorer {
  using Probe = std::vector<double>;
  using UserModel = SvmModel;
  std::vector<std::vector<double>> impostor_pool;
  SvmParams params;

  Probe prepare(const TouchSequence& seq) const { return to_vector(global_features(normalize_sequence(seq))); }
  UserModel enroll(const std::string&, std::span<const Probe> gallery) const {
    return train_svm_detailed(gallery, impostor_pool, params).model;
  }
  double score(const UserModel& m, const Probe& p) const { return svm_score(m, p); }
};

inline std::vector<std::vector<double>> feature_pool(const Dataset& ds) {
  std::vector<std::vector<double>> pool;
  for (const auto& uid : ds.user_ids()) {
    for (const auto& entry : chronological_swipes(ds, uid)) {
      pool.push_back(to_vector(global_features(normalize_sequence(*entry.sequence))));
    }
  }
  return pool;
}

}  // namespace swipeauth::baseline
