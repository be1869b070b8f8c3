#pragma once

// Siamese training: both branches share one ModelParams; each batch is a
// balanced set of genuine and impostor pairs.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/error.hpp"
#include "swipeauth/seqnet/adam.hpp"
#include "swipeauth/seqnet/loss.hpp"
#include "swipeauth/seqnet/network.hpp"
#include "swipeauth/seqnet/params.hpp"

namespace swipeauth::seqnet {

/// Training swipes grouped by user; each entry is one feature matrix (In x T).
using UserSwipes = std::vector<std::vector<Eigen::MatrixXd>>;

struct SwipeRef {
  std::size_t user = 0;
  std::size_t swipe = 0;
  bool operator==(const SwipeRef&) const = default;
};

struct TrainingPair {
  SwipeRef first;
  SwipeRef second;
  bool genuine = false;
};

/// Draws balanced batches: every pair is sampled uniformly and independently.
class PairSampler {
 public:
  explicit PairSampler(const UserSwipes& users) : users_(users) {
    for (std::size_t u = 0; u < users.size(); ++u) {
      if (users[u].size() >= 2) genuine_users_.push_back(u);
    }
    std::size_t non_empty = 0;
    for (const auto& u : users) non_empty += u.empty() ? 0 : 1;
    if (genuine_users_.size() < 2 || non_empty != users.size()) {
      throw Error(ErrorKind::Configuration,
                  "training split needs at least 2 users with at least 2 swipes each and no empty users");
    }
  }

  std::vector<TrainingPair> sample(int batch_size, std::mt19937_64& rng) const {
    if (batch_size <= 0 || batch_size % 2 != 0) {
      throw Error(ErrorKind::Configuration, "batch size must be positive and even");
    }
    std::vector<TrainingPair> pairs;
    pairs.reserve(static_cast<std::size_t>(batch_size));
    const int half = batch_size / 2;
    std::uniform_int_distribution<std::size_t> pick_genuine_user(0, genuine_users_.size() - 1);
    for (int k = 0; k < half; ++k) {
      const std::size_t u = genuine_users_[pick_genuine_user(rng)];
      const std::size_t n = users_[u].size();
      std::uniform_int_distribution<std::size_t> first(0, n - 1);
      std::uniform_int_distribution<std::size_t> other(0, n - 2);
      const std::size_t a = first(rng);
      std::size_t b = other(rng);
      if (b >= a) ++b;
      pairs.push_back({{u, a}, {u, b}, true});
    }
    std::uniform_int_distribution<std::size_t> pick_user(0, users_.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, users_.size() - 2);
    for (int k = 0; k < half; ++k) {
      const std::size_t u1 = pick_user(rng);
      std::size_t u2 = pick_other(rng);
      if (u2 >= u1) ++u2;
      std::uniform_int_distribution<std::size_t> s1(0, users_[u1].size() - 1);
      std::uniform_int_distribution<std::size_t> s2(0, users_[u2].size() - 1);
      const std::size_t a = s1(rng);
      const std::size_t b = s2(rng);
      pairs.push_back({{u1, a}, {u2, b}, false});
    }
    return pairs;
  }

 private:
  const UserSwipes& users_;
  std::vector<std::size_t> genuine_users_;
};

/// Mean contrastive loss of a batch of pairs whose embeddings are stored
/// as columns 2k (first) and 2k+1 (second). Fills dLoss/dEmbedding if asked.
inline double pair_batch_loss(const Eigen::MatrixXd& embeddings, std::span<const TrainingPair> pairs, double margin,
                              Eigen::MatrixXd* d_embeddings = nullptr) {
  const double inv = 1.0 / static_cast<double>(pairs.size());
  if (d_embeddings) d_embeddings->setZero(embeddings.rows(), embeddings.cols());
  double total = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(2 * k);
    const Eigen::VectorXd e1 = embeddings.col(a);
    const Eigen::VectorXd e2 = embeddings.col(a + 1);
    total += contrastive_loss(e1, e2, pairs[k].genuine, margin);
    if (d_embeddings) {
      const Eigen::VectorXd g = contrastive_loss_grad(e1, e2, pairs[k].genuine, margin) * inv;
      d_embeddings->col(a) += g;
      d_embeddings->col(a + 1) -= g;
    }
  }
  return total * inv;
}

struct TrainResult {
  ModelParams params;
  std::vector<double> batch_losses;  // one per optimizer step, in order

  double mean_epoch_loss(int epoch, int batches_per_epoch) const {
    double s = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      s += batch_losses[static_cast<std::size_t>(epoch * batches_per_epoch + b)];
    }
    return s / batches_per_epoch;
  }
};

using BatchObserver = std::function<void(int epoch, int batch, double loss)>;

/// Trains from `initial` on the grouped swipes. Deterministic given
/// `config.seed`: pair sampling and dropout masks share one seeded stream and
/// all reductions run in a fixed order.
inline TrainResult train(const UserSwipes& users, const TrainConfig& config, ModelParams initial,
                         const BatchObserver& observer = {}) {
  config.validate();
  PairSampler sampler(users);
  for (const auto& u : users) {
    for (const auto& s : u) {
      if (s.rows() != initial.input_size() || s.cols() != users.front().front().cols()) {
        throw Error(ErrorKind::Configuration, "training swipes must share one feature shape");
      }
    }
  }

  std::mt19937_64 rng(config.seed ^ 0x5eed'0f'5a1a'3e5eULL);
  Adam adam(AdamHyper::from(config));
  TrainResult result{std::move(initial), {}};
  ModelParams& model = result.params;
  const int steps = static_cast<int>(users.front().front().cols());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int batch = 0; batch < config.batches_per_epoch; ++batch) {
      const auto pairs = sampler.sample(config.batch_size, rng);
      std::vector<const Eigen::MatrixXd*> members;
      members.reserve(pairs.size() * 2);
      for (const auto& p : pairs) {
        members.push_back(&users[p.first.user][p.first.swipe]);
        members.push_back(&users[p.second.user][p.second.swipe]);
      }
      const int B = static_cast<int>(members.size());
      DropoutMasks masks = sample_masks(model, B, steps, config.dropout, config.recurrent_dropout, rng);

      ForwardCache cache;
      const Eigen::MatrixXd emb = forward(model, pack_batch(members), B, Mode::Train, std::move(masks), &cache);
      Eigen::MatrixXd d_emb;
      const double loss = pair_batch_loss(emb, pairs, config.margin, &d_emb);

      ModelGrads grads = ModelGrads::zeros_like(model);
      backward(model, cache, d_emb, grads);
      adam.step(model, grads);
      update_running_stats(model.norm, cache);
      if (!all_finite(model)) throw Error(ErrorKind::NumericFailure, "parameters became non-finite during training");

      result.batch_losses.push_back(loss);
      if (observer) observer(epoch, batch, loss);
    }
  }
  return result;
}

inline TrainResult train(const UserSwipes& users, const TrainConfig& config, int hidden = 64,
                         const BatchObserver& observer = {}) {
  if (users.empty() || users.front().empty()) throw Error(ErrorKind::Configuration, "empty training split");
  return train(users, config, init_model(static_cast<int>(users.front().front().rows()), hidden, config.seed),
               observer);
}

}  // namespace swipeauth::seqnet
