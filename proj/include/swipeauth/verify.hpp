#pragma once

// Enrollment, gallery scoring, threshold decisions, EER and the open-set
// evaluation protocol. Scores are distances: lower means more genuine.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "swipeauth/dataio.hpp"
#include "swipeauth/error.hpp"
#include "swipeauth/seqnet/network.hpp"
#include "swipeauth/textio.hpp"
#include "swipeauth/touch.hpp"

namespace swipeauth {

using seqnet::Embedding;

struct Gallery {
  std::string user_id;
  std::vector<Embedding> embeddings;

  std::size_t size() const { return embeddings.size(); }
};

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;

  void merge(const ScoreSet& other) {
    genuine.insert(genuine.end(), other.genuine.begin(), other.genuine.end());
    impostor.insert(impostor.end(), other.impostor.begin(), other.impostor.end());
  }
};

inline Gallery enroll(const std::string& user_id, std::span<const FeatureMatrix> swipes,
                      const seqnet::ModelParams& model) {
  if (swipes.empty()) throw Error(ErrorKind::Enrollment, "cannot enroll " + user_id + " without swipes");
  Gallery g{user_id, {}};
  g.embeddings.reserve(swipes.size());
  for (const auto& s : swipes) g.embeddings.push_back(seqnet::embed(model, s));
  return g;
}

/// Mean Euclidean distance from the probe to every gallery embedding.
inline double score(const Gallery& gallery, const Embedding& probe) {
  if (gallery.embeddings.empty()) throw Error(ErrorKind::Enrollment, "empty gallery for " + gallery.user_id);
  double total = 0.0;
  for (const auto& e : gallery.embeddings) {
    if (e.size() != probe.size()) throw Error(ErrorKind::Contract, "embedding size mismatch");
    total += (e - probe).norm();
  }
  return total / static_cast<double>(gallery.embeddings.size());
}

struct Decision {
  bool accept = false;
  double score = 0.0;
};

/// Accepts when score <= threshold (inclusive boundary).
inline Decision verify(const Gallery& gallery, const Embedding& probe, double threshold) {
  if (threshold < 0.0) throw Error(ErrorKind::Contract, "threshold must be non-negative");
  const double s = score(gallery, probe);
  return {s <= threshold, s};
}

// ---------------------------------------------------------------------------
// EER

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// Candidate thresholds: one below the minimum (min - 1), every midpoint
/// between adjacent distinct scores, and one above the maximum (max + 1).
/// FAR(t) = share of impostors <= t, FRR(t) = share of genuines > t. Picks
/// the smallest threshold minimizing |FAR - FRR|; EER = (FAR + FRR) / 2.
inline EerResult compute_eer(const ScoreSet& scores) {
  if (scores.genuine.empty() || scores.impostor.empty()) {
    throw Error(ErrorKind::Protocol, "EER needs both genuine and impostor scores");
  }
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.impostor;
  for (double v : gen)
    if (!std::isfinite(v)) throw Error(ErrorKind::Protocol, "non-finite genuine score");
  for (double v : imp)
    if (!std::isfinite(v)) throw Error(ErrorKind::Protocol, "non-finite impostor score");
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> all;
  all.reserve(gen.size() + imp.size());
  std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(), std::back_inserter(all));
  all.erase(std::unique(all.begin(), all.end()), all.end());

  const double n_gen = static_cast<double>(gen.size());
  const double n_imp = static_cast<double>(imp.size());
  EerResult best;
  double best_gap = 2.0;
  std::size_t gi = 0;  // genuine scores <= threshold
  std::size_t ii = 0;  // impostor scores <= threshold
  auto consider = [&](double threshold) {
    while (gi < gen.size() && gen[gi] <= threshold) ++gi;
    while (ii < imp.size() && imp[ii] <= threshold) ++ii;
    const double far = static_cast<double>(ii) / n_imp;
    const double frr = static_cast<double>(gen.size() - gi) / n_gen;
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = {(far + frr) / 2.0, threshold, far, frr};
    }
  };
  consider(all.front() - 1.0);
  for (std::size_t k = 0; k + 1 < all.size(); ++k) consider((all[k] + all[k + 1]) / 2.0);
  consider(all.back() + 1.0);
  return best;
}

// ---------------------------------------------------------------------------
// score dump

struct ScoreRow {
  std::string user_id;   // claimed identity
  std::string probe_id;  // user/session/index of the probe swipe
  int gallery_size = 0;
  double score = 0.0;
  bool genuine = false;

  bool operator==(const ScoreRow&) const = default;
};

inline constexpr const char* kScoreDumpHeader = "user_id,probe_id,G,score,genuine";

inline std::string format_score_dump(std::span<const ScoreRow> rows) {
  std::ostringstream out;
  out << kScoreDumpHeader << '\n';
  for (const auto& r : rows) {
    out << r.user_id << ',' << r.probe_id << ',' << r.gallery_size << ',' << textio::format_double(r.score) << ','
        << (r.genuine ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::vector<ScoreRow> parse_score_dump(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || textio::trim(line) != kScoreDumpHeader) {
    throw Error(ErrorKind::Schema, "score dump: bad header");
  }
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    const auto view = textio::trim(line);
    if (view.empty()) continue;
    const auto f = textio::split(view, ',');
    if (f.size() != 5) throw Error(ErrorKind::Schema, "score dump: expected 5 fields");
    const int flag = textio::parse_int<int>(f[4]);
    if (flag != 0 && flag != 1) throw Error(ErrorKind::Schema, "score dump: genuine flag must be 0 or 1");
    rows.push_back({std::string(f[0]), std::string(f[1]), textio::parse_int<int>(f[2]), textio::parse_double(f[3]),
                    flag == 1});
  }
  return rows;
}

/// Groups dump rows into one ScoreSet per gallery size.
inline std::map<int, ScoreSet> score_sets_from_rows(std::span<const ScoreRow> rows) {
  std::map<int, ScoreSet> sets;
  for (const auto& r : rows) {
    auto& s = sets[r.gallery_size];
    (r.genuine ? s.genuine : s.impostor).push_back(r.score);
  }
  return sets;
}

// ---------------------------------------------------------------------------
// open-set protocol

/// A scorer turns swipes into probes, galleries into per-user models, and
/// scores probes against models (lower = more genuine).
template <typename S>
concept ProtocolScorer = requires(S s, const TouchSequence& seq, std::span<const typename S::Probe> gallery,
                                  const std::string& user, const typename S::UserModel& m,
                                  const typename S::Probe& p) {
  { s.prepare(seq) } -> std::convertible_to<typename S::Probe>;
  { s.enroll(user, gallery) } -> std::convertible_to<typename S::UserModel>;
  { s.score(m, p) } -> std::convertible_to<double>;
};

/// Embedding scorer: gallery mean distance.
struct EmbeddingScorer {
  using Probe = Embedding;
  using UserModel = Gallery;
  const seqnet::ModelParams& model;

  Probe prepare(const TouchSequence& seq) const { return seqnet::embed(model, featurize(seq)); }
  UserModel enroll(const std::string& user, std::span<const Probe> gallery) const {
    return {user, {gallery.begin(), gallery.end()}};
  }
  double score(const UserModel& g, const Probe& p) const { return swipeauth::score(g, p); }
};

struct ProtocolResult {
  std::map<int, ScoreSet> scores;
  std::map<int, EerResult> eer;
  std::vector<ScoreRow> rows;
  // gallery probe ids per G and user
  std::map<int, std::map<std::string, std::vector<std::string>>> galleries;
  std::vector<std::string> skipped;
};

/// For each G and test user: the first G chronological swipes form the
/// gallery, the user's remaining swipes are genuine probes and every swipe
/// of every other test user is an impostor probe. Users with <= G swipes
/// are skipped for that G.
template <ProtocolScorer Scorer>
ProtocolResult evaluate_protocol(const Dataset& test, std::span<const int> gallery_sizes, Scorer& scorer) {
  if (gallery_sizes.empty()) throw Error(ErrorKind::Protocol, "no gallery sizes requested");
  for (int g : gallery_sizes)
    if (g < 1) throw Error(ErrorKind::Protocol, "gallery size must be >= 1");

  struct UserProbes {
    std::string user;
    std::vector<std::string> ids;
    std::vector<typename Scorer::Probe> probes;
  };
  std::vector<UserProbes> users;
  for (const auto& uid : test.user_ids()) {
    UserProbes up{uid, {}, {}};
    for (const auto& entry : chronological_swipes(test, uid)) {
      up.ids.push_back(entry.probe_id);
      up.probes.push_back(scorer.prepare(*entry.sequence));
    }
    users.push_back(std::move(up));
  }

  ProtocolResult result;
  for (int G : gallery_sizes) {
    const auto g = static_cast<std::size_t>(G);
    ScoreSet set;
    auto& galleries = result.galleries[G];
    for (const auto& claimed : users) {
      if (claimed.probes.size() <= g) {
        result.skipped.push_back("G=" + std::to_string(G) + ": user " + claimed.user + " has only " +
                                 std::to_string(claimed.probes.size()) + " swipes");
        continue;
      }
      galleries[claimed.user] = {claimed.ids.begin(), claimed.ids.begin() + G};
      const auto model =
          scorer.enroll(claimed.user, std::span<const typename Scorer::Probe>(claimed.probes.data(), g));
      for (std::size_t k = g; k < claimed.probes.size(); ++k) {
        const double s = scorer.score(model, claimed.probes[k]);
        set.genuine.push_back(s);
        result.rows.push_back({claimed.user, claimed.ids[k], G, s, true});
      }
      for (const auto& other : users) {
        if (other.user == claimed.user) continue;
        for (std::size_t k = 0; k < other.probes.size(); ++k) {
          const double s = scorer.score(model, other.probes[k]);
          set.impostor.push_back(s);
          result.rows.push_back({claimed.user, other.ids[k], G, s, false});
        }
      }
    }
    if (set.genuine.empty() || set.impostor.empty()) {
      throw Error(ErrorKind::Protocol, "no test user qualifies for G=" + std::to_string(G));
    }
    result.eer[G] = compute_eer(set);
    result.scores[G] = std::move(set);
  }
  return result;
}

/// Refuses evaluation when any evaluated user was seen in training.
inline void ensure_open_set(std::span<const std::string> train_users, const Dataset& test) {
  const std::set<std::string> seen(train_users.begin(), train_users.end());
  for (const auto& uid : test.user_ids()) {
    if (seen.contains(uid)) {
      throw Error(ErrorKind::OpenSetViolation, "test user " + uid + " was part of the training split");
    }
  }
}

// ---------------------------------------------------------------------------
// gallery files

inline constexpr const char* kGalleryMagic = "swipeauth-gallery";

inline std::string format_gallery(const Gallery& g) {
  std::ostringstream out;
  out << kGalleryMagic << " 1\n";
  out << "user_id " << g.user_id << '\n';
  out << "dim " << (g.embeddings.empty() ? 0 : g.embeddings.front().size()) << '\n';
  out << "count " << g.embeddings.size() << '\n';
  for (const auto& e : g.embeddings) {
    for (Eigen::Index k = 0; k < e.size(); ++k) out << (k ? " " : "") << textio::format_double(e(k));
    out << '\n';
  }
  return out.str();
}

inline Gallery parse_gallery(const std::string& text) {
  std::istringstream in(text);
  std::string word, v;
  int format = 0;
  Gallery g;
  Eigen::Index dim = 0;
  std::size_t count = 0;
  if (!(in >> word >> format) || word != kGalleryMagic || format != 1) throw Error(ErrorKind::Schema, "gallery: bad header");
  if (!(in >> word >> g.user_id) || word != "user_id") throw Error(ErrorKind::Schema, "gallery: missing user_id");
  if (!(in >> word >> dim) || word != "dim") throw Error(ErrorKind::Schema, "gallery: missing dim");
  if (!(in >> word >> count) || word != "count") throw Error(ErrorKind::Schema, "gallery: missing count");
  for (std::size_t i = 0; i < count; ++i) {
    Embedding e(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      if (!(in >> v)) throw Error(ErrorKind::Schema, "gallery: truncated");
      e(k) = textio::parse_double(v);
    }
    g.embeddings.push_back(std::move(e));
  }
  return g;
}

}  // namespace swipeauth
