#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "swipeauth/verify.hpp"

namespace swipeauth {
namespace {

Embedding vec(std::initializer_list<double> v) {
  Embedding e(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) e(i++) = x;
  return e;
}

// Brute force over every candidate threshold, counting from scratch each time.
EerResult brute_force_eer(const ScoreSet& s) {
  std::vector<double> all = s.genuine;
  all.insert(all.end(), s.impostor.begin(), s.impostor.end());
  std::set<double> distinct(all.begin(), all.end());
  std::vector<double> d(distinct.begin(), distinct.end());
  std::vector<double> cands{d.front() - 1.0};
  for (std::size_t k = 0; k + 1 < d.size(); ++k) cands.push_back((d[k] + d[k + 1]) / 2.0);
  cands.push_back(d.back() + 1.0);
  EerResult best;
  double gap = 1e9;
  for (double t : cands) {
    double fa = 0, fr = 0;
    for (double v : s.impostor) fa += v <= t ? 1 : 0;
    for (double v : s.genuine) fr += v > t ? 1 : 0;
    fa /= static_cast<double>(s.impostor.size());
    fr /= static_cast<double>(s.genuine.size());
    if (std::abs(fa - fr) < gap) {
      gap = std::abs(fa - fr);
      best = {(fa + fr) / 2, t, fa, fr};
    }
  }
  return best;
}

TEST(Enroll, OneEmbeddingPerSwipe) {
  const auto model = seqnet::init_model(kFeatureChannels, 4, 3);
  std::mt19937_64 rng(1);
  std::vector<FeatureMatrix> swipes(3);
  for (auto& f : swipes) {
    f.values.leftCols(20).setRandom();
    f.valid_length = 20;
  }
  const auto g = enroll("alice", swipes, model);
  EXPECT_EQ(g.user_id, "alice");
  ASSERT_EQ(g.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.embeddings[i], seqnet::embed(model, swipes[i]));
  try {
    enroll("bob", std::span<const FeatureMatrix>{}, model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Enrollment);
  }
}

TEST(Score, WorkedExamples) {
  const Gallery same{"u", {vec({1, 2}), vec({1, 2})}};
  EXPECT_EQ(score(same, vec({1, 2})), 0.0);
  const Gallery pair{"u", {vec({0, 0}), vec({2, 0})}};
  EXPECT_DOUBLE_EQ(score(pair, vec({1, 0})), 1.0);
  const Gallery one{"u", {vec({0, 0})}};
  EXPECT_DOUBLE_EQ(score(one, vec({0, 2})), 2.0);
  EXPECT_DOUBLE_EQ(score(one, vec({1, 1})), std::sqrt(2.0));
}

TEST(Score, InvariantToGalleryOrder) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  Gallery g{"u", {}};
  for (int i = 0; i < 6; ++i) g.embeddings.push_back(Embedding::NullaryExpr(8, [&](Eigen::Index) { return n(rng); }));
  const Embedding probe = Embedding::NullaryExpr(8, [&](Eigen::Index) { return n(rng); });
  const double base = score(g, probe);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(g.embeddings.begin(), g.embeddings.end(), rng);
    EXPECT_NEAR(score(g, probe), base, 1e-12);
  }
  EXPECT_GE(base, 0.0);
}

TEST(Verify, BoundaryIsInclusive) {
  const Gallery g{"u", {vec({0, 0})}};
  EXPECT_TRUE(verify(g, vec({3, 4}), 5.0).accept);
  EXPECT_FALSE(verify(g, vec({3, 4}), 4.999).accept);
  EXPECT_EQ(verify(g, vec({3, 4}), 5.0).score, 5.0);
  EXPECT_THROW(verify(g, vec({3, 4}), -1.0), Error);
}

TEST(Eer, WorkedExamples) {
  const auto perfect = compute_eer({{0.1, 0.2, 0.3}, {0.7, 0.8, 0.9}});
  EXPECT_EQ(perfect.eer, 0.0);
  EXPECT_GT(perfect.threshold, 0.3);
  EXPECT_LT(perfect.threshold, 0.7);

  const auto chance = compute_eer({{0.5, 0.5}, {0.5, 0.5}});
  EXPECT_DOUBLE_EQ(chance.eer, 0.5);

  const auto third = compute_eer({{0.1, 0.2, 0.6}, {0.4, 0.8, 0.9}});
  EXPECT_NEAR(third.eer, 1.0 / 3.0, 1e-12);
  EXPECT_GT(third.threshold, 0.4);
  EXPECT_LT(third.threshold, 0.6);
}

TEST(Eer, RejectsEmptyOrNonFinite) {
  EXPECT_THROW(compute_eer({{}, {1.0}}), Error);
  EXPECT_THROW(compute_eer({{1.0}, {}}), Error);
  EXPECT_THROW(compute_eer({{NAN}, {1.0}}), Error);
}

TEST(Eer, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<int> count(1, 100);
    // coarse grid forces plenty of ties
    std::uniform_int_distribution<int> grid(0, trial % 2 ? 20 : 100000);
    ScoreSet s;
    for (int i = count(rng); i > 0; --i) s.genuine.push_back(grid(rng) / 17.0);
    for (int i = count(rng); i > 0; --i) s.impostor.push_back(grid(rng) / 13.0);
    const auto got = compute_eer(s);
    const auto want = brute_force_eer(s);
    ASSERT_EQ(got.eer, want.eer) << trial;
    ASSERT_EQ(got.threshold, want.threshold) << trial;
    ASSERT_EQ(got.far, want.far);
    ASSERT_EQ(got.frr, want.frr);
  }
}

// Every swipe of user k maps to the one-hot vector e_k.
struct OneHotScorer {
  using Probe = Embedding;
  using UserModel = Gallery;
  std::map<std::string, int> index;

  Probe prepare(const TouchSequence& seq) {
    const int k = index.try_emplace(seq.user_id, static_cast<int>(index.size())).first->second;
    Embedding e = Embedding::Zero(16);
    e(k) = 1.0;
    return e;
  }
  UserModel enroll(const std::string& user, std::span<const Probe> g) { return {user, {g.begin(), g.end()}}; }
  double score(const UserModel& m, const Probe& p) { return swipeauth::score(m, p); }
};

TEST(Protocol, OneHotEmbeddingsAreSeparable) {
  const auto ds = synth_generate(5, 8, 3);
  OneHotScorer scorer;
  const std::vector<int> gs{1, 3, 6};
  const auto r = evaluate_protocol(ds, gs, scorer);
  for (int G : gs) {
    EXPECT_EQ(r.eer.at(G).eer, 0.0);
    EXPECT_EQ(r.scores.at(G).genuine.size(), 5u * (8u - static_cast<std::size_t>(G)));
    EXPECT_EQ(r.scores.at(G).impostor.size(), 5u * 4u * 8u);
    for (double v : r.scores.at(G).genuine) EXPECT_EQ(v, 0.0);
    for (double v : r.scores.at(G).impostor) EXPECT_DOUBLE_EQ(v, std::sqrt(2.0));
  }
}

TEST(Protocol, GalleriesNestAndProbesShrink) {
  const auto ds = synth_generate(4, 10, 9);
  OneHotScorer scorer;
  const std::vector<int> gs{1, 2, 4, 6};
  const auto r = evaluate_protocol(ds, gs, scorer);
  for (const auto& uid : ds.user_ids()) {
    const auto swipes = chronological_swipes(ds, uid);
    for (std::size_t k = 0; k + 1 < gs.size(); ++k) {
      const auto& small = r.galleries.at(gs[k]).at(uid);
      const auto& big = r.galleries.at(gs[k + 1]).at(uid);
      ASSERT_TRUE(std::equal(small.begin(), small.end(), big.begin()));
    }
    for (int G : gs) {
      const auto& gal = r.galleries.at(G).at(uid);
      for (int i = 0; i < G; ++i) EXPECT_EQ(gal[static_cast<std::size_t>(i)], swipes[static_cast<std::size_t>(i)].probe_id);
      // a gallery swipe is never its own genuine probe
      for (const auto& row : r.rows) {
        if (row.gallery_size == G && row.genuine && row.user_id == uid) {
          EXPECT_EQ(std::find(gal.begin(), gal.end(), row.probe_id), gal.end());
        }
      }
    }
  }
  for (std::size_t k = 0; k + 1 < gs.size(); ++k) {
    EXPECT_GT(r.scores.at(gs[k]).genuine.size(), r.scores.at(gs[k + 1]).genuine.size());
  }
}

TEST(Protocol, SkipsShortUsersAndFailsWhenNoneQualify) {
  const auto ds = synth_generate(3, 4, 2);
  OneHotScorer scorer;
  const std::vector<int> ok{2};
  EXPECT_NO_THROW(evaluate_protocol(ds, ok, scorer));
  const std::vector<int> too_big{4};
  try {
    evaluate_protocol(ds, too_big, scorer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Protocol);
  }
}

TEST(ScoreDump, RoundTripAndReplay) {
  const auto ds = synth_generate(4, 7, 21);
  const auto model = seqnet::init_model(kFeatureChannels, 6, 4);
  EmbeddingScorer scorer{model};
  const std::vector<int> gs{1, 3};
  const auto r = evaluate_protocol(ds, gs, scorer);
  const auto text = format_score_dump(r.rows);
  const auto rows = parse_score_dump(text);
  EXPECT_EQ(rows, r.rows);
  const auto sets = score_sets_from_rows(rows);
  for (int G : gs) {
    const auto replay = compute_eer(sets.at(G));
    EXPECT_EQ(replay.eer, r.eer.at(G).eer);
    EXPECT_EQ(replay.threshold, r.eer.at(G).threshold);
  }
  EXPECT_THROW(parse_score_dump("bad\n"), Error);
  EXPECT_THROW(parse_score_dump(std::string(kScoreDumpHeader) + "\na,b,1,0.5,2\n"), Error);
}

TEST(OpenSet, RefusesOverlap) {
  const auto ds = synth_generate(3, 2, 1);
  const std::vector<std::string> disjoint{"x", "y"};
  EXPECT_NO_THROW(ensure_open_set(disjoint, ds));
  const std::vector<std::string> overlap{"x", ds.user_ids().front()};
  try {
    ensure_open_set(overlap, ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OpenSetViolation);
  }
}

TEST(GalleryFile, RoundTripIsExact) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  Gallery g{"carol", {}};
  for (int i = 0; i < 3; ++i) g.embeddings.push_back(Embedding::NullaryExpr(5, [&](Eigen::Index) { return n(rng); }));
  const auto back = parse_gallery(format_gallery(g));
  EXPECT_EQ(back.user_id, "carol");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.embeddings[i], g.embeddings[i]);
  EXPECT_THROW(parse_gallery("nope"), Error);
}

}  // namespace
}  // namespace swipeauth
