#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "swipeauth/touch.hpp"
#include "test_support.hpp"

namespace swipeauth {
namespace {

TouchSequence line_sequence(const std::vector<double>& x, const std::vector<double>& t, double width = 1.0,
                            double height = 1.0) {
  TouchSequence s;
  s.screen_width = width;
  s.screen_height = height;
  for (std::size_t i = 0; i < x.size(); ++i) s.samples.push_back({x[i], 0.0, 0.5, t[i]});
  return s;
}

TEST(NormalizeSequence, ScalesEndpointsAndMidpoint) {
  auto s = line_sequence({0, 540, 1080}, {0, 1, 2}, 1080, 1920);
  const auto n = normalize_sequence(s);
  EXPECT_EQ(n.samples[0].x, 0.0);
  EXPECT_EQ(n.samples[1].x, 0.5);
  EXPECT_EQ(n.samples[2].x, 1.0);
  EXPECT_EQ(n.screen_width, 1.0);
  EXPECT_EQ(n.screen_height, 1.0);
  EXPECT_EQ(n.samples[1].t, 1.0);
  EXPECT_EQ(n.samples[1].p, 0.5);
}

TEST(NormalizeSequence, ExactDivision) {
  TouchSequence s;
  s.screen_width = 1080;
  s.screen_height = 1920;
  s.samples.push_back({270, 480, 0.1, 3});
  const auto n = normalize_sequence(s);
  EXPECT_EQ(n.samples[0].x, 0.25);
  EXPECT_EQ(n.samples[0].y, 0.25);
}

TEST(NormalizeSequence, UnitScreenIsIdentityAndIdempotent) {
  std::mt19937_64 rng(3);
  auto s = testing::random_swipe(rng, 20);
  const auto once = normalize_sequence(s);
  const auto twice = normalize_sequence(once);
  EXPECT_EQ(once, twice);
}

TEST(NormalizeSequence, RejectsBadScreen) {
  auto s = line_sequence({1, 2, 3}, {0, 1, 2}, 0.0, 10.0);
  try {
    normalize_sequence(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidMetadata);
  }
  s.screen_width = -3;
  EXPECT_THROW(normalize_sequence(s), Error);
}

TEST(Derivatives, ConstantChannelIsStationary) {
  auto s = line_sequence({0.3, 0.3, 0.3, 0.3, 0.3, 0.3}, {0, 7, 9, 20, 21, 40});
  const auto d = derivatives(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(d.vx[i], 0.0);
    EXPECT_EQ(d.ax[i], 0.0);
    EXPECT_EQ(d.jx[i], 0.0);
  }
}

TEST(Derivatives, UniformMotion) {
  auto s = line_sequence({0, 1, 2, 3, 4}, {0, 1, 2, 3, 4});
  const auto d = derivatives(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_DOUBLE_EQ(d.vx[i], 1.0);
    EXPECT_NEAR(d.ax[i], 0.0, 1e-12);
    EXPECT_NEAR(d.jx[i], 0.0, 1e-12);
  }
}

TEST(Derivatives, QuadraticMatchesAnalyticDerivatives) {
  std::vector<double> t{0, 1, 2, 3, 4, 5};
  std::vector<double> x;
  for (double v : t) x.push_back(v * v);
  const auto d = derivatives(line_sequence(x, t));
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    EXPECT_NEAR(d.vx[i], 2.0 * t[i], 1e-9);
    EXPECT_NEAR(d.ax[i], 2.0, 1e-9);
  }
  // three-point one-sided edges are exact for quadratics too
  EXPECT_NEAR(d.vx.front(), 0.0, 1e-9);
  EXPECT_NEAR(d.vx.back(), 10.0, 1e-9);
}

TEST(Derivatives, QuadraticOnNonUniformGrid) {
  std::vector<double> t{0, 0.5, 2, 2.25, 4, 7.5};
  std::vector<double> x;
  for (double v : t) x.push_back(3.0 * v * v - v + 2.0);
  const auto d = derivatives(line_sequence(x, t));
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(d.vx[i], 6.0 * t[i] - 1.0, 1e-9);
    EXPECT_NEAR(d.ax[i], 6.0, 1e-8);
  }
}

TEST(Derivatives, RepeatedTimestampRejected) {
  auto s = line_sequence({0, 1, 2, 3, 4}, {0, 1, 1, 3, 4});
  try {
    derivatives(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedSequence);
  }
}

TEST(Derivatives, LinearInChannels) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = testing::random_swipe(rng, 5 + static_cast<std::size_t>(trial));
    s = normalize_sequence(s);
    const double a = u(rng);
    const double b = u(rng);
    TouchSequence mixed = s;
    for (auto& p : mixed.samples) p.x = a * p.x + b * p.y;
    const auto ds = derivatives(s);
    const auto dm = derivatives(mixed);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double scale = 1.0 + std::abs(ds.jx[i]) + std::abs(ds.jy[i]);
      EXPECT_NEAR(dm.vx[i], a * ds.vx[i] + b * ds.vy[i], 1e-12 * (1.0 + std::abs(ds.vx[i]) + std::abs(ds.vy[i])));
      EXPECT_NEAR(dm.ax[i], a * ds.ax[i] + b * ds.ay[i], 1e-11 * (1.0 + std::abs(ds.ax[i]) + std::abs(ds.ay[i])));
      EXPECT_NEAR(dm.jx[i], a * ds.jx[i] + b * ds.jy[i], 1e-10 * scale);
    }
  }
}

TEST(Spectrum, ConstantSignalIsDcOnly) {
  const std::vector<double> v(8, 0.75);
  const auto s = spectrum(v);
  EXPECT_NEAR(s[0], 6.0, 1e-12);
  for (std::size_t k = 1; k < 8; ++k) EXPECT_NEAR(s[k], 0.0, 1e-12);
}

TEST(Spectrum, SingleTone) {
  std::vector<double> v(8);
  for (int j = 0; j < 8; ++j) v[static_cast<std::size_t>(j)] = std::cos(2.0 * std::numbers::pi * j / 8.0);
  const auto s = spectrum(v);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(s[k], (k == 1 || k == 7) ? 4.0 : 0.0, 1e-12);
}

TEST(Spectrum, MatchesNaiveDft) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> v(100);
  for (auto& x : v) x = g(rng);
  const auto fast = spectrum(v);
  const auto slow = testing::naive_dft_magnitude(v);
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(fast[k], slow[k], 1e-9);
}

TEST(Spectrum, Parseval) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (std::size_t n = 1; n <= 150; ++n) {
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    const auto s = spectrum(v);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      lhs += s[k] * s[k];
      rhs += v[k] * v[k];
    }
    rhs *= static_cast<double>(n);
    EXPECT_NEAR(lhs, rhs, 1e-6 * rhs) << "n=" << n;
  }
}

TEST(Spectrum, RejectsNonFinite) {
  std::vector<double> v{1.0, NAN, 2.0};
  EXPECT_THROW(spectrum(v), Error);
}

TEST(FeatureMatrix, ExactFitHasNoPadding) {
  std::mt19937_64 rng(1);
  const auto fm = featurize(testing::random_swipe(rng, 100));
  EXPECT_EQ(fm.valid_length, 100);
  EXPECT_EQ(fm.values.rows(), kFeatureChannels);
  EXPECT_EQ(fm.values.cols(), kFeatureSteps);
  EXPECT_TRUE(fm.values.allFinite());
}

TEST(FeatureMatrix, ShortSequenceIsZeroFilled) {
  std::mt19937_64 rng(2);
  const auto seq = normalize_sequence(testing::random_swipe(rng, 40));
  const auto fm = build_feature_matrix(seq);
  EXPECT_EQ(fm.valid_length, 40);
  for (int c = 0; c < kFeatureChannels; ++c) {
    for (int t = 40; t < kFeatureSteps; ++t) EXPECT_EQ(fm.values(c, t), 0.0);
  }
  EXPECT_EQ(fm.values(kChX, 39), seq.samples[39].x);
  EXPECT_EQ(fm.values(kChP, 0), seq.samples[0].p);
}

TEST(FeatureMatrix, LongSequenceKeepsFirstHundredColumns) {
  std::mt19937_64 rng(4);
  const auto seq = normalize_sequence(testing::random_swipe(rng, 150));
  const auto fm = build_feature_matrix(seq);
  EXPECT_EQ(fm.valid_length, 100);
  const auto d = derivatives(seq);
  std::vector<double> x;
  for (const auto& s : seq.samples) x.push_back(s.x);
  const auto spec = spectrum(x);
  for (int t = 0; t < 100; ++t) {
    const auto i = static_cast<std::size_t>(t);
    EXPECT_EQ(fm.values(kChX, t), seq.samples[i].x);
    EXPECT_EQ(fm.values(kChVx, t), d.vx[i]);
    EXPECT_EQ(fm.values(kChJy, t), d.jy[i]);
    EXPECT_EQ(fm.values(kChSpecX, t), spec[i]);
  }
}

TEST(FeatureMatrix, PaddingIsBitwiseZeroForAnyLength) {
  std::mt19937_64 rng(8);
  for (std::size_t n = kMinSequenceLength; n <= 160; n += 3) {
    const auto fm = featurize(testing::random_swipe(rng, n));
    ASSERT_EQ(fm.valid_length, static_cast<int>(std::min<std::size_t>(n, 100)));
    ASSERT_TRUE(fm.values.allFinite());
    for (int c = 0; c < kFeatureChannels; ++c) {
      for (int t = fm.valid_length; t < kFeatureSteps; ++t) {
        const double v = fm.values(c, t);
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        ASSERT_EQ(bits, 0u);
      }
    }
  }
}

TEST(FeatureMatrix, RejectsShortSequences) {
  std::mt19937_64 rng(9);
  try {
    featurize(testing::random_swipe(rng, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SequenceTooShort);
  }
}

TEST(FeatureMatrix, MissingPressureIsZeroChannel) {
  std::mt19937_64 rng(10);
  auto seq = testing::random_swipe(rng, 30);
  seq.pressure_available = false;
  for (auto& s : seq.samples) s.p = 0.0;
  const auto fm = featurize(seq);
  EXPECT_TRUE(fm.values.row(kChP).isZero(0.0));
}

TEST(Validation, DetectsBrokenInvariants) {
  std::mt19937_64 rng(12);
  auto seq = testing::random_swipe(rng, 10);
  EXPECT_TRUE(is_valid_sequence(seq));
  auto bad_p = seq;
  bad_p.samples[3].p = 1.5;
  EXPECT_FALSE(is_valid_sequence(bad_p));
  auto bad_t = seq;
  bad_t.samples[4].t = bad_t.samples[3].t;
  EXPECT_FALSE(is_valid_sequence(bad_t));
  auto neg_t = seq;
  neg_t.samples[0].t = -1.0;
  EXPECT_FALSE(is_valid_sequence(neg_t));
}

}  // namespace
}  // namespace swipeauth
