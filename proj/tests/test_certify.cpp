#include <atomic>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "delsmooth/certify.hpp"
#include "delsmooth/oracle.hpp"
#include "oracles.hpp"

using namespace delsmooth;

namespace {

ScoreBounds bounds(double mu_y, double mu_yp) {
  ScoreBounds b;
  b.top_class = 0;
  b.runner_up = 1;
  b.mu_y = mu_y;
  b.mu_yprime = mu_yp;
  return b;
}

// Returns 0, 1, 0, 1, ... regardless of input.
class AlternatingClassifier final : public BaseClassifier {
 public:
  std::size_t num_classes() const override { return 2; }
  std::vector<Label> classify_batch(std::span<const std::string> texts) const override {
    std::vector<Label> out;
    for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(next_++ % 2);
    return out;
  }

 private:
  mutable std::atomic<std::size_t> next_{0};
};

class OutOfRangeClassifier final : public BaseClassifier {
 public:
  std::size_t num_classes() const override { return 2; }
  std::vector<Label> classify_batch(std::span<const std::string> texts) const override {
    return std::vector<Label>(texts.size(), 5);
  }
};

const EditOpsSet kFull = EditOpsSet::full();

}  // namespace

TEST(ClopperPearson, MatchesBinomialTailBisection) {
  for (std::uint64_t n : {10u, 100u, 4000u}) {
    for (double frac : {0.0, 0.05, 0.3, 0.5, 0.7, 0.97, 1.0}) {
      const auto k = static_cast<std::uint64_t>(std::llround(frac * static_cast<double>(n)));
      for (double level : {0.025, 0.05}) {
        EXPECT_NEAR(clopper_pearson_lower(k, n, level), oracle::cp_lower_bisect(k, n, level), 1e-9)
            << k << "/" << n;
        EXPECT_NEAR(clopper_pearson_upper(k, n, level), oracle::cp_upper_bisect(k, n, level), 1e-9)
            << k << "/" << n;
      }
    }
  }
}

TEST(ScoreBounds, ZeroFailuresClosedForm) {
  const auto b = score_bounds(ScoreEstimate{{4000, 0}, 4000}, 0.05);
  EXPECT_NEAR(b.mu_y, std::pow(0.025, 1.0 / 4000.0), 1e-12);
  EXPECT_NEAR(b.mu_y, 0.99908, 5e-6);
  EXPECT_NEAR(b.mu_yprime, 1.0 - std::pow(0.025, 1.0 / 4000.0), 1e-12);
  EXPECT_EQ(b.top_class, 0u);
  EXPECT_EQ(b.runner_up, 1u);
}

TEST(ScoreBounds, ComplementModeSumsToOne) {
  for (std::uint64_t k : {2100u, 3000u, 3999u}) {
    const auto b = score_bounds(ScoreEstimate{{4000 - k, k}, 4000}, 0.05, BoundMode::complement);
    EXPECT_EQ(b.mu_y + b.mu_yprime, 1.0);
    EXPECT_EQ(b.top_class, 1u);
  }
}

TEST(ScoreBounds, BonferroniUsesHalfAlphaOnEachSide) {
  const ScoreEstimate est{{100, 2800, 1100}, 4000};
  const auto b = score_bounds(est, 0.1);
  EXPECT_EQ(b.top_class, 1u);
  EXPECT_EQ(b.runner_up, 2u);
  EXPECT_NEAR(b.mu_y, oracle::cp_lower_bisect(2800, 4000, 0.05), 1e-9);
  EXPECT_NEAR(b.mu_yprime, oracle::cp_upper_bisect(1100, 4000, 0.05), 1e-9);
}

TEST(ScoreBounds, DegenerateEstimatesRejected) {
  EXPECT_THROW(score_bounds(ScoreEstimate{{0, 0}, 0}, 0.05), UsageError);
  EXPECT_THROW(score_bounds(ScoreEstimate{{3, 3}, 10}, 0.05), UsageError);
  EXPECT_THROW(score_bounds(ScoreEstimate{{10}, 10}, 0.05), UsageError);
  EXPECT_THROW(score_bounds(ScoreEstimate{{5, 5}, 10}, 1.5), UsageError);
}

TEST(PairwiseBounds, Examples) {
  const auto same = pairwise_bounds(0.37, EditDecomposition{0, 0, 0, 0, 3}, 0.9);
  EXPECT_DOUBLE_EQ(same.lower, 0.37);
  EXPECT_DOUBLE_EQ(same.upper, 0.37);
  const auto one_sub = pairwise_bounds(1.0, EditDecomposition{1, 0, 0, 1, 2}, 0.9);
  EXPECT_NEAR(one_sub.lower, 0.9, 1e-15);
  EXPECT_NEAR(one_sub.upper, 1.1, 1e-15);
}

TEST(CertifiedRadius, Examples) {
  EXPECT_EQ(certified_radius(bounds(0.99908, 0.00092), 0.9, kFull), 6u);
  const auto b = bounds(0.95, 0.05);
  EXPECT_EQ(certified_radius(b, 0.9, kFull), 5u);
  EXPECT_EQ(certified_radius(b, 0.9, parse_ops("d")), 6u);
  EXPECT_EQ(certified_radius(b, 0.9, parse_ops("i")), 21u);
  for (const auto& ops : all_ops_sets()) {
    EXPECT_EQ(certified_radius(bounds(0.4, 0.4), 0.9, ops), 0u);
    EXPECT_EQ(certified_radius(bounds(0.3, 0.6), 0.9, ops), 0u);
  }
}

TEST(CertifiedRadius, InvalidRateRejected) {
  EXPECT_THROW(certified_radius(bounds(0.9, 0.1), 0.0, kFull), UsageError);
  EXPECT_THROW(certified_radius(bounds(0.9, 0.1), 1.0, kFull), UsageError);
}

TEST(CertifiedRadius, ExactBoundaryIsNotCertified) {
  // p^1 equals the threshold exactly: a tie at the neighbour is possible
  EXPECT_EQ(certified_radius(bounds(1.0, 0.0), 0.5, kFull), 0u);
  EXPECT_EQ(certified_radius(bounds(1.0, 0.0), 0.5, parse_ops("d")), 0u);
  EXPECT_EQ(certified_radius(bounds(0.5, 0.0), 0.5, parse_ops("i")), 0u);
  EXPECT_EQ(certified_radius(bounds(0.75, 0.0), 0.5, parse_ops("i")), 1u);
  EXPECT_EQ(certified_radius(bounds(1.0, 0.0), 0.5, parse_ops("i")), kUnboundedRadius);
}

TEST(CertifiedRadius, MatchesHighPrecisionOracleOnGrid) {
  for (double p : {0.3, 0.5, 0.8, 0.9, 0.95}) {
    for (int i = 0; i <= 20; ++i) {
      for (int j = 0; j <= i; ++j) {
        const double mu = i / 20.0, mu2 = j / 20.0;
        for (const auto& ops : all_ops_sets()) {
          ASSERT_EQ(certified_radius(bounds(mu, mu2), p, ops), oracle::table_radius(mu, mu2, p, ops))
              << "p=" << p << " mu=" << mu << " mu'=" << mu2 << " ops " << ops.code();
        }
      }
    }
  }
}

TEST(CertifiedRadius, NondecreasingInMarginAndRate) {
  const std::vector<double> rates = {0.3, 0.5, 0.7, 0.9, 0.95};
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 20; ++j) {
      const auto b = bounds(i / 20.0, j / 20.0);
      for (const auto& ops : all_ops_sets()) {
        const auto r = certified_radius(b, 0.9, ops);
        if (i < 20) {
          EXPECT_LE(r, certified_radius(bounds((i + 1) / 20.0, j / 20.0), 0.9, ops));
        }
        if (j > 0) {
          EXPECT_LE(r, certified_radius(bounds(i / 20.0, (j - 1) / 20.0), 0.9, ops));
        }
        for (std::size_t k = 0; k + 1 < rates.size(); ++k) {
          EXPECT_LE(certified_radius(b, rates[k], ops), certified_radius(b, rates[k + 1], ops));
        }
      }
    }
  }
}

TEST(CertifiedRadius, LargeRadiusNearOne) {
  // p close to 1 gives long radii; compare against the oracle stepping routine
  EXPECT_EQ(certified_radius(bounds(0.9, 0.1), 0.999, kFull), oracle::table_radius(0.9, 0.1, 0.999, kFull));
  EXPECT_EQ(certified_radius(bounds(0.9, 0.1), 0.9999, parse_ops("i")),
            oracle::table_radius(0.9, 0.1, 0.9999, parse_ops("i")));
}

TEST(SmoothedPredict, ConstantClassifier) {
  ConstantClassifier f(1, 3);
  const auto sp = smoothed_predict(f, TokenSeq{"a", "b"}, MechanismParams{MechanismKind::deletion, 0.9}, 500,
                                   StreamKey{1, 0, Phase::prediction});
  EXPECT_EQ(sp.label, 1u);
  EXPECT_EQ(sp.estimate.counts, (std::vector<std::uint64_t>{0, 500, 0}));
}

TEST(SmoothedPredict, ZeroRateEqualsBaseClassifier) {
  KeywordClassifier f({{"good", 1}}, 0, 2);
  for (const auto& text : {"good movie", "bad movie", ""}) {
    const auto sp = smoothed_predict(f, tokenize(text), MechanismParams{MechanismKind::deletion, 0.0}, 50,
                                     StreamKey{2, 0, Phase::prediction});
    EXPECT_EQ(sp.label, f.classify(text));
    EXPECT_EQ(sp.estimate.counts[sp.label], 50u);
  }
}

TEST(SmoothedPredict, ConvergesToExactScore) {
  KeywordClassifier f({{"good", 1}}, 0, 2);
  const TokenSeq x{"good", "movie"};
  const double exact = exact_smoothed_scores(f, x, 0.5).probs[1];
  EXPECT_DOUBLE_EQ(exact, 0.5);
  const std::size_t n = 10000;
  const auto sp = smoothed_predict(f, x, MechanismParams{MechanismKind::deletion, 0.5}, n,
                                   StreamKey{3, 0, Phase::prediction});
  const double freq = static_cast<double>(sp.estimate.counts[1]) / n;
  EXPECT_NEAR(freq, exact, 3 * std::sqrt(exact * (1 - exact) / n));
}

TEST(SmoothedPredict, IndependentOfThreadsAndBatchSize) {
  KeywordClassifier f({{"c", 1}, {"a", 0}}, 1, 2);
  const TokenSeq x{"a", "b", "c", "a", "d", "c", "b"};
  const MechanismParams mech{MechanismKind::deletion, 0.6};
  const StreamKey key{99, 7, Phase::certification};
  const auto base = smoothed_predict(f, x, mech, 3000, key, 1, 512);
  EXPECT_EQ(smoothed_predict(f, x, mech, 3000, key, 4, 512).estimate.counts, base.estimate.counts);
  EXPECT_EQ(smoothed_predict(f, x, mech, 3000, key, 3, 97).estimate.counts, base.estimate.counts);
}

TEST(SmoothedPredict, OutOfRangeLabelIsProtocolError) {
  OutOfRangeClassifier f;
  EXPECT_THROW(smoothed_predict(f, TokenSeq{"a"}, MechanismParams{}, 10, StreamKey{}), ProtocolError);
}

TEST(Certify, ConstantClassifierReachesRadiusSix) {
  ConstantClassifier f(0, 2);
  const auto c = certify(f, tokenize("any text at all will do here"), MechanismParams{MechanismKind::deletion, 0.9},
                         CertifyOptions{}, 17, 0);
  EXPECT_FALSE(c.abstained);
  EXPECT_EQ(c.predicted, 0u);
  EXPECT_EQ(c.radius(kFull), 6u);
  EXPECT_EQ(c.radius(parse_ops("s")), c.radius(kFull));
  EXPECT_GE(c.radius(parse_ops("d")), c.radius(kFull));
  EXPECT_EQ(c.radius(parse_ops("d")), c.radius(parse_ops("di")));
  EXPECT_GE(c.radius(parse_ops("i")), c.radius(kFull));
  EXPECT_NEAR(c.log10_cardinality_lb,
              log10_big(lev_ball_cardinality_lower_bound({50265, 6, 7})), 1e-12);
}

TEST(Certify, CoinFlipClassifierAbstains) {
  AlternatingClassifier f;
  const auto c = certify(f, tokenize("a b c"), MechanismParams{MechanismKind::deletion, 0.5}, CertifyOptions{}, 1, 0);
  EXPECT_TRUE(c.abstained);
  for (auto r : c.radii) EXPECT_EQ(r, 0u);
  EXPECT_LT(c.predicted, 2u);
  EXPECT_DOUBLE_EQ(c.log10_cardinality_lb, 0.0);
}

TEST(Certify, RequiresDeletionMechanism) {
  ConstantClassifier f(0, 2);
  EXPECT_THROW(certify(f, tokenize("a"), MechanismParams{MechanismKind::masking, 0.5}, CertifyOptions{}, 1, 0),
               UsageError);
}

TEST(Certify, PredictionAndCertificationStreamsDiffer) {
  KeywordClassifier f({{"a", 1}}, 0, 2);
  const auto c = certify(f, tokenize("a b a c"), MechanismParams{MechanismKind::deletion, 0.5},
                         CertifyOptions{1000, 1000}, 5, 0);
  EXPECT_NE(c.prediction_counts.counts, c.certification_counts.counts);
}

TEST(OpsIndex, FollowsAllOpsSets) {
  const auto& sets = all_ops_sets();
  for (std::size_t i = 0; i < sets.size(); ++i) EXPECT_EQ(ops_index(sets[i]), i);
  EXPECT_EQ(sets[0], kFull);
}
