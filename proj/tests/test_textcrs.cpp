#include <cmath>

#include <gtest/gtest.h>

#include "delsmooth/textcrs.hpp"

using namespace delsmooth;
using namespace delsmooth::textcrs;

namespace {

// max over l in [0, r] of 2 l (n - l), evaluated by direct search
Rational brute_permutation_radius(std::size_t n, std::size_t r) {
  Rational best(0);
  const auto nn = static_cast<std::int64_t>(n);
  for (std::int64_t l = 0; l <= static_cast<std::int64_t>(r); ++l) {
    if (2 * l <= nn) best = std::max(best, Rational(2 * l * (nn - l)));
  }
  if (static_cast<std::int64_t>(2 * r) > nn) best = std::max(best, Rational(nn * nn, 2));
  return best;
}

}  // namespace

TEST(DeletionCover, Examples) {
  const auto zero = deletion_cover_radii(5, 0);
  EXPECT_EQ(zero.r_R_min, Rational(0));
  EXPECT_EQ(zero.r_D, 0u);
  EXPECT_EQ(deletion_cover_radii(10, 2).r_R_min, Rational(32));
  EXPECT_EQ(deletion_cover_radii(10, 2).r_D, 2u);
  EXPECT_EQ(deletion_cover_radii(3, 2).r_R_min, Rational(9, 2));
  EXPECT_THROW(deletion_cover_radii(0, 1), UsageError);
}

TEST(InsertionCover, Examples) {
  const auto zero = insertion_cover_radii(4, 0, 1.0);
  EXPECT_EQ(*zero.r_I_min, 0.0);
  EXPECT_EQ(zero.r_R_min, Rational(0));
  const auto c = insertion_cover_radii(10, 2, 1.0);
  EXPECT_DOUBLE_EQ(*c.r_I_min, std::sqrt(2.0));
  EXPECT_EQ(c.r_R_min, Rational(32));
  const auto wide = insertion_cover_radii(2, 3, 2.5);
  EXPECT_DOUBLE_EQ(*wide.r_I_min, 2.5);
  EXPECT_EQ(wide.r_R_min, Rational(2));
  EXPECT_THROW(insertion_cover_radii(3, 1, 0.0), UsageError);
}

TEST(PermutationRadius, MatchesDirectSearchAndIsMonotone) {
  for (std::size_t n = 1; n <= 40; ++n) {
    Rational prev(0);
    for (std::size_t r = 0; r <= n; ++r) {
      const auto v = permutation_radius(n, r);
      EXPECT_EQ(v, brute_permutation_radius(n, r)) << n << " " << r;
      if (2 * r <= n) {
        EXPECT_GE(v, prev);
        prev = v;
      }
    }
  }
}

TEST(MaxRadius, DeletionSmallLengthsCoverEverything) {
  EXPECT_EQ(max_certified_edit_radius(1, CoverKind::deletion, Rational(1)), 1u);
  EXPECT_EQ(max_certified_edit_radius(2, CoverKind::deletion, Rational(2)), 2u);
}

TEST(MaxRadius, DeletionVacuousBeyondTwo) {
  for (std::size_t n = 3; n <= 1000; ++n) {
    EXPECT_EQ(max_certified_edit_radius(n, CoverKind::deletion, Rational(static_cast<std::int64_t>(n))), 0u) << n;
  }
}

TEST(MaxRadius, InsertionVacuousBelowOneEmbeddingDistance) {
  for (std::size_t n = 1; n <= 50; ++n) {
    for (double ratio : {0.0, 0.3, 0.99}) {
      EXPECT_EQ(max_certified_edit_radius(n, CoverKind::insertion, Rational(1000000), ratio * 1.7, 1.7), 0u);
    }
  }
}

TEST(MaxRadius, InsertionBoundedBySquaredRatio) {
  // generous permutation cap; r <= floor(ratio^2) binds
  EXPECT_EQ(max_certified_edit_radius(100, CoverKind::insertion, Rational(100000), 2.0, 1.0), 4u);
  EXPECT_EQ(max_certified_edit_radius(100, CoverKind::insertion, Rational(100000), std::nullopt, 1.0), 100u);
}

TEST(MaxRadius, RoundTripAgainstCoverRequirement) {
  for (std::size_t n = 1; n <= 60; ++n) {
    for (std::int64_t cap : {std::int64_t{0}, static_cast<std::int64_t>(n), std::int64_t{50}, std::int64_t{400}}) {
      const auto r = max_certified_edit_radius(n, CoverKind::deletion, Rational(cap));
      EXPECT_LE(deletion_cover_radii(n, r).r_R_min, Rational(cap));
      if (r < n) {
        EXPECT_GT(deletion_cover_radii(n, r + 1).r_R_min, Rational(cap));
      }
    }
  }
}

TEST(MaxRadius, RejectsBadArguments) {
  EXPECT_THROW(max_certified_edit_radius(0, CoverKind::deletion, Rational(1)), UsageError);
  EXPECT_THROW(max_certified_edit_radius(3, CoverKind::deletion, Rational(-1)), UsageError);
  EXPECT_THROW(max_certified_edit_radius(3, CoverKind::insertion, Rational(1), 1.0, 0.0), UsageError);
  EXPECT_EQ(parse_cover_kind("insertion"), CoverKind::insertion);
  EXPECT_THROW(parse_cover_kind("swap"), UsageError);
}
