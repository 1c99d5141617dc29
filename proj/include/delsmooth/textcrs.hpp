#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <boost/rational.hpp>

#include "delsmooth/errors.hpp"

// Coverage analysis for certificates stated over permuted and perturbed
// embedding matrices. A deletion certificate C_D(w; r_R, r_D) bounds the
// permutation distance ||pi||_1 < r_R and the number of replaced rows
// ||delta||_0 < r_D; an insertion certificate C_I(w; r_R, r_I) bounds
// ||pi||_1 < r_R and the perturbation norm ||delta||_2 < r_I. Here D_star is
// the largest distance between two word embeddings. The functions below give
// the smallest radii under which such a certificate contains a genuine edit
// ball, and from that the largest edit radius those certificates can ever
// certify.
namespace delsmooth::textcrs {

using Rational = boost::rational<std::int64_t>;

enum class CoverKind { deletion, insertion };

inline std::string_view to_string(CoverKind k) { return k == CoverKind::deletion ? "deletion" : "insertion"; }

inline CoverKind parse_cover_kind(std::string_view name) {
  if (name == "deletion") return CoverKind::deletion;
  if (name == "insertion") return CoverKind::insertion;
  throw UsageError("unknown cover kind '" + std::string(name) + "'");
}

struct CoverRequirement {
  std::size_t n = 0;
  std::size_t r = 0;
  std::size_t r_D = 0;                   // deletion: replaced-row count radius
  std::optional<double> r_I_min;         // insertion: l2 radius, already scaled by d_star
  Rational r_R_min{0};                   // permutation-distance radius; may be half-integral
  std::optional<double> d_star;
};

// max_{l <= r} 2 l (n - l): 2r(n - r) while n >= 2r, n^2 / 2 beyond.
inline Rational permutation_radius(std::size_t n, std::size_t r) {
  const auto nn = static_cast<std::int64_t>(n);
  const auto rr = static_cast<std::int64_t>(r);
  if (n >= 2 * r) return Rational(2 * rr * (nn - rr));
  return Rational(nn * nn, 2);
}

inline CoverRequirement deletion_cover_radii(std::size_t n, std::size_t r) {
  if (n < 1) throw UsageError("sequence length must be at least 1");
  CoverRequirement c;
  c.n = n;
  c.r = r;
  c.r_D = r;
  c.r_R_min = permutation_radius(n, r);
  return c;
}

inline CoverRequirement insertion_cover_radii(std::size_t n, std::size_t r, double d_star) {
  if (n < 1) throw UsageError("sequence length must be at least 1");
  if (!(d_star > 0.0)) throw UsageError("d_star must be positive");
  CoverRequirement c;
  c.n = n;
  c.r = r;
  c.d_star = d_star;
  c.r_R_min = permutation_radius(n, r);
  const double units = n >= 2 * r ? std::sqrt(static_cast<double>(r)) : std::sqrt(static_cast<double>(n) / 2.0);
  c.r_I_min = units * d_star;
  return c;
}

// Largest r in [0, n] whose cover requirement fits under the caps. For the
// insertion kind r must also satisfy r <= floor((r_I_cap / d_star)^2); an
// absent r_I_cap leaves the l2 radius unconstrained.
inline std::size_t max_certified_edit_radius(std::size_t n, CoverKind kind, const Rational& r_R_cap,
                                             std::optional<double> r_I_cap = std::nullopt, double d_star = 1.0) {
  if (n < 1) throw UsageError("sequence length must be at least 1");
  if (r_R_cap < 0 || (r_I_cap && *r_I_cap < 0.0)) throw UsageError("caps must be nonnegative");
  if (kind == CoverKind::insertion && !(d_star > 0.0)) throw UsageError("d_star must be positive");

  auto fits = [&](std::size_t r) {
    if (permutation_radius(n, r) > r_R_cap) return false;
    if (kind == CoverKind::insertion && r_I_cap) {
      const double ratio = *r_I_cap / d_star;
      if (static_cast<double>(r) > std::floor(ratio * ratio)) return false;
      const auto req = insertion_cover_radii(n, r, d_star);
      if (*req.r_I_min > *r_I_cap) return false;
    }
    return true;
  };
  // Requirements are nondecreasing in r, so the feasible set is a prefix.
  std::size_t best = 0;
  for (std::size_t r = 1; r <= n && fits(r); ++r) best = r;
  return best;
}

}  // namespace delsmooth::textcrs
