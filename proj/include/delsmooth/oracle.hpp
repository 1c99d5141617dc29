#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "delsmooth/certify.hpp"
#include "delsmooth/classifier.hpp"
#include "delsmooth/edit_metrics.hpp"
#include "delsmooth/errors.hpp"
#include "delsmooth/mechanisms.hpp"
#include "delsmooth/tokenization.hpp"

namespace delsmooth {

inline constexpr std::size_t kMaxExactLength = 18;
inline constexpr std::size_t kMaxRationalLength = 12;

// Exact smoothed scores p_y(x) for every class.
struct ExactScores {
  std::vector<double> probs;
  std::size_t n = 0;

  Label top() const { return argmax_lowest(std::span<const double>(probs)); }
  Label runner_up() const {
    const Label y = top();
    Label best = y == 0 ? 1 : 0;
    for (Label c = 0; c < probs.size(); ++c) {
      if (c != y && probs[c] > probs[best]) best = c;
    }
    return best;
  }

  // The exact scores used as if they were confidence bounds.
  ScoreBounds as_bounds() const {
    ScoreBounds b;
    b.top_class = top();
    b.runner_up = runner_up();
    b.mu_y = probs[b.top_class];
    b.mu_yprime = probs[b.runner_up];
    b.alpha = 0.0;
    return b;
  }
};

namespace detail {

// Groups the 2^n deletion patterns by the text they produce so each distinct
// perturbed text is classified once. Returns (texts, pattern masks per text).
inline std::pair<std::vector<std::string>, std::vector<std::vector<std::uint64_t>>> distinct_deletions(
    const TokenSeq& x) {
  std::map<std::string, std::vector<std::uint64_t>> groups;
  const std::uint64_t total = std::uint64_t{1} << x.size();
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    groups[detokenize(apply_deletion(x, DeletionPattern::from_mask(x.size(), mask)))].push_back(mask);
  }
  std::pair<std::vector<std::string>, std::vector<std::vector<std::uint64_t>>> out;
  for (auto& [text, masks] : groups) {
    out.first.push_back(text);
    out.second.push_back(std::move(masks));
  }
  return out;
}

}  // namespace detail

// p_y(x) = sum over all deletion patterns eps of q(eps) [f(apply(x, eps)) = y],
// accumulated with Kahan summation.
inline ExactScores exact_smoothed_scores(const BaseClassifier& f, const TokenSeq& x, double p_del) {
  if (x.size() > kMaxExactLength) {
    throw GuardError("exact enumeration over 2^" + std::to_string(x.size()) + " patterns exceeds guard 2^" +
                     std::to_string(kMaxExactLength));
  }
  const auto [texts, masks] = detail::distinct_deletions(x);
  const auto labels = f.classify_batch(texts);
  ExactScores out;
  out.n = x.size();
  out.probs.assign(f.num_classes(), 0.0);
  std::vector<double> comp(f.num_classes(), 0.0);
  for (std::size_t t = 0; t < texts.size(); ++t) {
    const Label y = labels[t];
    for (auto mask : masks[t]) {
      const double term = pattern_probability(DeletionPattern::from_mask(x.size(), mask), p_del) - comp[y];
      const double sum = out.probs[y] + term;
      comp[y] = (sum - out.probs[y]) - term;
      out.probs[y] = sum;
    }
  }
  return out;
}

using Rational = boost::multiprecision::cpp_rational;

// Rational-arithmetic variant for short sequences; p_del is given exactly.
inline std::vector<Rational> exact_smoothed_scores_rational(const BaseClassifier& f, const TokenSeq& x,
                                                            const Rational& p_del) {
  if (x.size() > kMaxRationalLength) {
    throw GuardError("rational enumeration limited to sequences of length " + std::to_string(kMaxRationalLength));
  }
  const auto [texts, masks] = detail::distinct_deletions(x);
  const auto labels = f.classify_batch(texts);
  std::vector<Rational> probs(f.num_classes(), Rational(0));
  const Rational keep = 1 - p_del;
  for (std::size_t t = 0; t < texts.size(); ++t) {
    for (auto mask : masks[t]) {
      const auto k = static_cast<unsigned>(std::popcount(mask));
      probs[labels[t]] += detail::pow(p_del, k) * detail::pow(keep, static_cast<unsigned>(x.size()) - k);
    }
  }
  return probs;
}

// Deletion patterns reducing a and b to the common subsequence preserved by
// their minimal alignment.
struct AlignmentWitness {
  DeletionPattern eps_star_src;  // on a
  DeletionPattern eps_star_dst;  // on b
  TokenSeq common;
};

inline AlignmentWitness alignment_witness(const TokenSeq& a, const TokenSeq& b) {
  const Alignment al = optimal_alignment(a, b);
  AlignmentWitness w;
  w.eps_star_src.indicators.assign(a.size(), 1);
  w.eps_star_dst.indicators.assign(b.size(), 1);
  w.common.scheme = a.scheme;
  for (auto [i, j] : al.matches) {
    w.eps_star_src.indicators[i] = 0;
    w.eps_star_dst.indicators[j] = 0;
    w.common.tokens.push_back(a.tokens[i]);
  }
  return w;
}

// Smoothed prediction at a sequence; lets callers memoize the oracle.
using SmoothedPredictor = std::function<Label(const TokenSeq&)>;

inline SmoothedPredictor exact_predictor(const BaseClassifier& f, double p_del) {
  return [&f, p_del](const TokenSeq& s) { return exact_smoothed_scores(f, s, p_del).top(); };
}

// Every member of the ops-constrained ball of the given radius whose smoothed
// prediction differs from the prediction at x. An unbounded insertion-only
// radius is the whole (finite) subsequence ball.
inline std::vector<TokenSeq> verify_certificate(const SmoothedPredictor& predict, const TokenSeq& x, Radius radius,
                                                EditOpsSet ops, const std::vector<std::string>& alphabet) {
  std::vector<TokenSeq> violations;
  if (radius == 0) return violations;
  if (!ops.del && !ops.sub) radius = std::min<Radius>(radius, x.size());
  if (radius == kUnboundedRadius) throw GuardError("unbounded radius with length-increasing edits");
  const Label at_x = predict(x);
  for (const auto& neighbour : enumerate_ball(x, radius, ops, alphabet)) {
    if (predict(neighbour) != at_x) violations.push_back(neighbour);
  }
  return violations;
}

inline std::vector<TokenSeq> verify_certificate(const BaseClassifier& f, const TokenSeq& x, Radius radius,
                                                EditOpsSet ops, const std::vector<std::string>& alphabet,
                                                double p_del) {
  return verify_certificate(exact_predictor(f, p_del), x, radius, ops, alphabet);
}

}  // namespace delsmooth
