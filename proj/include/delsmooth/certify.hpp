#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "delsmooth/classifier.hpp"
#include "delsmooth/edit_metrics.hpp"
#include "delsmooth/errors.hpp"
#include "delsmooth/mechanisms.hpp"
#include "delsmooth/parallel.hpp"
#include "delsmooth/rng.hpp"
#include "delsmooth/tokenization.hpp"

namespace delsmooth {

// Monte Carlo vote counts of the base classifier under the mechanism.
struct ScoreEstimate {
  std::vector<std::uint64_t> counts;
  std::uint64_t num_samples = 0;

  void validate() const {
    if (num_samples == 0) throw UsageError("score estimate has no samples");
    if (counts.size() < 2) throw UsageError("score estimate needs at least two classes");
    std::uint64_t sum = 0;
    for (auto c : counts) sum += c;
    if (sum != num_samples) throw UsageError("vote counts do not sum to the sample count");
  }

  Label top() const { return argmax_lowest(std::span<const std::uint64_t>(counts)); }

  // Largest count among classes other than `exclude` (ties to the lowest index).
  Label runner_up(Label exclude) const {
    Label best = exclude == 0 ? 1 : 0;
    for (Label c = 0; c < counts.size(); ++c) {
      if (c != exclude && counts[c] > counts[best]) best = c;
    }
    return best;
  }
};

enum class BoundMode { bonferroni_cp, complement };

inline std::string_view to_string(BoundMode m) {
  return m == BoundMode::bonferroni_cp ? "bonferroni-cp" : "complement";
}

inline BoundMode parse_bound_mode(std::string_view name) {
  if (name == "bonferroni-cp") return BoundMode::bonferroni_cp;
  if (name == "complement") return BoundMode::complement;
  throw UsageError("unknown bound mode '" + std::string(name) + "'");
}

// Joint confidence bounds: mu_y <= p_y(x) and mu_yprime >= p_y'(x).
struct ScoreBounds {
  Label top_class = 0;
  Label runner_up = 1;
  double mu_y = 0.0;
  double mu_yprime = 1.0;
  double alpha = 0.05;

  double margin() const { return mu_y - mu_yprime; }
};

// One-sided Clopper-Pearson bounds for k successes in n trials: the
// probability that the true rate lies outside the bound is at most `level`.
inline double clopper_pearson_lower(std::uint64_t k, std::uint64_t n, double level) {
  if (k == 0) return 0.0;
  if (k == n) return std::pow(level, 1.0 / static_cast<double>(n));
  return boost::math::ibeta_inv(static_cast<double>(k), static_cast<double>(n - k + 1), level);
}

inline double clopper_pearson_upper(std::uint64_t k, std::uint64_t n, double level) {
  if (k == n) return 1.0;
  if (k == 0) return 1.0 - std::pow(level, 1.0 / static_cast<double>(n));
  return boost::math::ibeta_inv(static_cast<double>(k + 1), static_cast<double>(n - k), 1.0 - level);
}

// bonferroni-cp: each one-sided bound at alpha/2 so both hold jointly with
// probability 1 - alpha. complement: one alpha-level lower bound, and
// mu_y' = 1 - mu_y since p_y' <= 1 - p_y.
inline ScoreBounds score_bounds(const ScoreEstimate& est, double alpha, BoundMode mode = BoundMode::bonferroni_cp) {
  est.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
  ScoreBounds b;
  b.alpha = alpha;
  b.top_class = est.top();
  b.runner_up = est.runner_up(b.top_class);
  const auto n = est.num_samples;
  if (mode == BoundMode::bonferroni_cp) {
    b.mu_y = clopper_pearson_lower(est.counts[b.top_class], n, alpha / 2.0);
    b.mu_yprime = clopper_pearson_upper(est.counts[b.runner_up], n, alpha / 2.0);
  } else {
    b.mu_y = clopper_pearson_lower(est.counts[b.top_class], n, alpha);
    b.mu_yprime = 1.0 - b.mu_y;
  }
  return b;
}

struct SmoothedPrediction {
  Label label = 0;
  ScoreEstimate estimate;
};

// Draw i of a stream always uses CounterRng(key, i); samples are classified
// in batches and counts are summed, so `threads` only changes speed.
inline SmoothedPrediction smoothed_predict(const BaseClassifier& f, const TokenSeq& x, const MechanismParams& mech,
                                           std::size_t n_samples, const StreamKey& key, unsigned threads = 1,
                                           std::size_t batch_size = 512) {
  if (n_samples < 1) throw UsageError("n_samples must be at least 1");
  mech.validate();
  const std::size_t classes = f.num_classes();
  const std::size_t batches = (n_samples + batch_size - 1) / batch_size;
  std::vector<std::vector<std::uint64_t>> partial(batches, std::vector<std::uint64_t>(classes, 0));
  parallel_for(batches, threads, [&](std::size_t b) {
    const std::size_t lo = b * batch_size;
    const std::size_t hi = std::min(n_samples, lo + batch_size);
    std::vector<std::string> texts;
    texts.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      CounterRng rng(key, i);
      texts.push_back(detokenize(perturb(x, mech, rng)));
    }
    for (Label y : f.classify_batch(texts)) {
      if (y >= classes) throw ProtocolError("classifier returned label " + std::to_string(y) + " out of range");
      ++partial[b][y];
    }
  });
  SmoothedPrediction out;
  out.estimate.counts.assign(classes, 0);
  out.estimate.num_samples = n_samples;
  for (const auto& p : partial) {
    for (std::size_t c = 0; c < classes; ++c) out.estimate.counts[c] += p[c];
  }
  out.label = out.estimate.top();
  return out;
}

// Interval for p_y at a neighbour, given p_y at x and the decomposition of
// the script turning the neighbour into x. Not clipped to [0, 1].
struct ScoreInterval {
  double lower = 0.0;
  double upper = 1.0;
};

inline ScoreInterval pairwise_bounds(double p_y_at_x, const EditDecomposition& dec, double p_del) {
  const double scale = std::pow(p_del, static_cast<double>(dec.n_del) - static_cast<double>(dec.n_ins));
  ScoreInterval out;
  out.lower = scale * (p_y_at_x - 1.0 + std::pow(p_del, static_cast<double>(dec.n_sub + dec.n_ins)));
  out.upper = scale * p_y_at_x + 1.0 - std::pow(p_del, static_cast<double>(dec.n_sub + dec.n_del));
  return out;
}

using Radius = std::size_t;

// Returned for insertion-only adversaries when the bounds are perfect
// (mu_y = 1, mu_y' = 0): no number of insertions can move the prediction.
inline constexpr Radius kUnboundedRadius = std::numeric_limits<Radius>::max();

namespace detail {

using Rational = boost::multiprecision::cpp_rational;

inline Rational exact(double v) {
  if (v == 0.0) return Rational(0);
  int exp = 0;
  const double frac = std::frexp(v, &exp);
  const auto mant = static_cast<std::int64_t>(std::ldexp(frac, 53));
  exp -= 53;
  boost::multiprecision::cpp_int num = mant;
  boost::multiprecision::cpp_int den = 1;
  if (exp >= 0) {
    num <<= exp;
  } else {
    den <<= -exp;
  }
  return Rational(num, den);
}

inline Rational pow(Rational base, unsigned e) {
  Rational out(1);
  while (e > 0) {
    if (e & 1u) out *= base;
    base *= base;
    e >>= 1u;
  }
  return out;
}

// Largest r >= 0 with p^r * a > b, where a > 0. Returns 0 when even r = 0
// fails (the certificate degenerates to x itself) and kUnboundedRadius when
// b <= 0. The floating estimate is confirmed in exact rational arithmetic
// whenever it falls near an integer, so the radius is never overstated.
inline Radius largest_power_exceeding(double p, const Rational& a, const Rational& b) {
  if (b <= 0) return kUnboundedRadius;
  if (a <= b) return 0;
  const Rational pr = exact(p);
  auto holds = [&](Radius r) {
    return detail::pow(pr, static_cast<unsigned>(r)) * a > b;
  };
  const long double est = std::log(static_cast<long double>(b.convert_to<double>()) /
                                   static_cast<long double>(a.convert_to<double>())) /
                          std::log(static_cast<long double>(p));
  const long double fl = std::floor(est);
  if (est - fl > 1e-6L && fl + 1 - est > 1e-6L && est < 1e6L) return static_cast<Radius>(fl);
  auto r = static_cast<Radius>(std::max<long double>(0.0L, fl));
  while (r > 0 && !holds(r)) --r;
  while (holds(r + 1)) ++r;
  return r;
}

}  // namespace detail

// Certified radius against an adversary restricted to `ops`:
//   ops containing sub:  largest r with p^r > (2 + mu_y' - mu_y) / 2
//   {del}, {del, ins}:   largest r with p^r > 1 / (1 - mu_y' + mu_y)
//   {ins}:               largest r with p^r > 1 + mu_y' - mu_y
// i.e. the floor of the logarithm, except that a power landing exactly on the
// threshold (a score tie at the neighbour) is not certified. Zero when the
// bounds cross.
inline Radius certified_radius(const ScoreBounds& b, double p_del, EditOpsSet ops) {
  if (!(p_del > 0.0 && p_del < 1.0)) throw UsageError("certified radius needs p_del in (0, 1)");
  if (!ops.valid()) throw UsageError("ops set must allow at least one edit operation");
  if (b.mu_y < b.mu_yprime) return 0;
  const detail::Rational mu = detail::exact(b.mu_y);
  const detail::Rational mu2 = detail::exact(b.mu_yprime);
  if (ops.sub) return detail::largest_power_exceeding(p_del, detail::Rational(2), 2 + mu2 - mu);
  if (ops.del) return detail::largest_power_exceeding(p_del, 1 - mu2 + mu, detail::Rational(1));
  return detail::largest_power_exceeding(p_del, detail::Rational(1), 1 + mu2 - mu);
}

inline std::size_t ops_index(EditOpsSet ops) {
  const auto& all = all_ops_sets();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i] == ops) return i;
  }
  throw UsageError("ops set must allow at least one edit operation");
}

struct CertifyOptions {
  std::size_t n_pred = 1000;
  std::size_t n_cert = 4000;
  double alpha = 0.05;
  BoundMode mode = BoundMode::bonferroni_cp;
  std::uint64_t vocab_size = 50265;
  unsigned threads = 1;
};

struct Certificate {
  Label predicted = 0;
  bool abstained = false;
  std::array<Radius, 7> radii{};  // indexed like all_ops_sets()
  double p_del = 0.0;
  double alpha = 0.05;
  ScoreBounds bounds;
  ScoreEstimate prediction_counts;
  ScoreEstimate certification_counts;
  double log10_cardinality_lb = 0.0;  // full-ops certified ball at |x|

  Radius radius(EditOpsSet ops) const { return radii[ops_index(ops)]; }
};

// Predict from one Monte Carlo batch, bound the scores from an independent
// one and turn the bounds into radii for every ops set. When the two batches
// disagree on the top class, or the bounds cross, the prediction is kept and
// every radius is zero.
inline Certificate certify(const BaseClassifier& f, const TokenSeq& x, const MechanismParams& mech,
                           const CertifyOptions& opt, std::uint64_t seed, std::uint64_t instance) {
  if (mech.kind != MechanismKind::deletion) throw UsageError("certificates require the deletion mechanism");
  if (!(mech.rate > 0.0 && mech.rate < 1.0)) throw UsageError("certification needs p_del in (0, 1)");
  const auto pred = smoothed_predict(f, x, mech, opt.n_pred, StreamKey{seed, instance, Phase::prediction}, opt.threads);
  const auto cert =
      smoothed_predict(f, x, mech, opt.n_cert, StreamKey{seed, instance, Phase::certification}, opt.threads);

  Certificate c;
  c.predicted = pred.label;
  c.p_del = mech.rate;
  c.alpha = opt.alpha;
  c.prediction_counts = pred.estimate;
  c.certification_counts = cert.estimate;
  c.bounds = score_bounds(cert.estimate, opt.alpha, opt.mode);
  c.abstained = c.bounds.top_class != pred.label || c.bounds.mu_y < c.bounds.mu_yprime;
  if (!c.abstained) {
    const auto& sets = all_ops_sets();
    for (std::size_t i = 0; i < sets.size(); ++i) c.radii[i] = certified_radius(c.bounds, mech.rate, sets[i]);
  }
  const Radius full = c.radii[0];
  c.log10_cardinality_lb =
      log10_big(lev_ball_cardinality_lower_bound(CardinalityParams{opt.vocab_size, full, x.size()}));
  return c;
}

}  // namespace delsmooth
