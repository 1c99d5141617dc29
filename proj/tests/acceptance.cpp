#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "delsmooth/commands.hpp"
#include "delsmooth/oracle.hpp"
#include "synthetic.hpp"

using namespace delsmooth;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Every sequence over `alphabet` with length in [0, max_len].
std::vector<TokenSeq> universe(const std::vector<std::string>& alphabet, std::size_t max_len) {
  std::vector<TokenSeq> out{TokenSeq{}};
  std::vector<TokenSeq> layer{TokenSeq{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<TokenSeq> next;
    for (const auto& s : layer) {
      for (const auto& a : alphabet) {
        auto t = s;
        t.tokens.push_back(a);
        next.push_back(t);
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

const std::vector<std::string> kAlphabet = {"a", "b", "c"};

const KeywordClassifier& rule_classifier() {
  static const KeywordClassifier f({{"a", 1}, {"b", 2}}, 0, 3);
  return f;
}

Outcome soundness() {
  const auto t0 = Clock::now();
  const auto& f = rule_classifier();
  std::size_t checked = 0, nonzero = 0, violations = 0;
  for (double p : {0.5, 0.8}) {
    std::map<TokenSeq, Label> cache;
    SmoothedPredictor predict = [&](const TokenSeq& s) {
      auto it = cache.find(s);
      if (it == cache.end()) it = cache.emplace(s, exact_smoothed_scores(f, s, p).top()).first;
      return it->second;
    };
    for (const auto& x : universe(kAlphabet, 5)) {
      const auto bounds = exact_smoothed_scores(f, x, p).as_bounds();
      for (const auto& ops : all_ops_sets()) {
        const Radius r = certified_radius(bounds, p, ops);
        ++checked;
        nonzero += r > 0;
        violations += verify_certificate(predict, x, r, ops, kAlphabet).size();
      }
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << checked << " certificates (" << nonzero << " nonzero), " << violations << " violations, " << secs << " s";
  return {violations == 0 && nonzero > 0 && secs < 600.0, d.str()};
}

Outcome pairwise() {
  const auto& f = rule_classifier();
  const auto all = universe(kAlphabet, 5);
  std::size_t pairs = 0, violations = 0;
  for (double p : {0.5, 0.8}) {
    std::vector<std::vector<double>> probs;
    for (const auto& s : all) probs.push_back(exact_smoothed_scores(f, s, p).probs);
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t j = 0; j < all.size(); ++j) {
        const auto dec = edit_decomposition(all[j], all[i]);
        if (dec.distance > 3) continue;
        ++pairs;
        for (Label y = 0; y < 3; ++y) {
          const auto iv = pairwise_bounds(probs[i][y], dec, p);
          if (probs[j][y] < iv.lower - 1e-9 || probs[j][y] > iv.upper + 1e-9) ++violations;
        }
      }
    }
  }
  std::ostringstream d;
  d << pairs << " pairs, " << violations << " violations";
  return {violations == 0 && pairs > 0, d.str()};
}

Outcome table_structure() {
  const EditOpsSet full = EditOpsSet::full(), sub = parse_ops("s"), del = parse_ops("d"), di = parse_ops("di"),
                   ins = parse_ops("i");
  std::size_t cells = 0, bad = 0;
  for (double p : {0.5, 0.8, 0.9, 0.99}) {
    for (int i = 0; i <= 20; ++i) {
      for (int j = 0; j <= i; ++j) {
        ScoreBounds b;
        b.mu_y = i / 20.0;
        b.mu_yprime = j / 20.0;
        ++cells;
        const Radius rf = certified_radius(b, p, full);
        const Radius rd = certified_radius(b, p, del);
        bool ok = certified_radius(b, p, sub) == rf && rd == certified_radius(b, p, di) && rd >= rf &&
                  certified_radius(b, p, ins) >= rf;
        if (i == j) {
          for (const auto& ops : all_ops_sets()) ok = ok && certified_radius(b, p, ops) == 0;
        }
        bad += !ok;
      }
    }
  }
  std::ostringstream d;
  d << cells << " grid cells over 4 rates, " << bad << " violations";
  return {bad == 0, d.str()};
}

Outcome coverage() {
  // a single "a" under deletion 0.3 is kept, and so labelled 1, with probability 0.7
  const KeywordClassifier f({{"a", 1}}, 0, 2);
  const TokenSeq x{"a"};
  const MechanismParams mech{MechanismKind::deletion, 0.3};
  CertifyOptions opt;
  opt.n_cert = 4000;
  opt.alpha = 0.05;
  const int runs = 1000;
  int failures = 0;
  for (int s = 0; s < runs; ++s) {
    const auto c = certify(f, x, mech, opt, static_cast<std::uint64_t>(s), 0);
    const auto& b = c.bounds;
    const bool fail = b.top_class != 1 || b.mu_y > 0.7 || b.mu_yprime < 0.3;
    failures += fail;
  }
  const double rate = static_cast<double>(failures) / runs;
  std::ostringstream d;
  d << failures << "/" << runs << " joint bound failures (rate " << rate << ")";
  return {rate <= 0.07, d.str()};
}

Outcome cardinalities() {
  const std::vector<std::string> letters = {"t0", "t1", "t2"};
  std::size_t checked = 0, bad = 0;
  for (std::uint64_t v = 1; v <= 3; ++v) {
    const std::vector<std::string> alphabet(letters.begin(), letters.begin() + static_cast<std::ptrdiff_t>(v));
    for (std::size_t n = 0; n <= 4; ++n) {
      const auto words = universe(alphabet, n);
      for (std::size_t r = 0; r <= 2; ++r) {
        const BigInt ham = hamming_ball_cardinality({v, std::min(r, n), n});
        const BigInt lower = lev_ball_cardinality_lower_bound({v, r, n});
        for (const auto& x : words) {
          if (x.size() != n) continue;
          ++checked;
          std::size_t brute = 0;
          for (const auto& y : words) {
            if (y.size() != n) continue;
            std::size_t diff = 0;
            for (std::size_t k = 0; k < n; ++k) diff += x[k] != y[k];
            brute += diff <= r;
          }
          const BigInt exact = lev_ball_cardinality_exact(x, v, r);
          const BigInt enumerated = enumerate_ball(x, r, EditOpsSet::full(), alphabet).size();
          const bool ok = ham == brute && exact == enumerated && ham <= lower && lower <= exact;
          bad += !ok;
        }
      }
    }
  }
  std::ostringstream d;
  d << checked << " (x, v, r) cases, " << bad << " mismatches";
  return {bad == 0 && checked > 0, d.str()};
}

Outcome mechanism_distribution() {
  const std::size_t n = 4, draws = 100000;
  const double p = 0.9;
  std::vector<std::uint64_t> hist(1u << n, 0);
  double kept_sum = 0.0;
  const StreamKey key{2024, 0, Phase::prediction};
  for (std::size_t i = 0; i < draws; ++i) {
    CounterRng rng(key, i);
    const auto pat = sample_deletion_pattern(n, p, rng);
    std::size_t mask = 0;
    for (std::size_t k = 0; k < n; ++k) mask |= static_cast<std::size_t>(pat.indicators[k]) << k;
    ++hist[mask];
    kept_sum += static_cast<double>(n - pat.popcount());
  }
  double chi2 = 0.0;
  for (std::size_t m = 0; m < hist.size(); ++m) {
    const int deleted = std::popcount(m);
    const double q = std::pow(p, deleted) * std::pow(1.0 - p, static_cast<int>(n) - deleted);
    const double expected = q * draws;
    chi2 += (static_cast<double>(hist[m]) - expected) * (static_cast<double>(hist[m]) - expected) / expected;
  }
  const double critical = boost::math::quantile(boost::math::chi_squared(static_cast<double>(hist.size() - 1)), 0.99);
  const double mean = kept_sum / draws;
  const double sigma = std::sqrt(n * p * (1.0 - p) / draws);
  const double z = std::abs(mean - n * (1.0 - p)) / sigma;
  std::ostringstream d;
  d << "chi2 " << chi2 << " (critical " << critical << "), kept mean " << mean << " (" << z << " sigma)";
  return {chi2 < critical && z <= 3.0, d.str()};
}

Outcome textcrs_vacuity() {
  std::size_t bad = 0;
  for (std::size_t n = 1; n <= 100; ++n) {
    const std::size_t want = n <= 2 ? n : 0;
    bad += textcrs::max_certified_edit_radius(n, textcrs::CoverKind::deletion, textcrs::Rational(n)) != want;
    for (double ratio : {0.0, 0.25, 0.5, 0.9, 0.999}) {
      for (double d_star : {0.5, 1.0, 3.0}) {
        bad += textcrs::max_certified_edit_radius(n, textcrs::CoverKind::insertion, textcrs::Rational(n),
                                                  ratio * d_star, d_star) != 0;
      }
    }
  }
  std::ostringstream d;
  d << bad << " violations over n in 1..100";
  return {bad == 0, d.str()};
}

// Largest r with 0.9^r > 1 - m / 2, computed directly.
Radius floor_radius(double margin) {
  const long double threshold = 1.0L - static_cast<long double>(margin) / 2.0L;
  Radius r = 0;
  long double pw = 0.9L;
  while (pw > threshold) {
    ++r;
    pw *= 0.9L;
  }
  return r;
}

Outcome desk_experiment() {
  const auto t0 = Clock::now();
  const auto train = synthetic::keyword_dataset({.size = 2000, .seed = 1});
  const auto test = synthetic::keyword_dataset({.size = 500, .seed = 2});
  TrainOptions topt;
  topt.mechanism = {MechanismKind::deletion, 0.9};
  const auto model = train_builtin(train, topt);
  commands::RunConfig cfg;
  const auto records = commands::certify_dataset(model, test, cfg);
  const double secs = seconds_since(t0);

  std::size_t correct = 0, high = 0, floor_mismatch = 0, band = 0, band_not5 = 0, below5 = 0, literal = 0;
  const double upper_band = 2.0 - 2.0 * std::pow(0.9, 6);
  for (const auto& r : records) {
    correct += r.correct();
    const double m = r.mu_y - r.mu_yprime;
    if (r.abstained || m < 0.9) continue;
    ++high;
    const Radius full = r.radii[0];
    floor_mismatch += full != floor_radius(m);
    below5 += full < 5;
    literal += full != 5;
    if (m < upper_band) {
      ++band;
      band_not5 += full != 5;
    }
  }
  ScoreBounds at_boundary;
  at_boundary.mu_y = 0.95;
  at_boundary.mu_yprime = 0.05;
  const bool boundary_ok = certified_radius(at_boundary, 0.9, EditOpsSet::full()) == 5;
  const double acc = static_cast<double>(correct) / static_cast<double>(records.size());
  std::ostringstream d;
  d << "clean accuracy " << acc << ", " << high << " instances with margin >= 0.9 (" << band << " below "
    << upper_band << "), radius != floor: " << floor_mismatch << ", radius < 5: " << below5
    << ", band radius != 5: " << band_not5 << ", margin 0.9 radius 5: " << (boundary_ok ? "yes" : "no")
    << ", radius != 5 anywhere above 0.9: " << literal << ", " << secs << " s";
  const bool pass = acc >= 0.95 && high > 0 && floor_mismatch == 0 && below5 == 0 && band_not5 == 0 &&
                    boundary_ok && secs < 300.0;
  return {pass, d.str()};
}

Outcome attack_accounting() {
  const auto train =
      synthetic::keyword_dataset({.size = 300, .min_markers = 1, .max_markers = 2, .filler = 4, .seed = 5});
  TrainOptions topt;
  topt.mechanism = {MechanismKind::deletion, 0.5};
  const auto model = train_builtin(train, topt);
  const MechanismParams mech{MechanismKind::deletion, 0.5};
  SmoothedClassifierPredictor target(model, mech, 100, 42);
  const auto data =
      synthetic::keyword_dataset({.size = 100, .min_markers = 1, .max_markers = 3, .filler = 4, .seed = 6});
  AttackRecipe recipe;
  recipe.kind = AttackKind::greedy_edit;
  recipe.max_queries = 200;
  CandidateSource src;
  src.fallback = model.most_frequent_tokens(10);
  const auto r = run_attack(target, data, recipe, src, 42);

  const std::size_t succ = r.count(AttackStatus::success), fail = r.count(AttackStatus::fail),
                    skip = r.count(AttackStatus::skipped), tout = r.count(AttackStatus::timeout);
  const bool sums = succ + fail + skip + tout == 100 && r.outcomes.size() == 100 && r.harness_failures.empty();
  const bool robust = std::abs(robust_accuracy(r) - static_cast<double>(fail + tout) / 100.0) < 1e-15 &&
                      std::abs(r.robust_accuracy - robust_accuracy(r)) < 1e-15;
  std::size_t no_flip = 0;
  for (const auto& o : r.outcomes) {
    if (o.status != AttackStatus::success) continue;
    SmoothedClassifierPredictor fresh(model, mech, 100, 42);
    if (fresh.predict(tokenize(*o.adversarial_text)).label == o.clean_prediction) ++no_flip;
  }
  const auto t = transfer_attack(r, target);
  bool replay = t.outcomes.size() == succ;
  std::size_t k = 0;
  for (const auto& o : r.outcomes) {
    if (o.status == AttackStatus::success && replay) replay = t.outcomes[k++].instance == o.instance;
  }
  const bool transfer_zero = succ > 0 && robust_accuracy(t) == 0.0;
  std::ostringstream d;
  d << "success " << succ << ", fail " << fail << ", skipped " << skip << ", timeout " << tout << ", robust "
    << robust_accuracy(r) << ", non-flipping successes " << no_flip << ", transfer replays " << t.outcomes.size()
    << " with robust " << (t.outcomes.empty() ? 0.0 : robust_accuracy(t));
  return {sums && robust && no_flip == 0 && replay && transfer_zero, d.str()};
}

Outcome reproducibility() {
  const auto train = synthetic::keyword_dataset({.size = 300, .min_markers = 1, .max_markers = 6, .seed = 3});
  const auto test = synthetic::keyword_dataset({.size = 40, .min_markers = 1, .max_markers = 6, .seed = 4});
  TrainOptions topt;
  const auto model = train_builtin(train, topt);
  auto stream = [&](unsigned threads) {
    commands::RunConfig cfg;
    cfg.seed = 77;
    cfg.n_pred = 300;
    cfg.n_cert = 1000;
    cfg.threads = threads;
    std::ostringstream out;
    write_records(commands::certify_dataset(model, test, cfg), out);
    return out.str();
  };
  const auto a = stream(1), b = stream(1), c = stream(4);
  std::ostringstream d;
  d << "runs identical: " << (a == b ? "yes" : "no") << ", 1 vs 4 threads identical: " << (a == c ? "yes" : "no");
  return {a == b && a == c, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"certificate soundness (exhaustive)", soundness},
      {"pairwise score bounds (exhaustive)", pairwise},
      {"radius structure across ops sets", table_structure},
      {"confidence bound coverage", coverage},
      {"ball cardinality oracles", cardinalities},
      {"deletion mechanism distribution", mechanism_distribution},
      {"Text-CRS cover vacuity", textcrs_vacuity},
      {"end-to-end desk experiment", desk_experiment},
      {"attack protocol accounting", attack_accounting},
      {"certify reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
