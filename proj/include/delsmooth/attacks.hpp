#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "delsmooth/certify.hpp"
#include "delsmooth/classifier.hpp"
#include "delsmooth/edit_metrics.hpp"
#include "delsmooth/errors.hpp"
#include "delsmooth/mechanisms.hpp"
#include "delsmooth/parallel.hpp"
#include "delsmooth/rng.hpp"
#include "delsmooth/tokenization.hpp"

namespace delsmooth {

struct Prediction {
  Label label = 0;
  std::vector<double> scores;
};

// What an attacker may query: a label plus per-class confidence.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t num_classes() const = 0;
  virtual Prediction predict(const TokenSeq& x) const = 0;
};

// The undefended base classifier.
class BasePredictor final : public Predictor {
 public:
  explicit BasePredictor(const BaseClassifier& f) : f_(f) {}
  std::size_t num_classes() const override { return f_.num_classes(); }
  Prediction predict(const TokenSeq& x) const override {
    const std::string text = detokenize(x);
    Prediction p;
    p.scores = f_.class_scores(std::span<const std::string>(&text, 1)).front();
    p.label = argmax_lowest(std::span<const double>(p.scores));
    return p;
  }

 private:
  const BaseClassifier& f_;
};

// Monte Carlo smoothed classifier. The random stream is keyed on the run seed
// and the text itself, so re-querying the same text reproduces the answer.
class SmoothedClassifierPredictor final : public Predictor {
 public:
  SmoothedClassifierPredictor(const BaseClassifier& f, MechanismParams mech, std::size_t samples, std::uint64_t seed)
      : f_(f), mech_(std::move(mech)), samples_(samples), seed_(seed) {}

  std::size_t num_classes() const override { return f_.num_classes(); }
  Prediction predict(const TokenSeq& x) const override {
    const StreamKey key{seed_, fnv1a(detokenize(x)), Phase::attack};
    const auto sp = smoothed_predict(f_, x, mech_, samples_, key);
    Prediction p;
    p.label = sp.label;
    for (auto c : sp.estimate.counts) p.scores.push_back(static_cast<double>(c) / static_cast<double>(samples_));
    return p;
  }

 private:
  const BaseClassifier& f_;
  MechanismParams mech_;
  std::size_t samples_;
  std::uint64_t seed_;
};

enum class AttackKind { greedy_substitute, greedy_edit, char_perturb };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::greedy_substitute: return "greedy_substitute";
    case AttackKind::greedy_edit: return "greedy_edit";
    case AttackKind::char_perturb: return "char_perturb";
  }
  return "?";
}

inline AttackKind parse_attack_kind(std::string_view name) {
  if (name == "greedy_substitute") return AttackKind::greedy_substitute;
  if (name == "greedy_edit") return AttackKind::greedy_edit;
  if (name == "char_perturb") return AttackKind::char_perturb;
  throw UsageError("unknown attack recipe '" + std::string(name) + "'");
}

struct AttackRecipe {
  AttackKind kind = AttackKind::greedy_substitute;
  std::size_t candidates_per_position = 20;
  std::size_t max_queries = 10000;
  double timeout_seconds = 600.0;

  void validate() const {
    if (max_queries < 1) throw UsageError("max_queries must be at least 1");
    if (!(timeout_seconds > 0.0)) throw UsageError("timeout_seconds must be positive");
  }
};

enum class AttackStatus { success, fail, skipped, timeout };

inline std::string_view to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::success: return "success";
    case AttackStatus::fail: return "fail";
    case AttackStatus::skipped: return "skipped";
    case AttackStatus::timeout: return "timeout";
  }
  return "?";
}

inline AttackStatus parse_attack_status(std::string_view s) {
  if (s == "success") return AttackStatus::success;
  if (s == "fail") return AttackStatus::fail;
  if (s == "skipped") return AttackStatus::skipped;
  if (s == "timeout") return AttackStatus::timeout;
  throw DataError("unknown attack status '" + std::string(s) + "'");
}

struct AttackOutcome {
  std::size_t instance = 0;
  Label label = 0;
  std::string original_text;
  Label clean_prediction = 0;
  AttackStatus status = AttackStatus::fail;
  std::size_t queries_used = 0;
  std::optional<std::string> adversarial_text;  // present iff success
  std::optional<std::size_t> edit_distance_used;
};

// An instance the harness could not attack because the target failed.
struct HarnessFailure {
  std::size_t instance = 0;
  std::string message;
};

struct AttackReport {
  std::vector<AttackOutcome> outcomes;
  std::vector<HarnessFailure> harness_failures;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double mean_queries = 0.0;
  std::uint64_t seed = 0;

  std::size_t count(AttackStatus s) const {
    return static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [s](const AttackOutcome& o) { return o.status == s; }));
  }
};

// Fraction of attacked instances that survived: (fail + timeout) / total.
inline double robust_accuracy(const AttackReport& report) {
  if (report.outcomes.empty()) throw UsageError("robust accuracy of an empty report");
  return static_cast<double>(report.count(AttackStatus::fail) + report.count(AttackStatus::timeout)) /
         static_cast<double>(report.outcomes.size());
}

inline void summarize(AttackReport& report) {
  if (report.outcomes.empty()) {
    report.clean_accuracy = report.robust_accuracy = report.mean_queries = 0.0;
    return;
  }
  const auto total = static_cast<double>(report.outcomes.size());
  report.clean_accuracy = (total - static_cast<double>(report.count(AttackStatus::skipped))) / total;
  report.robust_accuracy = robust_accuracy(report);
  double q = 0.0;
  for (const auto& o : report.outcomes) q += static_cast<double>(o.queries_used);
  report.mean_queries = q / total;
}

// Substitution candidates: lexicon entries where present, otherwise a shared
// fallback list (by default the most frequent training tokens).
struct CandidateSource {
  std::map<std::string, std::vector<std::string>> lexicon;
  std::vector<std::string> fallback;

  const std::vector<std::string>& candidates_for(const std::string& token) const {
    auto it = lexicon.find(token);
    return it != lexicon.end() ? it->second : fallback;
  }
};

namespace detail {

// Greedy black-box attack on one instance. Works on original token positions:
// each slot holds its (possibly replaced or deleted) token and any tokens
// inserted in front of it.
class GreedyAttack {
 public:
  GreedyAttack(const Predictor& target, const AttackRecipe& recipe, const CandidateSource& source, StreamKey key)
      : target_(target), recipe_(recipe), source_(source), key_(key) {}

  AttackOutcome run(std::size_t instance, const LabeledText& item) {
    using clock = std::chrono::steady_clock;
    deadline_ = clock::now() + std::chrono::duration_cast<clock::duration>(
                                   std::chrono::duration<double>(recipe_.timeout_seconds));
    AttackOutcome out;
    out.instance = instance;
    out.label = item.label;
    out.original_text = item.text;
    orig_ = tokenize(item.text);
    orig_set_ = std::set<std::string>(orig_.tokens.begin(), orig_.tokens.end());
    slots_.assign(orig_.size(), Slot{});
    for (std::size_t i = 0; i < orig_.size(); ++i) slots_[i].token = orig_.tokens[i];

    ++queries_;
    const Prediction clean = target_.predict(orig_);
    out.clean_prediction = clean.label;
    const Label y = item.label;
    auto finish = [&](AttackStatus s) {
      out.status = s;
      out.queries_used = queries_;
      return out;
    };
    if (clean.label != y) return finish(AttackStatus::skipped);
    double current = clean.scores.at(y);

    // leave-one-out importance
    std::vector<double> importance(orig_.size(), 0.0);
    for (std::size_t i = 0; i < orig_.size(); ++i) {
      auto slots = slots_;
      slots[i].token.reset();
      const auto p = query(slots);
      if (!p) return finish(stop_status());
      importance[i] = current - p->scores.at(y);
      if (p->label != y && recipe_.kind == AttackKind::greedy_edit) return success(out, slots);
    }
    std::vector<std::size_t> order(orig_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });

    for (std::size_t pos : order) {
      std::optional<std::vector<Slot>> best;
      double best_score = current;
      for (auto& cand : candidates(pos)) {
        const auto p = query(cand);
        if (!p) return finish(stop_status());
        if (p->label != y) return success(out, cand);
        if (p->scores.at(y) < best_score) {
          best_score = p->scores.at(y);
          best = std::move(cand);
        }
      }
      if (best) {
        slots_ = std::move(*best);
        current = best_score;
      }
    }
    return finish(AttackStatus::fail);
  }

 private:
  struct Slot {
    std::vector<std::string> inserted_before;
    std::optional<std::string> token;
  };

  TokenSeq build(const std::vector<Slot>& slots) const {
    TokenSeq s;
    for (const auto& slot : slots) {
      s.tokens.insert(s.tokens.end(), slot.inserted_before.begin(), slot.inserted_before.end());
      if (slot.token) s.tokens.push_back(*slot.token);
    }
    return s;
  }

  bool timed_out() const { return std::chrono::steady_clock::now() >= deadline_; }
  AttackStatus stop_status() const { return stopped_by_timeout_ ? AttackStatus::timeout : AttackStatus::fail; }

  std::optional<Prediction> query(const std::vector<Slot>& slots) {
    if (timed_out()) {
      stopped_by_timeout_ = true;
      return std::nullopt;
    }
    if (queries_ >= recipe_.max_queries) return std::nullopt;
    ++queries_;
    return target_.predict(build(slots));
  }

  AttackOutcome& success(AttackOutcome& out, const std::vector<Slot>& slots) {
    const TokenSeq adv = build(slots);
    out.status = AttackStatus::success;
    out.queries_used = queries_;
    out.adversarial_text = detokenize(adv);
    out.edit_distance_used = edit_distance(orig_, tokenize(*out.adversarial_text));
    return out;
  }

  std::vector<std::string> substitutes(const std::string& token, bool novel_only) const {
    std::vector<std::string> out;
    for (const auto& c : source_.candidates_for(token)) {
      if (out.size() >= recipe_.candidates_per_position) break;
      if (c.empty() || c == token) continue;
      if (novel_only && orig_set_.count(c)) continue;
      if (tokenize(c).size() != 1) continue;
      out.push_back(c);
    }
    return out;
  }

  std::vector<std::string> char_variants(const std::string& token) {
    const TokenSeq chars = tokenize(token, Scheme::character);
    std::vector<std::string> all;
    auto join = [](const std::vector<std::string>& cs) {
      std::string s;
      for (const auto& c : cs) s += c;
      return s;
    };
    const std::size_t n = chars.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      auto cs = chars.tokens;
      std::swap(cs[i], cs[i + 1]);
      all.push_back(join(cs));
    }
    for (std::size_t i = 0; i < n && n > 1; ++i) {
      auto cs = chars.tokens;
      cs.erase(cs.begin() + static_cast<std::ptrdiff_t>(i));
      all.push_back(join(cs));
    }
    for (std::size_t i = 0; i <= n; ++i) {
      for (char c = 'a'; c <= 'z'; ++c) {
        auto cs = chars.tokens;
        cs.insert(cs.begin() + static_cast<std::ptrdiff_t>(i), std::string(1, c));
        all.push_back(join(cs));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (char c = 'a'; c <= 'z'; ++c) {
        auto cs = chars.tokens;
        cs[i] = std::string(1, c);
        all.push_back(join(cs));
      }
    }
    std::set<std::string> seen;
    std::vector<std::string> unique;
    for (auto& v : all) {
      if (v != token && seen.insert(v).second) unique.push_back(std::move(v));
    }
    // deterministic sample of candidates_per_position variants
    CounterRng rng(key_, rng_counter_++);
    const std::size_t k = std::min(recipe_.candidates_per_position, unique.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(unique[i], unique[i + static_cast<std::size_t>(rng.below(unique.size() - i))]);
    }
    unique.resize(k);
    return unique;
  }

  std::vector<std::vector<Slot>> candidates(std::size_t pos) {
    std::vector<std::vector<Slot>> out;
    const auto& slot = slots_[pos];
    if (recipe_.kind == AttackKind::char_perturb) {
      if (!slot.token) return out;
      for (auto& v : char_variants(*slot.token)) {
        out.push_back(slots_);
        out.back()[pos].token = std::move(v);
      }
      return out;
    }
    if (slot.token) {
      const bool novel = recipe_.kind == AttackKind::greedy_substitute;
      for (auto& c : substitutes(*slot.token, novel)) {
        out.push_back(slots_);
        out.back()[pos].token = std::move(c);
      }
    }
    if (recipe_.kind == AttackKind::greedy_edit) {
      if (slot.token) {
        out.push_back(slots_);
        out.back()[pos].token.reset();
      }
      for (auto& c : substitutes(orig_.tokens[pos], false)) {
        out.push_back(slots_);
        out.back()[pos].inserted_before.push_back(std::move(c));
      }
    }
    return out;
  }

  const Predictor& target_;
  const AttackRecipe& recipe_;
  const CandidateSource& source_;
  StreamKey key_;
  std::uint64_t rng_counter_ = 0;
  TokenSeq orig_;
  std::set<std::string> orig_set_;
  std::vector<Slot> slots_;
  std::size_t queries_ = 0;
  bool stopped_by_timeout_ = false;
  std::chrono::steady_clock::time_point deadline_;
};

}  // namespace detail

// Direct attack: skip instances the target already gets wrong, rank token
// positions by how much deleting each lowers the true-class score, then
// greedily apply the recipe's perturbations position by position until the
// label flips, the query budget runs out or the per-instance deadline passes.
inline AttackReport run_attack(const Predictor& target, const LabeledDataset& data, const AttackRecipe& recipe,
                               const CandidateSource& source, std::uint64_t seed, unsigned threads = 1) {
  recipe.validate();
  std::vector<std::optional<AttackOutcome>> slots(data.items.size());
  std::vector<std::optional<std::string>> errors(data.items.size());
  parallel_for(data.items.size(), threads, [&](std::size_t i) {
    try {
      detail::GreedyAttack attack(target, recipe, source, StreamKey{seed, i, Phase::attack});
      slots[i] = attack.run(i, data.items[i]);
    } catch (const TransportError& e) {
      errors[i] = e.what();
    }
  });
  AttackReport report;
  report.seed = seed;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) report.outcomes.push_back(std::move(*slots[i]));
    if (errors[i]) report.harness_failures.push_back({i, *errors[i]});
  }
  summarize(report);
  return report;
}

// Transfer attack: replay every successful adversarial text from a source
// report against a new target. The transferred set holds exactly the source
// successes; instances the target misclassifies clean are skipped.
inline AttackReport transfer_attack(const AttackReport& source, const Predictor& target, unsigned threads = 1) {
  std::vector<const AttackOutcome*> successes;
  for (const auto& o : source.outcomes) {
    if (o.status == AttackStatus::success) successes.push_back(&o);
  }
  std::vector<std::optional<AttackOutcome>> slots(successes.size());
  std::vector<std::optional<std::string>> errors(successes.size());
  parallel_for(successes.size(), threads, [&](std::size_t k) {
    const AttackOutcome& src = *successes[k];
    if (!src.adversarial_text) throw DataError("source success without adversarial text");
    try {
      AttackOutcome o;
      o.instance = src.instance;
      o.label = src.label;
      o.original_text = src.original_text;
      o.queries_used = 1;
      o.clean_prediction = target.predict(tokenize(src.original_text)).label;
      if (o.clean_prediction != src.label) {
        o.status = AttackStatus::skipped;
      } else {
        o.queries_used = 2;
        const Label adv = target.predict(tokenize(*src.adversarial_text)).label;
        if (adv != src.label) {
          o.status = AttackStatus::success;
          o.adversarial_text = src.adversarial_text;
          o.edit_distance_used = src.edit_distance_used;
        } else {
          o.status = AttackStatus::fail;
        }
      }
      slots[k] = std::move(o);
    } catch (const TransportError& e) {
      errors[k] = e.what();
    }
  });
  AttackReport report;
  report.seed = source.seed;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k]) report.outcomes.push_back(std::move(*slots[k]));
    if (errors[k]) report.harness_failures.push_back({successes[k]->instance, *errors[k]});
  }
  summarize(report);
  return report;
}

}  // namespace delsmooth
