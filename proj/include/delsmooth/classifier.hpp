#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "delsmooth/errors.hpp"
#include "delsmooth/mechanisms.hpp"
#include "delsmooth/rng.hpp"
#include "delsmooth/tokenization.hpp"

namespace delsmooth {

using Label = std::size_t;

struct LabeledText {
  std::string text;
  Label label = 0;
};

struct LabeledDataset {
  std::vector<LabeledText> items;
  std::size_t num_classes = 2;

  void validate() const {
    if (num_classes < 2) throw DataError("a dataset needs at least two classes");
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].label >= num_classes) {
        throw DataError("item " + std::to_string(i) + " has label " + std::to_string(items[i].label) +
                        " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }
};

// Index of the largest value; ties go to the lowest index.
template <typename T>
std::size_t argmax_lowest(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

// Black-box base classifier. Implementations must be deterministic in the
// text and safe to call concurrently through const methods.
class BaseClassifier {
 public:
  virtual ~BaseClassifier() = default;

  virtual std::size_t num_classes() const = 0;
  virtual std::vector<Label> classify_batch(std::span<const std::string> texts) const = 0;

  // Per-class confidence; classifiers without one report a one-hot vector.
  virtual std::vector<std::vector<double>> class_scores(std::span<const std::string> texts) const {
    const auto labels = classify_batch(texts);
    std::vector<std::vector<double>> out(labels.size(), std::vector<double>(num_classes(), 0.0));
    for (std::size_t i = 0; i < labels.size(); ++i) out[i][labels[i]] = 1.0;
    return out;
  }

  Label classify(const std::string& text) const {
    return classify_batch(std::span<const std::string>(&text, 1)).front();
  }
};

class ConstantClassifier final : public BaseClassifier {
 public:
  ConstantClassifier(Label label, std::size_t num_classes) : label_(label), classes_(num_classes) {
    if (label >= num_classes) throw UsageError("constant label outside class range");
  }
  std::size_t num_classes() const override { return classes_; }
  std::vector<Label> classify_batch(std::span<const std::string> texts) const override {
    return std::vector<Label>(texts.size(), label_);
  }
  Label label() const { return label_; }

 private:
  Label label_;
  std::size_t classes_;
};

// Ordered keyword rules over whitespace tokens: the first rule whose token
// occurs in the text decides the class, otherwise the fallback class.
class KeywordClassifier final : public BaseClassifier {
 public:
  struct Rule {
    std::string token;
    Label label;
  };

  KeywordClassifier(std::vector<Rule> rules, Label fallback, std::size_t num_classes)
      : rules_(std::move(rules)), fallback_(fallback), classes_(num_classes) {
    if (fallback >= num_classes) throw UsageError("fallback label outside class range");
    for (const auto& r : rules_) {
      if (r.label >= num_classes) throw UsageError("keyword rule label outside class range");
    }
  }

  std::size_t num_classes() const override { return classes_; }

  std::vector<Label> classify_batch(std::span<const std::string> texts) const override {
    std::vector<Label> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(classify_tokens(tokenize(t).tokens));
    return out;
  }

  Label classify_tokens(const std::vector<std::string>& tokens) const {
    for (const auto& rule : rules_) {
      if (std::find(tokens.begin(), tokens.end(), rule.token) != tokens.end()) return rule.label;
    }
    return fallback_;
  }

  const std::vector<Rule>& rules() const { return rules_; }
  Label fallback() const { return fallback_; }

 private:
  std::vector<Rule> rules_;
  Label fallback_;
  std::size_t classes_;
};

// Multinomial bag-of-tokens model with additive smoothing on the token
// likelihoods and maximum-likelihood class priors. Tokens outside the
// training vocabulary are ignored at prediction time.
class BuiltinModel final : public BaseClassifier {
 public:
  BuiltinModel() = default;

  BuiltinModel(Scheme scheme, std::vector<std::string> vocab, std::vector<std::uint64_t> doc_counts,
               std::vector<std::vector<std::uint64_t>> token_counts, double smoothing)
      : scheme_(scheme),
        vocab_(std::move(vocab)),
        doc_counts_(std::move(doc_counts)),
        token_counts_(std::move(token_counts)),
        smoothing_(smoothing) {
    finalize();
  }

  std::size_t num_classes() const override { return doc_counts_.size(); }

  std::vector<Label> classify_batch(std::span<const std::string> texts) const override {
    std::vector<Label> out;
    out.reserve(texts.size());
    std::vector<double> s;
    for (const auto& t : texts) {
      log_joint(tokenize(t, scheme_), s);
      out.push_back(argmax_lowest(std::span<const double>(s)));
    }
    return out;
  }

  std::vector<std::vector<double>> class_scores(std::span<const std::string> texts) const override {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    std::vector<double> s;
    for (const auto& t : texts) {
      log_joint(tokenize(t, scheme_), s);
      const double top = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double& v : s) z += (v = std::isinf(v) ? 0.0 : std::exp(v - top));
      for (double& v : s) v /= z;
      out.push_back(s);
    }
    return out;
  }

  // Unnormalized log P(c) + sum log P(t | c) over in-vocabulary tokens.
  void log_joint(const TokenSeq& seq, std::vector<double>& out) const {
    out = log_prior_;
    const std::size_t v = vocab_.size();
    for (const auto& tok : seq.tokens) {
      auto it = index_.find(tok);
      if (it == index_.end()) continue;
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += log_likelihood_[c * v + it->second];
    }
  }

  double token_probability(Label c, const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw UsageError("token '" + token + "' is outside the model vocabulary");
    return std::exp(log_likelihood_[c * vocab_.size() + it->second]);
  }

  Scheme scheme() const { return scheme_; }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<std::uint64_t>& doc_counts() const { return doc_counts_; }
  const std::vector<std::vector<std::uint64_t>>& token_counts() const { return token_counts_; }
  double smoothing() const { return smoothing_; }

  // Training tokens ranked by total count (ties alphabetical), most frequent first.
  std::vector<std::string> most_frequent_tokens(std::size_t k) const {
    std::vector<std::pair<std::uint64_t, std::size_t>> totals;
    for (std::size_t t = 0; t < vocab_.size(); ++t) {
      std::uint64_t sum = 0;
      for (const auto& row : token_counts_) sum += row[t];
      totals.emplace_back(sum, t);
    }
    std::stable_sort(totals.begin(), totals.end(), [](auto a, auto b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, totals.size()); ++i) out.push_back(vocab_[totals[i].second]);
    return out;
  }

  friend bool operator==(const BuiltinModel& a, const BuiltinModel& b) {
    return a.scheme_ == b.scheme_ && a.vocab_ == b.vocab_ && a.doc_counts_ == b.doc_counts_ &&
           a.token_counts_ == b.token_counts_ && a.smoothing_ == b.smoothing_;
  }

 private:
  void finalize() {
    const std::size_t classes = doc_counts_.size();
    const std::size_t v = vocab_.size();
    if (token_counts_.size() != classes) throw DataError("model token counts do not match class count");
    index_.clear();
    for (std::size_t t = 0; t < v; ++t) index_.emplace(vocab_[t], t);
    std::uint64_t docs = 0;
    for (auto d : doc_counts_) docs += d;
    log_prior_.assign(classes, 0.0);
    log_likelihood_.assign(classes * v, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      if (token_counts_[c].size() != v) throw DataError("model token counts do not match vocabulary size");
      log_prior_[c] = doc_counts_[c] == 0 ? -std::numeric_limits<double>::infinity()
                                          : std::log(static_cast<double>(doc_counts_[c]) / static_cast<double>(docs));
      std::uint64_t total = 0;
      for (auto n : token_counts_[c]) total += n;
      const double denom = static_cast<double>(total) + smoothing_ * static_cast<double>(v);
      for (std::size_t t = 0; t < v; ++t) {
        log_likelihood_[c * v + t] = std::log((static_cast<double>(token_counts_[c][t]) + smoothing_) / denom);
      }
    }
  }

  Scheme scheme_ = Scheme::whitespace;
  std::vector<std::string> vocab_;
  std::vector<std::uint64_t> doc_counts_;
  std::vector<std::vector<std::uint64_t>> token_counts_;
  double smoothing_ = 1.0;

  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> log_prior_;
  std::vector<double> log_likelihood_;
};

struct TrainOptions {
  MechanismParams mechanism;
  std::size_t samples_per_instance = 8;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::whitespace;
  double smoothing = 1.0;
};

// Fits the builtin model on perturbed copies of every training text. An
// identity mechanism yields identical copies, so a single copy is used and
// the result equals clean training.
inline BuiltinModel train_builtin(const LabeledDataset& data, const TrainOptions& opt) {
  if (data.items.empty()) throw DataError("cannot train on an empty dataset");
  data.validate();
  if (opt.samples_per_instance < 1) throw UsageError("samples_per_instance must be at least 1");
  opt.mechanism.validate();
  std::set<Label> seen;
  for (const auto& it : data.items) seen.insert(it.label);
  if (seen.size() < 2) throw DataError("training data contains a single class");

  const std::size_t copies = opt.mechanism.is_identity() ? 1 : opt.samples_per_instance;
  const std::size_t classes = data.num_classes;
  std::vector<std::uint64_t> docs(classes, 0);
  std::map<std::string, std::vector<std::uint64_t>> counts;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& item = data.items[i];
    const TokenSeq clean = tokenize(item.text, opt.scheme);
    const StreamKey key{opt.seed, i, Phase::training};
    for (std::size_t s = 0; s < copies; ++s) {
      CounterRng rng(key, s);
      const TokenSeq noisy = opt.mechanism.is_identity() ? clean : perturb(clean, opt.mechanism, rng);
      ++docs[item.label];
      for (const auto& tok : noisy.tokens) {
        auto& row = counts[tok];
        if (row.empty()) row.assign(classes, 0);
        ++row[item.label];
      }
    }
  }
  std::vector<std::string> vocab;
  std::vector<std::vector<std::uint64_t>> token_counts(classes);
  for (auto& row : token_counts) row.reserve(counts.size());
  for (const auto& [tok, row] : counts) {
    vocab.push_back(tok);
    for (std::size_t c = 0; c < classes; ++c) token_counts[c].push_back(row[c]);
  }
  return BuiltinModel(opt.scheme, std::move(vocab), std::move(docs), std::move(token_counts), opt.smoothing);
}

}  // namespace delsmooth
