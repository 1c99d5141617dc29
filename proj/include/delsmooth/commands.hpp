#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "delsmooth/attacks.hpp"
#include "delsmooth/certify.hpp"
#include "delsmooth/classifier.hpp"
#include "delsmooth/dataset_io.hpp"
#include "delsmooth/edit_metrics.hpp"
#include "delsmooth/errors.hpp"
#include "delsmooth/external.hpp"
#include "delsmooth/model_io.hpp"
#include "delsmooth/parallel.hpp"
#include "delsmooth/report.hpp"
#include "delsmooth/textcrs.hpp"

// Command implementations behind the delsmooth executable. Each takes the
// parsed run configuration and writes its tables to the given streams.
namespace delsmooth::commands {

struct RunConfig {
  MechanismParams mechanism;
  std::size_t n_pred = 1000;
  std::size_t n_cert = 4000;
  double alpha = 0.05;
  BoundMode bound_mode = BoundMode::bonferroni_cp;
  std::size_t prediction_samples = 100;
  std::uint64_t vocab_size = 50265;
  std::uint64_t seed = 0;
  EditOpsSet ops = EditOpsSet::full();
  double timeout_seconds = 600.0;
  std::size_t max_queries = 10000;
  std::string external_cmd;
  std::size_t num_classes = 2;
  unsigned threads = 1;
};

// The base classifier: a model file, or the external command when one is set.
inline std::unique_ptr<BaseClassifier> open_classifier(const RunConfig& cfg,
                                                       const std::optional<std::filesystem::path>& model) {
  if (!cfg.external_cmd.empty()) {
    return std::make_unique<ExternalClassifier>(cfg.external_cmd, cfg.num_classes, std::max(1u, cfg.threads));
  }
  if (!model) throw UsageError("either --model or --external-cmd is required");
  return load_classifier(*model);
}

inline LabeledDataset load_for(const BaseClassifier& f, const std::filesystem::path& path) {
  return load_dataset(path, f.num_classes());
}

struct TrainArgs {
  std::filesystem::path data;
  std::filesystem::path out;
  std::size_t samples_per_instance = 8;
  Scheme scheme = Scheme::whitespace;
  double smoothing = 1.0;
};

inline BuiltinModel train(const RunConfig& cfg, const TrainArgs& args) {
  const auto data = load_dataset(args.data, cfg.num_classes);
  TrainOptions opt;
  opt.mechanism = cfg.mechanism;
  opt.samples_per_instance = args.samples_per_instance;
  opt.seed = cfg.seed;
  opt.scheme = args.scheme;
  opt.smoothing = args.smoothing;
  auto model = train_builtin(data, opt);
  write_json_file(model_to_json(model, opt), args.out);
  return model;
}

// Per-instance smoothed predictions: instance,label,predicted,votes,num_samples.
inline void predict(const BaseClassifier& f, const LabeledDataset& data, const RunConfig& cfg, std::ostream& out) {
  cfg.mechanism.validate();
  std::vector<SmoothedPrediction> preds(data.items.size());
  parallel_for(data.items.size(), cfg.threads, [&](std::size_t i) {
    preds[i] = smoothed_predict(f, tokenize(data.items[i].text), cfg.mechanism, cfg.n_pred,
                                StreamKey{cfg.seed, i, Phase::prediction});
  });
  out << "instance,label,predicted,votes,num_samples\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out << i << ',' << data.items[i].label << ',' << preds[i].label << ','
        << preds[i].estimate.counts[preds[i].label] << ',' << preds[i].estimate.num_samples << '\n';
  }
}

// One record per instance, in instance order whatever the thread count.
inline std::vector<CertRecord> certify_dataset(const BaseClassifier& f, const LabeledDataset& data,
                                               const RunConfig& cfg) {
  if (data.items.empty()) throw DataError("empty test set");
  CertifyOptions opt;
  opt.n_pred = cfg.n_pred;
  opt.n_cert = cfg.n_cert;
  opt.alpha = cfg.alpha;
  opt.mode = cfg.bound_mode;
  opt.vocab_size = cfg.vocab_size;
  std::vector<CertRecord> records(data.items.size());
  parallel_for(data.items.size(), cfg.threads, [&](std::size_t i) {
    const auto c = certify(f, tokenize(data.items[i].text), cfg.mechanism, opt, cfg.seed, i);
    records[i] = make_record(i, data.items[i].label, c);
  });
  return records;
}

// Thresholds 0, 1, ... up to the largest log10 cardinality rounded up.
inline std::vector<double> default_thresholds(const std::vector<CertRecord>& records) {
  double hi = 0.0;
  for (const auto& r : records) hi = std::max(hi, r.log10_cardinality);
  std::vector<double> t;
  for (double c = 0.0; c <= std::ceil(hi) + 1.0; c += 1.0) t.push_back(c);
  return t;
}

struct CardinalityArgs {
  std::vector<std::string> measures = {"hamming", "lev-lower"};
  std::size_t length = 0;
  std::size_t radius = 1;
  std::optional<std::string> text;  // needed by lev-exact
};

// Rows measure,length,vocab_size,radius,count,log10_count.
inline void cardinality(const RunConfig& cfg, const CardinalityArgs& args, std::ostream& out) {
  std::optional<TokenSeq> x;
  std::size_t n = args.length;
  if (args.text) {
    x = tokenize(*args.text);
    n = x->size();
  }
  out << "measure,length,vocab_size,radius,count,log10_count\n";
  for (const auto& m : args.measures) {
    BigInt count;
    const CardinalityParams p{cfg.vocab_size, args.radius, n};
    if (m == "hamming") {
      count = hamming_ball_cardinality(p);
    } else if (m == "lev-lower") {
      count = lev_ball_cardinality_lower_bound(p);
    } else if (m == "lev-exact") {
      if (!x) throw UsageError("lev-exact needs --text");
      count = lev_ball_cardinality_exact(*x, cfg.vocab_size, args.radius);
    } else {
      throw UsageError("unknown measure '" + m + "' (hamming, lev-lower, lev-exact)");
    }
    out << m << ',' << n << ',' << cfg.vocab_size << ',' << args.radius << ',' << count.str() << ','
        << format_double(log10_big(count)) << '\n';
  }
}

struct TextcrsArgs {
  std::size_t n_min = 1;
  std::size_t n_max = 1;
  textcrs::CoverKind kind = textcrs::CoverKind::deletion;
  std::optional<double> r_R_cap;  // defaults to n
  std::optional<double> r_I_cap;
  double d_star = 1.0;
};

inline textcrs::Rational to_rational(double v) {
  if (!(v >= 0.0) || v > 1e12) throw UsageError("cap must be a nonnegative number below 1e12");
  const double scaled = std::round(v * 1e6);
  return textcrs::Rational(static_cast<std::int64_t>(scaled), 1000000);
}

// Rows n,kind,r_R_cap,r_I_cap,d_star,max_edit_radius.
inline void textcrs_table(const TextcrsArgs& args, std::ostream& out) {
  if (args.n_min < 1 || args.n_max < args.n_min) throw UsageError("need 1 <= n-min <= n-max");
  out << "n,kind,r_R_cap,r_I_cap,d_star,max_edit_radius\n";
  for (std::size_t n = args.n_min; n <= args.n_max; ++n) {
    const double cap = args.r_R_cap.value_or(static_cast<double>(n));
    const auto r = textcrs::max_certified_edit_radius(n, args.kind, to_rational(cap), args.r_I_cap, args.d_star);
    out << n << ',' << textcrs::to_string(args.kind) << ',' << format_double(cap) << ','
        << (args.r_I_cap ? format_double(*args.r_I_cap) : "") << ',' << format_double(args.d_star) << ',' << r
        << '\n';
  }
}

struct AttackArgs {
  AttackKind recipe = AttackKind::greedy_substitute;
  std::size_t candidates_per_position = 20;
  bool smoothed = true;
  std::optional<std::filesystem::path> lexicon;
  std::optional<std::filesystem::path> train;  // source of fallback candidates
};

inline std::unique_ptr<Predictor> make_predictor(const BaseClassifier& f, const RunConfig& cfg, bool smoothed) {
  if (!smoothed) return std::make_unique<BasePredictor>(f);
  cfg.mechanism.validate();
  return std::make_unique<SmoothedClassifierPredictor>(f, cfg.mechanism, cfg.prediction_samples, cfg.seed);
}

// The k most frequent whitespace tokens, ties broken lexicographically.
inline std::vector<std::string> frequent_tokens(const LabeledDataset& data, std::size_t k) {
  std::map<std::string, std::size_t> freq;
  for (const auto& it : data.items) {
    for (const auto& t : tokenize(it.text).tokens) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> v(freq.begin(), freq.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size() && i < k; ++i) out.push_back(v[i].first);
  return out;
}

inline CandidateSource candidate_source(const BaseClassifier& f, const LabeledDataset& attacked,
                                        const AttackArgs& args) {
  CandidateSource src;
  if (args.lexicon) src.lexicon = load_lexicon(*args.lexicon);
  if (args.train) {
    src.fallback = frequent_tokens(load_dataset(*args.train, f.num_classes()), args.candidates_per_position);
  } else if (const auto* m = dynamic_cast<const BuiltinModel*>(&f)) {
    src.fallback = m->most_frequent_tokens(args.candidates_per_position);
  } else {
    src.fallback = frequent_tokens(attacked, args.candidates_per_position);
  }
  return src;
}

inline AttackReport attack(const BaseClassifier& f, const LabeledDataset& data, const RunConfig& cfg,
                           const AttackArgs& args) {
  AttackRecipe recipe;
  recipe.kind = args.recipe;
  recipe.candidates_per_position = args.candidates_per_position;
  recipe.max_queries = cfg.max_queries;
  recipe.timeout_seconds = cfg.timeout_seconds;
  recipe.validate();
  const auto target = make_predictor(f, cfg, args.smoothed);
  return run_attack(*target, data, recipe, candidate_source(f, data, args), cfg.seed, cfg.threads);
}

inline AttackReport transfer(const BaseClassifier& f, const AttackReport& source, const RunConfig& cfg,
                             bool smoothed) {
  const auto target = make_predictor(f, cfg, smoothed);
  return transfer_attack(source, *target, cfg.threads);
}

}  // namespace delsmooth::commands
