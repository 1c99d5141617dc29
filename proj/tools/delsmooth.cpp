#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "delsmooth/commands.hpp"

namespace fs = std::filesystem;
using namespace delsmooth;
using commands::RunConfig;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kGuard = 4 };

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_.open(path, std::ios::binary);
    if (!file_) throw DataError("cannot open '" + path + "' for writing");
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<double> parse_thresholds(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(item, "--thresholds"));
  return out;
}

struct Shared {
  std::string mechanism = "deletion";
  double rate = 0.9;
  std::string mask_token = "[MASK]";
  std::string ops = "dis";
  std::string bound_mode = "bonferroni-cp";
  RunConfig cfg;

  RunConfig resolve() {
    RunConfig c = cfg;
    c.mechanism.kind = parse_mechanism(mechanism);
    c.mechanism.rate = rate;
    c.mechanism.mask_token = mask_token;
    c.ops = parse_ops(ops);
    c.bound_mode = parse_bound_mode(bound_mode);
    if (c.threads == 0) c.threads = default_threads();
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
    if (c.n_pred < 1 || c.n_cert < 1 || c.prediction_samples < 1) throw UsageError("sample sizes must be positive");
    return c;
  }
};

void add_shared(CLI::App& app, Shared& s) {
  app.add_option("--mechanism", s.mechanism, "deletion or masking")->capture_default_str();
  app.add_option("--rate", s.rate, "deletion or masking rate")->capture_default_str();
  app.add_option("--mask-token", s.mask_token, "replacement token of the masking mechanism")->capture_default_str();
  app.add_option("--n-pred", s.cfg.n_pred, "Monte Carlo samples for prediction")->capture_default_str();
  app.add_option("--n-cert", s.cfg.n_cert, "Monte Carlo samples for the certificate")->capture_default_str();
  app.add_option("--alpha", s.cfg.alpha, "joint failure probability of the score bounds")->capture_default_str();
  app.add_option("--bound-mode", s.bound_mode, "bonferroni-cp or complement")->capture_default_str();
  app.add_option("--prediction-samples", s.cfg.prediction_samples, "Monte Carlo samples per attack query")
      ->capture_default_str();
  app.add_option("--ops", s.ops, "edit operations: dis, d, i, s, di, ds or is")->capture_default_str();
  app.add_option("--vocab-size", s.cfg.vocab_size, "vocabulary size for cardinalities")->capture_default_str();
  app.add_option("--seed", s.cfg.seed, "random seed")->capture_default_str();
  app.add_option("--timeout-seconds", s.cfg.timeout_seconds, "per-instance attack timeout")->capture_default_str();
  app.add_option("--max-queries", s.cfg.max_queries, "per-instance attack query budget")->capture_default_str();
  app.add_option("--external-cmd", s.cfg.external_cmd, "command of a line-protocol classifier");
  app.add_option("--num-classes", s.cfg.num_classes, "class count of datasets and external classifiers")
      ->capture_default_str();
  app.add_option("--threads", s.cfg.threads, "worker threads (0: all cores)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified robustness of text classifiers under edit-distance attacks, via randomized deletion"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key=value file; flags given on the command line take precedence");
  Shared shared;
  add_shared(app, shared);

  std::optional<fs::path> model;
  std::string out_path, data_path;

  auto* train = app.add_subcommand("train", "train a model file")->fallthrough();
  commands::TrainArgs targs;
  std::string kind = "builtin", scheme = "whitespace";
  std::vector<std::string> rules;
  std::size_t constant_label = 0, fallback = 0;
  train->add_option("--kind", kind, "builtin, constant or keyword")->capture_default_str();
  train->add_option("--data", data_path, "training dataset (.jsonl or .csv)");
  train->add_option("--out", out_path, "model file to write")->required();
  train->add_option("--samples-per-instance", targs.samples_per_instance, "perturbed copies per training text")
      ->capture_default_str();
  train->add_option("--scheme", scheme, "whitespace or character tokens")->capture_default_str();
  train->add_option("--smoothing", targs.smoothing, "additive smoothing")->capture_default_str();
  train->add_option("--label", constant_label, "label of a constant model")->capture_default_str();
  train->add_option("--rule", rules, "keyword rule token=label, first match wins");
  train->add_option("--fallback", fallback, "label of a keyword model when no rule matches")->capture_default_str();

  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", model, "model file");
    sub->add_option("--data", data_path, "dataset (.jsonl or .csv)")->required();
    sub->add_option("--out", out_path, "output table (default stdout)");
  };

  auto* predict = app.add_subcommand("predict", "smoothed predictions")->fallthrough();
  add_model(predict);

  auto* certify = app.add_subcommand("certify", "certified radii and cardinalities")->fallthrough();
  add_model(certify);
  std::string summary_path;
  certify->add_option("--summary", summary_path, "summary table (default stderr)");

  auto* curve = app.add_subcommand("curve", "certified accuracy against log10 cardinality")->fallthrough();
  std::string records_path, thresholds;
  curve->add_option("--records", records_path, "records written by certify")->required();
  curve->add_option("--thresholds", thresholds, "comma-separated log10 cardinality thresholds");
  curve->add_option("--out", out_path, "output table (default stdout)");

  auto* card = app.add_subcommand("cardinality", "edit ball cardinalities")->fallthrough();
  commands::CardinalityArgs cargs;
  std::optional<std::string> measure_list;
  card->add_option("--length", cargs.length, "sequence length")->capture_default_str();
  card->add_option("--radius", cargs.radius, "ball radius")->capture_default_str();
  card->add_option("--text", cargs.text, "centre text, required by lev-exact");
  card->add_option("--measure", measure_list, "comma-separated: hamming, lev-lower, lev-exact");
  card->add_option("--out", out_path, "output table (default stdout)");

  auto* crs = app.add_subcommand("textcrs", "largest edit radius certifiable through Text-CRS covers")->fallthrough();
  commands::TextcrsArgs xargs;
  std::string cover = "deletion";
  std::optional<std::size_t> n_single;
  crs->add_option("--n", n_single, "sequence length");
  crs->add_option("--n-min", xargs.n_min, "first length of a range")->capture_default_str();
  crs->add_option("--n-max", xargs.n_max, "last length of a range")->capture_default_str();
  crs->add_option("--cover", cover, "deletion or insertion")->capture_default_str();
  crs->add_option("--r-r-cap", xargs.r_R_cap, "permutation radius cap (default n)");
  crs->add_option("--r-i-cap", xargs.r_I_cap, "l2 perturbation radius cap");
  crs->add_option("--d-star", xargs.d_star, "largest embedding distance")->capture_default_str();
  crs->add_option("--out", out_path, "output table (default stdout)");

  auto* atk = app.add_subcommand("attack", "direct attack against a target")->fallthrough();
  add_model(atk);
  commands::AttackArgs aargs;
  std::string recipe = "greedy_substitute", target = "smoothed", report_json;
  std::optional<fs::path> lexicon, train_data;
  atk->add_option("--recipe", recipe, "greedy_substitute, greedy_edit or char_perturb")->capture_default_str();
  atk->add_option("--candidates-per-position", aargs.candidates_per_position, "substitution candidates tried")
      ->capture_default_str();
  atk->add_option("--target", target, "smoothed or base")->capture_default_str();
  atk->add_option("--lexicon", lexicon, "token<TAB>cand1,cand2 file");
  atk->add_option("--train", train_data, "dataset supplying fallback candidates");
  atk->add_option("--report-json", report_json, "full report for the transfer command");

  auto* tr = app.add_subcommand("transfer", "replay successful adversarial texts against a new target")->fallthrough();
  std::string source_report;
  tr->add_option("--model", model, "target model file");
  tr->add_option("--source-report", source_report, "JSON report of the attack command")->required();
  tr->add_option("--target", target, "smoothed or base")->capture_default_str();
  tr->add_option("--out", out_path, "output table (default stdout)");
  tr->add_option("--report-json", report_json, "full report of the transfer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    RunConfig cfg = shared.resolve();
    auto parse_target = [&] {
      if (target != "smoothed" && target != "base") throw UsageError("--target must be smoothed or base");
      return target == "smoothed";
    };
    auto write_attack = [&](const AttackReport& report) {
      Output out(out_path);
      write_attack_csv(report, out.stream());
      write_attack_summary(report, std::cerr);
      for (const auto& h : report.harness_failures) {
        std::cerr << "harness failure on instance " << h.instance << ": " << h.message << '\n';
      }
      if (!report_json.empty()) write_json_file(attack_report_to_json(report), report_json);
    };

    if (*train) {
      targs.out = out_path;
      targs.scheme = parse_scheme(scheme);
      if (kind == "builtin") {
        if (data_path.empty()) throw UsageError("train --kind builtin needs --data");
        targs.data = data_path;
        commands::train(cfg, targs);
      } else if (kind == "constant") {
        if (constant_label >= cfg.num_classes) throw UsageError("--label outside class range");
        write_json_file(constant_model_json(constant_label, cfg.num_classes), out_path);
      } else if (kind == "keyword") {
        std::vector<KeywordClassifier::Rule> parsed;
        for (const auto& r : rules) {
          const auto eq = r.rfind('=');
          if (eq == std::string::npos || eq == 0) throw UsageError("--rule expects token=label, got '" + r + "'");
          try {
            parsed.push_back({r.substr(0, eq), static_cast<Label>(std::stoul(r.substr(eq + 1)))});
          } catch (const std::logic_error&) {
            throw UsageError("--rule expects token=label, got '" + r + "'");
          }
        }
        write_json_file(keyword_model_json(KeywordClassifier(parsed, fallback, cfg.num_classes)), out_path);
      } else {
        throw UsageError("unknown model kind '" + kind + "'");
      }
    } else if (*predict) {
      const auto f = commands::open_classifier(cfg, model);
      const auto data = commands::load_for(*f, data_path);
      Output out(out_path);
      commands::predict(*f, data, cfg, out.stream());
    } else if (*certify) {
      const auto f = commands::open_classifier(cfg, model);
      const auto data = commands::load_for(*f, data_path);
      const auto records = commands::certify_dataset(*f, data, cfg);
      Output out(out_path);
      write_records(records, out.stream());
      const auto summary = summarize_records(records);
      if (summary_path.empty()) {
        write_summary(summary, std::cerr, cfg.ops);
      } else {
        Output s(summary_path);
        write_summary(summary, s.stream(), cfg.ops);
      }
    } else if (*curve) {
      const auto records = load_records(records_path);
      const auto t = thresholds.empty() ? commands::default_thresholds(records) : parse_thresholds(thresholds);
      Output out(out_path);
      write_curve(certified_accuracy_curve(records, t), out.stream());
    } else if (*card) {
      if (measure_list) {
        cargs.measures.clear();
        std::istringstream in(*measure_list);
        std::string m;
        while (std::getline(in, m, ',')) cargs.measures.push_back(m);
      }
      Output out(out_path);
      commands::cardinality(cfg, cargs, out.stream());
    } else if (*crs) {
      if (n_single) xargs.n_min = xargs.n_max = *n_single;
      xargs.kind = textcrs::parse_cover_kind(cover);
      Output out(out_path);
      commands::textcrs_table(xargs, out.stream());
    } else if (*atk) {
      aargs.recipe = parse_attack_kind(recipe);
      aargs.smoothed = parse_target();
      aargs.lexicon = lexicon;
      aargs.train = train_data;
      const auto f = commands::open_classifier(cfg, model);
      const auto data = commands::load_for(*f, data_path);
      write_attack(commands::attack(*f, data, cfg, aargs));
    } else if (*tr) {
      const bool smoothed = parse_target();
      const auto f = commands::open_classifier(cfg, model);
      const auto source = load_attack_report(source_report);
      write_attack(commands::transfer(*f, source, cfg, smoothed));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const GuardError& e) {
    std::cerr << "guard error: " << e.what() << '\n';
    return kGuard;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
