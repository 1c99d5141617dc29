#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "delsmooth/attacks.hpp"
#include "delsmooth/certify.hpp"
#include "delsmooth/dataset_io.hpp"
#include "delsmooth/edit_metrics.hpp"
#include "delsmooth/errors.hpp"

namespace delsmooth {

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DataError(where + ": bad number '" + s + "'");
  return v;
}

inline std::string format_radius(Radius r) { return r == kUnboundedRadius ? "inf" : std::to_string(r); }

inline Radius parse_radius(const std::string& s, const std::string& where) {
  if (s == "inf") return kUnboundedRadius;
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DataError(where + ": bad radius '" + s + "'");
  return static_cast<Radius>(v);
}

struct CertRecord {
  std::size_t instance = 0;
  Label label = 0;
  Label predicted = 0;
  bool abstained = false;
  std::array<Radius, 7> radii{};  // indexed like all_ops_sets()
  double mu_y = 0.0;
  double mu_yprime = 0.0;
  double log10_cardinality = 0.0;
  std::size_t num_samples = 0;

  bool correct() const { return predicted == label; }
  Radius radius(EditOpsSet ops) const { return radii[ops_index(ops)]; }
  friend bool operator==(const CertRecord&, const CertRecord&) = default;
};

inline CertRecord make_record(std::size_t instance, Label label, const Certificate& c) {
  CertRecord r;
  r.instance = instance;
  r.label = label;
  r.predicted = c.predicted;
  r.abstained = c.abstained;
  r.radii = c.radii;
  r.mu_y = c.bounds.mu_y;
  r.mu_yprime = c.bounds.mu_yprime;
  r.log10_cardinality = c.log10_cardinality_lb;
  r.num_samples = c.certification_counts.num_samples;
  return r;
}

inline std::vector<std::string> record_header() {
  std::vector<std::string> h = {"instance", "label", "predicted", "abstained"};
  for (const auto& ops : all_ops_sets()) h.push_back("radius_" + ops.code());
  for (const char* c : {"mu_y", "mu_yprime", "log10_cc", "num_samples"}) h.emplace_back(c);
  return h;
}

inline void write_records(const std::vector<CertRecord>& records, std::ostream& out) {
  const auto header = record_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : records) {
    out << r.instance << ',' << r.label << ',' << r.predicted << ',' << (r.abstained ? 1 : 0);
    for (auto rad : r.radii) out << ',' << format_radius(rad);
    out << ',' << format_double(r.mu_y) << ',' << format_double(r.mu_yprime) << ','
        << format_double(r.log10_cardinality) << ',' << r.num_samples << '\n';
  }
}

inline std::vector<CertRecord> parse_records(const std::string& content, const std::string& name = "records") {
  const auto rows = parse_csv(content, name);
  if (rows.empty() || rows[0].fields != record_header()) throw DataError(name + ":1: unexpected record header");
  std::vector<CertRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    const std::string where = name + ":" + std::to_string(rows[i].line);
    if (f.size() != rows[0].fields.size()) throw DataError(where + ": wrong field count");
    CertRecord r;
    r.instance = static_cast<std::size_t>(parse_radius(f[0], where));
    r.label = detail::parse_label(f[1], where);
    r.predicted = detail::parse_label(f[2], where);
    if (f[3] != "0" && f[3] != "1") throw DataError(where + ": abstained must be 0 or 1");
    r.abstained = f[3] == "1";
    for (std::size_t k = 0; k < 7; ++k) r.radii[k] = parse_radius(f[4 + k], where);
    r.mu_y = parse_double(f[11], where);
    r.mu_yprime = parse_double(f[12], where);
    r.log10_cardinality = parse_double(f[13], where);
    r.num_samples = static_cast<std::size_t>(parse_radius(f[14], where));
    out.push_back(r);
  }
  return out;
}

inline std::vector<CertRecord> load_records(const std::filesystem::path& path) {
  return parse_records(detail::read_file(path), path.string());
}

// Median with the two middle values averaged for even counts.
inline double median(std::vector<double> v) {
  if (v.empty()) throw UsageError("median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  if (v.size() % 2 == 1) return v[m];
  return (v[m - 1] + v[m]) / 2.0;
}

struct CertSummary {
  std::size_t instances = 0;
  double clean_accuracy = 0.0;
  double abstain_rate = 0.0;
  std::array<double, 7> median_radius{};  // unbounded radii count as +inf
  double median_log10_cardinality = 0.0;
};

inline CertSummary summarize_records(const std::vector<CertRecord>& records) {
  if (records.empty()) throw DataError("no certification records");
  CertSummary s;
  s.instances = records.size();
  std::size_t correct = 0, abstained = 0;
  std::vector<double> logs;
  for (const auto& r : records) {
    correct += r.correct();
    abstained += r.abstained;
    logs.push_back(r.log10_cardinality);
  }
  const auto n = static_cast<double>(records.size());
  s.clean_accuracy = static_cast<double>(correct) / n;
  s.abstain_rate = static_cast<double>(abstained) / n;
  for (std::size_t k = 0; k < 7; ++k) {
    std::vector<double> radii;
    for (const auto& r : records) {
      radii.push_back(r.radii[k] == kUnboundedRadius ? std::numeric_limits<double>::infinity()
                                                     : static_cast<double>(r.radii[k]));
    }
    s.median_radius[k] = median(std::move(radii));
  }
  s.median_log10_cardinality = median(std::move(logs));
  return s;
}

// `headline` picks the ops set reported again as plain median_radius.
inline void write_summary(const CertSummary& s, std::ostream& out, EditOpsSet headline = EditOpsSet::full()) {
  out << "metric,value\n";
  out << "instances," << s.instances << '\n';
  out << "clean_accuracy," << format_double(s.clean_accuracy) << '\n';
  out << "abstain_rate," << format_double(s.abstain_rate) << '\n';
  const auto& sets = all_ops_sets();
  for (std::size_t k = 0; k < sets.size(); ++k) {
    out << "median_radius_" << sets[k].code() << ',' << format_double(s.median_radius[k]) << '\n';
  }
  out << "ops," << headline.code() << '\n';
  out << "median_radius," << format_double(s.median_radius[ops_index(headline)]) << '\n';
  out << "median_log10_cc," << format_double(s.median_log10_cardinality) << '\n';
}

struct CurvePoint {
  double threshold = 0.0;
  double certified_accuracy = 0.0;
};

// Fraction of instances predicted correctly whose certified cardinality has
// log10 at least c, for each threshold c.
inline std::vector<CurvePoint> certified_accuracy_curve(const std::vector<CertRecord>& records,
                                                        const std::vector<double>& thresholds) {
  if (records.empty()) throw DataError("no certification records");
  std::vector<CurvePoint> out;
  for (double c : thresholds) {
    std::size_t hit = 0;
    for (const auto& r : records) hit += r.correct() && r.log10_cardinality >= c;
    out.push_back({c, static_cast<double>(hit) / static_cast<double>(records.size())});
  }
  return out;
}

inline void write_curve(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "log10_cc_threshold,certified_accuracy\n";
  for (const auto& p : curve) out << format_double(p.threshold) << ',' << format_double(p.certified_accuracy) << '\n';
}

// Attack reports: CSV for reading, JSON for replay by the transfer command.
inline void write_attack_csv(const AttackReport& report, std::ostream& out) {
  out << "instance,label,clean_prediction,status,queries_used,edit_distance,adversarial_text\n";
  for (const auto& o : report.outcomes) {
    out << o.instance << ',' << o.label << ',' << o.clean_prediction << ',' << to_string(o.status) << ','
        << o.queries_used << ',' << (o.edit_distance_used ? std::to_string(*o.edit_distance_used) : "") << ','
        << (o.adversarial_text ? csv_escape(*o.adversarial_text) : "") << '\n';
  }
}

inline void write_attack_summary(const AttackReport& report, std::ostream& out) {
  out << "metric,value\n";
  out << "instances," << report.outcomes.size() << '\n';
  for (auto s : {AttackStatus::success, AttackStatus::fail, AttackStatus::skipped, AttackStatus::timeout}) {
    out << to_string(s) << ',' << report.count(s) << '\n';
  }
  out << "harness_failures," << report.harness_failures.size() << '\n';
  out << "clean_accuracy," << format_double(report.clean_accuracy) << '\n';
  out << "robust_accuracy," << format_double(report.robust_accuracy) << '\n';
  out << "mean_queries," << format_double(report.mean_queries) << '\n';
}

inline nlohmann::json attack_report_to_json(const AttackReport& report) {
  nlohmann::json j = {{"format", "delsmooth-attack"}, {"version", 1}, {"seed", report.seed}};
  j["outcomes"] = nlohmann::json::array();
  for (const auto& o : report.outcomes) {
    nlohmann::json e = {{"instance", o.instance},          {"label", o.label},
                        {"original_text", o.original_text}, {"clean_prediction", o.clean_prediction},
                        {"status", to_string(o.status)},    {"queries_used", o.queries_used}};
    if (o.adversarial_text) e["adversarial_text"] = *o.adversarial_text;
    if (o.edit_distance_used) e["edit_distance_used"] = *o.edit_distance_used;
    j["outcomes"].push_back(std::move(e));
  }
  j["harness_failures"] = nlohmann::json::array();
  for (const auto& h : report.harness_failures) {
    j["harness_failures"].push_back({{"instance", h.instance}, {"message", h.message}});
  }
  return j;
}

inline AttackReport attack_report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "delsmooth-attack") throw DataError("not an attack report");
    AttackReport r;
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("outcomes")) {
      AttackOutcome o;
      o.instance = e.at("instance").get<std::size_t>();
      o.label = e.at("label").get<Label>();
      o.original_text = e.at("original_text").get<std::string>();
      o.clean_prediction = e.at("clean_prediction").get<Label>();
      o.status = parse_attack_status(e.at("status").get<std::string>());
      o.queries_used = e.at("queries_used").get<std::size_t>();
      if (e.contains("adversarial_text")) o.adversarial_text = e["adversarial_text"].get<std::string>();
      if (e.contains("edit_distance_used")) o.edit_distance_used = e["edit_distance_used"].get<std::size_t>();
      if (o.adversarial_text.has_value() != (o.status == AttackStatus::success)) {
        throw DataError("adversarial text must be present exactly for successes");
      }
      r.outcomes.push_back(std::move(o));
    }
    for (const auto& h : j.value("harness_failures", nlohmann::json::array())) {
      r.harness_failures.push_back({h.at("instance").get<std::size_t>(), h.at("message").get<std::string>()});
    }
    summarize(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed attack report: ") + e.what());
  }
}

inline AttackReport load_attack_report(const std::filesystem::path& path) {
  const std::string content = detail::read_file(path);
  try {
    return attack_report_from_json(nlohmann::json::parse(content));
  } catch (const nlohmann::json::parse_error&) {
    throw DataError("'" + path.string() + "' is not valid JSON");
  }
}

}  // namespace delsmooth
