#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "json.hpp"

#include "delsmooth/classifier.hpp"
#include "delsmooth/errors.hpp"

namespace delsmooth {

inline constexpr const char* kModelFormat = "delsmooth-model";
inline constexpr int kModelFormatVersion = 1;

// Model files are self-describing JSON documents:
//   {"format": "delsmooth-model", "version": 1, "kind": "builtin" | "constant" | "keyword", ...}
// Keys are emitted in sorted order and counts are integers, so equal models
// serialize to identical bytes.
inline nlohmann::json model_to_json(const BuiltinModel& m, const TrainOptions& opt) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelFormatVersion;
  j["kind"] = "builtin";
  j["scheme"] = std::string(to_string(m.scheme()));
  j["smoothing"] = m.smoothing();
  j["vocab"] = m.vocab();
  j["doc_counts"] = m.doc_counts();
  j["token_counts"] = m.token_counts();
  j["training"] = {
      {"mechanism", std::string(to_string(opt.mechanism.kind))},
      {"rate", opt.mechanism.rate},
      {"mask_token", opt.mechanism.mask_token},
      {"samples_per_instance", opt.samples_per_instance},
      {"seed", opt.seed},
  };
  return j;
}

inline nlohmann::json constant_model_json(Label label, std::size_t num_classes) {
  return {{"format", kModelFormat}, {"version", kModelFormatVersion}, {"kind", "constant"},
          {"label", label}, {"num_classes", num_classes}};
}

inline nlohmann::json keyword_model_json(const KeywordClassifier& k) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : k.rules()) rules.push_back({{"token", r.token}, {"label", r.label}});
  return {{"format", kModelFormat}, {"version", kModelFormatVersion}, {"kind", "keyword"},
          {"rules", rules}, {"fallback", k.fallback()}, {"num_classes", k.num_classes()}};
}

inline void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline std::unique_ptr<BaseClassifier> classifier_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw DataError("not a delsmooth model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("unsupported model format version " + std::to_string(version));
    }
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "builtin") {
      return std::make_unique<BuiltinModel>(
          parse_scheme(j.at("scheme").get<std::string>()), j.at("vocab").get<std::vector<std::string>>(),
          j.at("doc_counts").get<std::vector<std::uint64_t>>(),
          j.at("token_counts").get<std::vector<std::vector<std::uint64_t>>>(), j.at("smoothing").get<double>());
    }
    if (kind == "constant") {
      return std::make_unique<ConstantClassifier>(j.at("label").get<Label>(), j.at("num_classes").get<std::size_t>());
    }
    if (kind == "keyword") {
      std::vector<KeywordClassifier::Rule> rules;
      for (const auto& r : j.at("rules")) rules.push_back({r.at("token").get<std::string>(), r.at("label").get<Label>()});
      return std::make_unique<KeywordClassifier>(std::move(rules), j.at("fallback").get<Label>(),
                                                 j.at("num_classes").get<std::size_t>());
    }
    throw DataError("unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid model file: ") + e.what());
  }
}

inline std::unique_ptr<BaseClassifier> load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return classifier_from_json(j);
}

}  // namespace delsmooth
