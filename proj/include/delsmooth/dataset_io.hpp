#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "delsmooth/classifier.hpp"
#include "delsmooth/errors.hpp"

namespace delsmooth {

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Label parse_label(const std::string& field, const std::string& where) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(field, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": label '" + field + "' is not an integer");
  }
  if (used != field.size() || v < 0) throw DataError(where + ": label '" + field + "' is not a class index");
  return static_cast<Label>(v);
}

}  // namespace detail

// RFC 4180 records: comma separated, double-quoted fields may contain commas,
// newlines and doubled quotes. Each record carries the line it starts on.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

inline std::vector<CsvRecord> parse_csv(const std::string& content, const std::string& name = "csv") {
  std::vector<CsvRecord> out;
  CsvRecord rec;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  rec.line = 1;
  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(rec.fields.size() == 1 && rec.fields[0].empty())) out.push_back(std::move(rec));
    rec = CsvRecord{};
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      end_record();
      ++line;
      rec.line = line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw DataError(name + ":" + std::to_string(rec.line) + ": unterminated quoted field");
  if (!field.empty() || !rec.fields.empty()) end_record();
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

// One {"text": ..., "label": ...} object per line; blank lines are skipped.
inline std::vector<LabeledText> parse_jsonl_dataset(const std::string& content, const std::string& name = "jsonl") {
  std::vector<LabeledText> items;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw DataError(where + ": malformed JSON");
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw DataError(where + ": missing string field 'text'");
    }
    if (!j.contains("label") || !j["label"].is_number_integer() || j["label"].get<long long>() < 0) {
      throw DataError(where + ": missing nonnegative integer field 'label'");
    }
    items.push_back({j["text"].get<std::string>(), j["label"].get<Label>()});
  }
  return items;
}

inline std::vector<LabeledText> parse_csv_dataset(const std::string& content, const std::string& name = "csv") {
  const auto records = parse_csv(content, name);
  if (records.empty()) return {};
  std::size_t text_col = SIZE_MAX, label_col = SIZE_MAX;
  for (std::size_t i = 0; i < records[0].fields.size(); ++i) {
    if (records[0].fields[i] == "text") text_col = i;
    if (records[0].fields[i] == "label") label_col = i;
  }
  if (text_col == SIZE_MAX || label_col == SIZE_MAX) {
    throw DataError(name + ":1: header must name columns 'text' and 'label'");
  }
  std::vector<LabeledText> items;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = name + ":" + std::to_string(rec.line);
    if (rec.fields.size() != records[0].fields.size()) {
      throw DataError(where + ": expected " + std::to_string(records[0].fields.size()) + " fields, found " +
                      std::to_string(rec.fields.size()));
    }
    items.push_back({rec.fields[text_col], detail::parse_label(rec.fields[label_col], where)});
  }
  return items;
}

// Loads a dataset by extension (.csv, otherwise JSON lines). With
// num_classes == 0 the class count is one more than the largest label, and
// at least two.
inline LabeledDataset load_dataset(const std::filesystem::path& path, std::size_t num_classes = 0) {
  const std::string content = detail::read_file(path);
  LabeledDataset d;
  d.items = path.extension() == ".csv" ? parse_csv_dataset(content, path.string())
                                       : parse_jsonl_dataset(content, path.string());
  if (num_classes == 0) {
    num_classes = 2;
    for (const auto& it : d.items) num_classes = std::max(num_classes, it.label + 1);
  }
  d.num_classes = num_classes;
  d.validate();
  return d;
}

inline void write_jsonl_dataset(const LabeledDataset& d, std::ostream& out) {
  for (const auto& it : d.items) out << nlohmann::json{{"text", it.text}, {"label", it.label}}.dump() << '\n';
}

// Lexicon lines: token<TAB>cand1,cand2,...
inline std::map<std::string, std::vector<std::string>> load_lexicon(const std::filesystem::path& path) {
  const std::string content = detail::read_file(path);
  std::map<std::string, std::vector<std::string>> lex;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>candidates");
    }
    auto& cands = lex[line.substr(0, tab)];
    std::istringstream rest(line.substr(tab + 1));
    std::string cand;
    while (std::getline(rest, cand, ',')) {
      if (!cand.empty()) cands.push_back(cand);
    }
  }
  return lex;
}

}  // namespace delsmooth
