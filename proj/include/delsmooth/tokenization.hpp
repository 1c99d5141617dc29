#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/brkiter.h>
#include <unicode/utext.h>

#include "delsmooth/errors.hpp"

namespace delsmooth {

// Granularity at which the adversary edits text.
enum class Scheme { whitespace, character };

inline std::string_view to_string(Scheme s) {
  return s == Scheme::whitespace ? "whitespace" : "character";
}

inline Scheme parse_scheme(std::string_view name) {
  if (name == "whitespace" || name == "word") return Scheme::whitespace;
  if (name == "character" || name == "char") return Scheme::character;
  throw UsageError("unknown tokenizer scheme '" + std::string(name) + "'");
}

// A tokenized text. The token count is the sequence length n used by the
// smoothing mechanism and by every radius and cardinality computation.
struct TokenSeq {
  std::vector<std::string> tokens;
  Scheme scheme = Scheme::whitespace;

  TokenSeq() = default;
  TokenSeq(std::vector<std::string> toks, Scheme s = Scheme::whitespace)
      : tokens(std::move(toks)), scheme(s) {}
  TokenSeq(std::initializer_list<std::string> toks, Scheme s = Scheme::whitespace)
      : tokens(toks), scheme(s) {}

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens[i]; }

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
  friend auto operator<=>(const TokenSeq& a, const TokenSeq& b) {
    if (auto c = a.scheme <=> b.scheme; c != 0) return c;
    return a.tokens <=> b.tokens;
  }
};

namespace detail {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::vector<std::string> split_graphemes(std::string_view text) {
  std::vector<std::string> out;
  if (text.empty()) return out;

  UErrorCode status = U_ZERO_ERROR;
  UText* ut = utext_openUTF8(nullptr, text.data(), static_cast<int64_t>(text.size()), &status);
  std::unique_ptr<UText, decltype(&utext_close)> guard(ut, &utext_close);
  std::unique_ptr<icu::BreakIterator> it(
      icu::BreakIterator::createCharacterInstance(icu::Locale::getRoot(), status));
  if (U_FAILURE(status)) throw Error(std::string("ICU break iterator: ") + u_errorName(status));
  it->setText(ut, status);
  if (U_FAILURE(status)) throw Error(std::string("ICU setText: ") + u_errorName(status));

  // Offsets are native UTF-8 byte indices because the UText wraps UTF-8.
  int32_t start = it->first();
  for (int32_t end = it->next(); end != icu::BreakIterator::DONE; start = end, end = it->next()) {
    out.emplace_back(text.substr(static_cast<std::size_t>(start),
                                 static_cast<std::size_t>(end - start)));
  }
  return out;
}

}  // namespace detail

// Whitespace: split on runs of ASCII whitespace, never yielding empty tokens.
// Character: one token per extended grapheme cluster, spaces included.
inline TokenSeq tokenize(std::string_view text, Scheme scheme = Scheme::whitespace) {
  TokenSeq seq;
  seq.scheme = scheme;
  if (scheme == Scheme::character) {
    seq.tokens = detail::split_graphemes(text);
    return seq;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_ascii_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(text[j])) ++j;
    if (j > i) seq.tokens.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return seq;
}

// Inverse of tokenize on normalized text: single spaces for words, plain
// concatenation for characters.
inline std::string detokenize(const TokenSeq& seq) {
  std::string out;
  const bool spaced = seq.scheme == Scheme::whitespace;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    if (spaced && i > 0) out.push_back(' ');
    out += seq.tokens[i];
  }
  return out;
}

}  // namespace delsmooth
