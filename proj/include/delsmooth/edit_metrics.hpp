#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "delsmooth/errors.hpp"
#include "delsmooth/tokenization.hpp"

namespace delsmooth {

using BigInt = boost::multiprecision::cpp_int;

// Edit distances are either a count or unreachable under the allowed ops.
inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

// Subset of {del, ins, sub} the adversary may use.
struct EditOpsSet {
  bool del = true;
  bool ins = true;
  bool sub = true;

  static constexpr EditOpsSet full() { return {true, true, true}; }

  bool valid() const { return del || ins || sub; }

  // Compact spelling used on the command line and in record headers: "dis",
  // "d", "is", ... in that fixed letter order.
  std::string code() const {
    std::string s;
    if (del) s += 'd';
    if (ins) s += 'i';
    if (sub) s += 's';
    return s;
  }

  friend bool operator==(const EditOpsSet&, const EditOpsSet&) = default;
  friend auto operator<=>(const EditOpsSet&, const EditOpsSet&) = default;
};

inline EditOpsSet parse_ops(std::string_view code) {
  EditOpsSet ops{false, false, false};
  for (char c : code) {
    bool* flag = c == 'd' ? &ops.del : c == 'i' ? &ops.ins : c == 's' ? &ops.sub : nullptr;
    if (flag == nullptr || *flag) throw UsageError("invalid ops set '" + std::string(code) + "'");
    *flag = true;
  }
  if (!ops.valid()) throw UsageError("ops set must allow at least one edit operation");
  return ops;
}

// The seven nonempty ops sets in a fixed order, full set first.
inline const std::array<EditOpsSet, 7>& all_ops_sets() {
  static const std::array<EditOpsSet, 7> sets{{
      {true, true, true},
      {true, false, true},
      {false, true, true},
      {false, false, true},
      {true, true, false},
      {true, false, false},
      {false, true, false},
  }};
  return sets;
}

// Counts of a minimal unconstrained edit script turning a into b. lcs_length
// is the number of tokens the chosen script leaves untouched, which is a
// longest common subsequence whenever some minimal script preserves one.
struct EditDecomposition {
  std::size_t distance = 0;
  std::size_t n_del = 0;
  std::size_t n_ins = 0;
  std::size_t n_sub = 0;
  std::size_t lcs_length = 0;

  friend bool operator==(const EditDecomposition&, const EditDecomposition&) = default;
};

// Matched index pairs (i in a, j in b) of the chosen minimal alignment.
struct Alignment {
  EditDecomposition decomposition;
  std::vector<std::pair<std::size_t, std::size_t>> matches;
};

struct CardinalityParams {
  std::uint64_t vocab_size = 50265;
  std::size_t radius = 0;
  std::size_t length = 0;
};

namespace detail {

inline void require_same_scheme(const TokenSeq& a, const TokenSeq& b) {
  if (a.scheme != b.scheme) throw UsageError("token sequences use different tokenizer schemes");
}

}  // namespace detail

// Unit-cost edit distance turning a into b using only the allowed ops.
// Works on any equality-comparable element type.
template <typename T>
std::size_t edit_distance(std::span<const T> a, std::span<const T> b, EditOpsSet ops) {
  if (!ops.valid()) throw UsageError("ops set must allow at least one edit operation");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t inf = kUnreachable;
  std::vector<std::size_t> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0;
  for (std::size_t j = 1; j <= m; ++j) prev[j] = ops.ins ? j : inf;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = ops.del ? i : inf;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t best = inf;
      if (a[i - 1] == b[j - 1]) {
        best = prev[j - 1];
      } else if (ops.sub && prev[j - 1] != inf) {
        best = prev[j - 1] + 1;
      }
      if (ops.del && prev[j] != inf) best = std::min(best, prev[j] + 1);
      if (ops.ins && cur[j - 1] != inf) best = std::min(best, cur[j - 1] + 1);
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b,
                                 EditOpsSet ops = EditOpsSet::full()) {
  detail::require_same_scheme(a, b);
  return edit_distance(std::span<const std::string>(a.tokens), std::span<const std::string>(b.tokens),
                       ops);
}

// Minimal unconstrained alignment of a onto b. Among minimal-cost scripts the
// one with the most matched tokens wins (equivalently the fewest
// substitutions); remaining ties resolve by a fixed traceback preference.
template <typename T>
Alignment optimal_alignment(std::span<const T> a, std::span<const T> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  struct Cell {
    std::size_t cost;
    std::size_t matches;
  };
  auto better = [](Cell x, Cell y) {
    return x.cost < y.cost || (x.cost == y.cost && x.matches > y.matches);
  };
  std::vector<Cell> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cell& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = {i, 0};
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = {j, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      Cell d = at(i - 1, j - 1);
      Cell best = a[i - 1] == b[j - 1] ? Cell{d.cost, d.matches + 1} : Cell{d.cost + 1, d.matches};
      Cell up{at(i - 1, j).cost + 1, at(i - 1, j).matches};
      Cell left{at(i, j - 1).cost + 1, at(i, j - 1).matches};
      if (better(up, best)) best = up;
      if (better(left, best)) best = left;
      at(i, j) = best;
    }
  }

  Alignment out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const Cell here = at(i, j);
    if (i > 0 && j > 0) {
      const Cell d = at(i - 1, j - 1);
      if (a[i - 1] == b[j - 1] && d.cost == here.cost && d.matches + 1 == here.matches) {
        out.matches.emplace_back(i - 1, j - 1);
        --i, --j;
        continue;
      }
      if (a[i - 1] != b[j - 1] && d.cost + 1 == here.cost && d.matches == here.matches) {
        ++out.decomposition.n_sub;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && at(i - 1, j).cost + 1 == here.cost && at(i - 1, j).matches == here.matches) {
      ++out.decomposition.n_del;
      --i;
      continue;
    }
    ++out.decomposition.n_ins;
    --j;
  }
  std::reverse(out.matches.begin(), out.matches.end());
  auto& dec = out.decomposition;
  dec.lcs_length = out.matches.size();
  dec.distance = dec.n_del + dec.n_ins + dec.n_sub;
  return out;
}

inline Alignment optimal_alignment(const TokenSeq& a, const TokenSeq& b) {
  detail::require_same_scheme(a, b);
  return optimal_alignment(std::span<const std::string>(a.tokens), std::span<const std::string>(b.tokens));
}

inline EditDecomposition edit_decomposition(const TokenSeq& a, const TokenSeq& b) {
  return optimal_alignment(a, b).decomposition;
}

// Every sequence over `alphabet` that can be turned into x with at most r
// edits from `ops`. Brute force; intended for oracle-scale inputs only.
inline std::set<TokenSeq> enumerate_ball(const TokenSeq& x, std::size_t r, EditOpsSet ops,
                                         const std::vector<std::string>& alphabet) {
  if (!ops.valid()) throw UsageError("ops set must allow at least one edit operation");
  constexpr std::size_t kMaxLength = 8;
  constexpr std::size_t kMaxAlphabet = 4;
  // A neighbour longer than x must delete down to it; a shorter one must insert.
  const std::size_t min_len = ops.ins ? x.size() - std::min(r, x.size()) : x.size();
  const std::size_t max_len = ops.del ? x.size() + r : x.size();
  if (alphabet.size() > kMaxAlphabet || max_len > kMaxLength) {
    throw GuardError("edit ball enumeration exceeds oracle scale (length " + std::to_string(max_len) +
                     ", alphabet " + std::to_string(alphabet.size()) + ")");
  }

  std::set<TokenSeq> ball;
  ball.insert(x);
  if (alphabet.empty()) return ball;
  const std::span<const std::string> target(x.tokens);
  std::vector<std::size_t> digits;
  TokenSeq cand;
  cand.scheme = x.scheme;
  for (std::size_t len = min_len; len <= max_len; ++len) {
    digits.assign(len, 0);
    cand.tokens.assign(len, alphabet[0]);
    while (true) {
      if (edit_distance(std::span<const std::string>(cand.tokens), target, ops) <= r) ball.insert(cand);
      std::size_t k = 0;
      while (k < len && ++digits[k] == alphabet.size()) {
        digits[k] = 0;
        cand.tokens[k] = alphabet[0];
        ++k;
      }
      if (k == len) break;
      cand.tokens[k] = alphabet[digits[k]];
    }
  }
  return ball;
}

inline BigInt binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  BigInt c = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    c *= n - k + i;
    c /= i;
  }
  return c;
}

// Exact size of a Hamming ball: sum_{i<=r} C(n,i) (v-1)^i.
inline BigInt hamming_ball_cardinality(const CardinalityParams& p) {
  if (p.radius > p.length) {
    throw GuardError("Hamming radius " + std::to_string(p.radius) + " exceeds sequence length " +
                     std::to_string(p.length));
  }
  BigInt total = 0;
  BigInt power = 1;
  for (std::size_t i = 0; i <= p.radius; ++i) {
    total += binomial(p.length, i) * power;
    power *= p.vocab_size - 1;
  }
  return total;
}

// Number of distinct length-(n+r) supersequences of any length-n sequence:
// sum_{i<=r} C(n+r,i) (v-1)^i. Independent of the sequence itself.
inline BigInt supersequence_count(const CardinalityParams& p) {
  BigInt total = 0;
  BigInt power = 1;
  for (std::size_t i = 0; i <= p.radius; ++i) {
    total += binomial(p.length + p.radius, i) * power;
    power *= p.vocab_size - 1;
  }
  return total;
}

// Lower bound on |B_r(x)| for full edit operations, valid for every x of the
// given length: the exact neighbourhood size of a unary sequence a^n, which is
// the smallest Levenshtein neighbourhood among all sequences of length n.
//
// A sequence y of length m containing c copies of `a` sits at distance
// max(n, m) - min(c, n) from a^n, so the count is
//   sum_m sum_c C(m, c) (v-1)^(m-c) [max(n, m) - min(c, n) <= r].
inline BigInt lev_ball_cardinality_lower_bound(const CardinalityParams& p) {
  const std::size_t n = p.length;
  const std::size_t r = p.radius;
  if (p.vocab_size == 0) throw UsageError("vocabulary size must be positive");
  const std::uint64_t others = p.vocab_size - 1;
  BigInt total = 0;
  const std::size_t m_lo = n > r ? n - r : 0;
  for (std::size_t m = m_lo; m <= n + r; ++m) {
    const std::size_t longest = std::max(n, m);
    // need min(c, n) >= longest - r
    const std::size_t need = longest > r ? longest - r : 0;
    if (need > n) continue;
    for (std::size_t c = need; c <= m; ++c) {
      total += binomial(m, c) * boost::multiprecision::pow(BigInt(others), static_cast<unsigned>(m - c));
    }
  }
  return total;
}

// Exact |B_r(x)| for full edit operations over a vocabulary of size v, by
// running the determinized Levenshtein automaton of x over a symbolic
// alphabet: each distinct token of x is its own letter and all remaining
// v - distinct tokens share one weighted letter. Each automaton state is the
// DP column of distances from the input prefix to every prefix of x, capped
// at r + 1; distinct inputs follow distinct paths, so weighted path counts to
// accepting states count distinct sequences.
inline BigInt lev_ball_cardinality_exact(const TokenSeq& x, std::uint64_t vocab_size, std::size_t r) {
  constexpr std::size_t kMaxRadius = 16;
  if (r > kMaxRadius) {
    throw GuardError("automaton radius " + std::to_string(r) + " exceeds guard " + std::to_string(kMaxRadius));
  }
  std::map<std::string, std::size_t> ids;
  std::vector<std::size_t> xs;
  xs.reserve(x.size());
  for (const auto& t : x.tokens) xs.push_back(ids.emplace(t, ids.size()).first->second);
  const std::size_t distinct = ids.size();
  if (vocab_size < std::max<std::size_t>(distinct, 1)) {
    throw UsageError("vocabulary size " + std::to_string(vocab_size) + " is smaller than the " +
                     std::to_string(distinct) + " distinct tokens of the sequence");
  }
  const std::uint64_t other_weight = vocab_size - distinct;
  const std::size_t n = xs.size();
  const auto cap = static_cast<unsigned char>(r + 1);

  // State: column[j] = min(dist(input, x[0..j)), r + 1), stored in a string key.
  std::string start(n + 1, '\0');
  for (std::size_t j = 0; j <= n; ++j) start[j] = static_cast<char>(std::min<std::size_t>(j, cap));

  auto step = [&](const std::string& col, std::size_t sym, std::string& next) -> bool {
    next.assign(n + 1, '\0');
    unsigned char lo = std::min<unsigned char>(static_cast<unsigned char>(col[0]) + 1, cap);
    next[0] = static_cast<char>(lo);
    for (std::size_t j = 1; j <= n; ++j) {
      unsigned v = static_cast<unsigned char>(col[j]) + 1u;
      v = std::min<unsigned>(v, static_cast<unsigned char>(next[j - 1]) + 1u);
      v = std::min<unsigned>(v, static_cast<unsigned char>(col[j - 1]) + (xs[j - 1] == sym ? 0u : 1u));
      const auto c = static_cast<unsigned char>(std::min<unsigned>(v, cap));
      next[j] = static_cast<char>(c);
      lo = std::min(lo, c);
    }
    return lo <= r;
  };

  BigInt total = 0;
  std::unordered_map<std::string, BigInt> layer{{start, BigInt(1)}};
  std::unordered_map<std::string, BigInt> next_layer;
  std::string next;
  const std::size_t kOther = distinct;
  for (std::size_t len = 0; len <= n + r && !layer.empty(); ++len) {
    next_layer.clear();
    for (const auto& [col, weight] : layer) {
      if (static_cast<unsigned char>(col[n]) <= r) total += weight;
      if (len == n + r) continue;
      for (std::size_t sym = 0; sym <= kOther; ++sym) {
        if (sym == kOther && other_weight == 0) break;
        if (!step(col, sym, next)) continue;
        BigInt w = sym == kOther ? weight * other_weight : weight;
        auto [it, inserted] = next_layer.try_emplace(next, std::move(w));
        if (!inserted) it->second += sym == kOther ? weight * other_weight : weight;
      }
    }
    layer.swap(next_layer);
  }
  return total;
}

// log10 of a positive big integer, accurate to double precision.
inline double log10_big(const BigInt& v) {
  if (v <= 0) throw UsageError("log10 of a nonpositive integer");
  const std::size_t bits = boost::multiprecision::msb(v) + 1;
  if (bits <= 60) return std::log10(v.convert_to<double>());
  const std::size_t shift = bits - 60;
  const BigInt top = v >> shift;
  return std::log10(top.convert_to<double>()) + static_cast<double>(shift) * std::log10(2.0);
}

}  // namespace delsmooth
