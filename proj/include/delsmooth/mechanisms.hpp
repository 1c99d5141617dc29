#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "delsmooth/errors.hpp"
#include "delsmooth/rng.hpp"
#include "delsmooth/tokenization.hpp"

namespace delsmooth {

// Deletion indicators: bit i set means token i is removed. One pattern is
// below another (in the smoothing partial order) when its set bits are a
// subset of the other's.
struct DeletionPattern {
  std::vector<std::uint8_t> indicators;

  DeletionPattern() = default;
  explicit DeletionPattern(std::vector<std::uint8_t> bits) : indicators(std::move(bits)) {}

  // Pattern for the low n bits of `mask`, bit i of mask -> position i.
  static DeletionPattern from_mask(std::size_t n, std::uint64_t mask) {
    DeletionPattern p;
    p.indicators.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.indicators[i] = static_cast<std::uint8_t>((mask >> i) & 1u);
    return p;
  }

  std::size_t size() const { return indicators.size(); }
  std::size_t popcount() const {
    return static_cast<std::size_t>(std::count(indicators.begin(), indicators.end(), std::uint8_t{1}));
  }
  bool below(const DeletionPattern& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (indicators[i] > other.indicators[i]) return false;
    }
    return true;
  }

  friend bool operator==(const DeletionPattern&, const DeletionPattern&) = default;
};

enum class MechanismKind { deletion, masking };

inline std::string_view to_string(MechanismKind k) {
  return k == MechanismKind::deletion ? "deletion" : "masking";
}

inline MechanismKind parse_mechanism(std::string_view name) {
  if (name == "deletion") return MechanismKind::deletion;
  if (name == "masking") return MechanismKind::masking;
  throw UsageError("unknown mechanism '" + std::string(name) + "'");
}

struct MechanismParams {
  MechanismKind kind = MechanismKind::deletion;
  double rate = 0.9;
  std::string mask_token = "[MASK]";

  void validate() const {
    if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("mechanism rate must lie in [0, 1]");
  }
  bool is_identity() const { return rate == 0.0; }
};

template <typename Rng>
DeletionPattern sample_deletion_pattern(std::size_t n, double p_del, Rng& rng) {
  DeletionPattern pat;
  pat.indicators.resize(n);
  for (auto& bit : pat.indicators) bit = rng.bernoulli(p_del) ? 1 : 0;
  return pat;
}

// q(eps) = prod p^eps_i (1-p)^(1-eps_i)
inline double pattern_probability(const DeletionPattern& pat, double p_del) {
  const std::size_t k = pat.popcount();
  return std::pow(p_del, static_cast<double>(k)) * std::pow(1.0 - p_del, static_cast<double>(pat.size() - k));
}

inline TokenSeq apply_deletion(const TokenSeq& x, const DeletionPattern& pat) {
  if (pat.size() != x.size()) {
    throw UsageError("deletion pattern length " + std::to_string(pat.size()) + " does not match sequence length " +
                     std::to_string(x.size()));
  }
  TokenSeq out;
  out.scheme = x.scheme;
  out.tokens.reserve(x.size() - pat.popcount());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!pat.indicators[i]) out.tokens.push_back(x.tokens[i]);
  }
  return out;
}

// Replaces a uniformly random set of exactly round(p_mask * n) positions.
template <typename Rng>
TokenSeq sample_masking(const TokenSeq& x, double p_mask, const std::string& mask_token, Rng& rng) {
  const std::size_t n = x.size();
  const auto k = static_cast<std::size_t>(std::llround(p_mask * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // partial Fisher-Yates: the first k slots become a uniform k-subset
  for (std::size_t i = 0; i < k && i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  TokenSeq out = x;
  for (std::size_t i = 0; i < k && i < n; ++i) out.tokens[idx[i]] = mask_token;
  return out;
}

template <typename Rng>
TokenSeq perturb(const TokenSeq& x, const MechanismParams& mech, Rng& rng) {
  if (mech.kind == MechanismKind::deletion) {
    return apply_deletion(x, sample_deletion_pattern(x.size(), mech.rate, rng));
  }
  return sample_masking(x, mech.rate, mech.mask_token, rng);
}

}  // namespace delsmooth
