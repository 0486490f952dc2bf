#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tailr {

// Token id conventions. The model's output distribution ranges over the V
// generable ids: EOS = 0 plus the regular tokens 1..V-1. BOS and PAD are
// input-only symbols (extra embedding rows, never output classes), so a
// zero-weight model is exactly uniform over V.
inline constexpr std::size_t kEosId = 0;
inline std::size_t bos_id(std::size_t vocab) { return vocab; }
inline std::size_t pad_id(std::size_t vocab) { return vocab + 1; }

// Token list ending in EOS, with an optional conditioning prefix
// (empty throughout the unconditional synthetic pipeline).
struct TokenSequence {
  std::vector<std::size_t> tokens;  // body... , EOS
  std::vector<std::size_t> prefix;

  std::size_t length() const { return tokens.size(); }
  std::size_t body_length() const { return tokens.size() - 1; }

  void validate(std::size_t vocab) const {
    if (tokens.empty() || tokens.back() != kEosId)
      throw std::invalid_argument("TokenSequence: must end in EOS");
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
      if (tokens[i] == kEosId || tokens[i] >= vocab)
        throw std::invalid_argument("TokenSequence: bad body token id");
  }

  bool operator==(const TokenSequence&) const = default;
};

using Dataset = std::vector<TokenSequence>;

}  // namespace tailr
