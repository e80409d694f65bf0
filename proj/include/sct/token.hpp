#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sct {

// Closed token-kind taxonomy. The numeric values feed the token-kind
// embedding table, so the order is part of the artifact format.
enum class TokenKind : int {
  kIdentifier = 0,
  kKeyword = 1,
  kPunctuation = 2,
  kStringLiteral = 3,
  kNumberLiteral = 4,
  kComment = 5,
  kWhitespace = 6,
  kNewline = 7,
  kIndent = 8,
  kDedent = 9,
};

inline constexpr int kNumTokenKinds = 10;

const std::string& token_kind_name(TokenKind kind);
TokenKind token_kind_from_name(const std::string& name);

// One lexical token with its byte range in the original source. Masked
// literals carry the mask name in `text`; indent/dedent tokens are
// zero-width.
struct RawToken {
  std::string text;
  TokenKind kind = TokenKind::kIdentifier;
  size_t start = 0;
  size_t end = 0;
};

}  // namespace sct
