#pragma once

#include <string>
#include <vector>

#include "sct/token.hpp"

namespace sct {

// Mask names appear as the token text of masked literals and of the
// synthetic layout tokens, and double as the special-vocabulary entries.
inline constexpr const char* kMaskString = "[MASK_STRING]";
inline constexpr const char* kMaskNumber = "[MASK_NUMBER]";
inline constexpr const char* kIndentText = "[INDENT]";
inline constexpr const char* kDedentText = "[DEDENT]";
inline constexpr const char* kNewlineText = "[NEWLINE]";

// Lexes `source` into the normalized token stream: comments and empty lines
// dropped, string/number literals masked, leading-whitespace changes turned
// into INDENT/DEDENT tokens, all other whitespace removed except newlines.
// Punctuation tokens are kept here; they are stripped later in the pipeline.
//
// `lang` selects the comment syntax ("python"/"ruby"/"minilang" use `#`,
// "javascript"/"go"/"java" use `//` and `/* */`; anything else accepts all).
// Throws SnippetReject("tokenizer", ...) on an unlexable token.
std::vector<RawToken> normalize(const std::string& source,
                                const std::string& lang);

}  // namespace sct
