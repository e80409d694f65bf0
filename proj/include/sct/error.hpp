#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace sct {

// Bad input file, malformed record, or incompatible artifacts (vocab hash
// mismatch, config/checkpoint dimension mismatch).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Per-snippet rejection. `reason` is the stable tag written to the reject
// log: "tokenizer", "parse", "schema", "assignment", "length", "no-name".
struct SnippetReject : std::runtime_error {
  SnippetReject(std::string reason_tag, const std::string& msg)
      : std::runtime_error(msg), reason(std::move(reason_tag)) {}
  std::string reason;
};

// Non-finite loss or other numeric breakdown.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sct
