#include "sct/subtoken.hpp"

#include <cctype>

namespace sct {

namespace {

enum class CharClass { kLower, kUpper, kDigit, kOther };

CharClass classify(unsigned char c) {
  if (std::islower(c)) return CharClass::kLower;
  if (std::isupper(c)) return CharClass::kUpper;
  if (std::isdigit(c)) return CharClass::kDigit;
  return CharClass::kOther;
}

std::string lowercased(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

}  // namespace

std::vector<std::string> split_subtokens(const std::string& token_text) {
  std::vector<std::string> parts;
  std::string cur;
  const size_t n = token_text.size();
  auto flush = [&] {
    if (!cur.empty()) {
      parts.push_back(lowercased(cur));
      cur.clear();
    }
  };
  for (size_t i = 0; i < n; ++i) {
    const unsigned char c = static_cast<unsigned char>(token_text[i]);
    const CharClass cls = classify(c);
    if (cls == CharClass::kOther) {
      flush();
      continue;
    }
    if (!cur.empty()) {
      const CharClass prev =
          classify(static_cast<unsigned char>(cur.back()));
      bool boundary = false;
      if (prev != CharClass::kUpper && cls == CharClass::kUpper) {
        boundary = true;  // camelCase rise
      } else if (prev == CharClass::kUpper && cls == CharClass::kLower &&
                 cur.size() >= 2) {
        // Acronym followed by a word: "HTTPServer" -> http + server.
        const std::string last(1, cur.back());
        cur.pop_back();
        flush();
        cur = last;
      } else if ((prev == CharClass::kDigit) != (cls == CharClass::kDigit)) {
        boundary = true;  // letter<->digit transition
      }
      if (boundary) flush();
    }
    cur.push_back(static_cast<char>(c));
  }
  flush();
  if (parts.empty()) parts.push_back(lowercased(token_text));
  return parts;
}

}  // namespace sct
