#include "sct/normalize.hpp"

#include <cctype>
#include <cmath>
#include <unordered_set>

#include "sct/error.hpp"

namespace sct {

namespace {

const std::string kKindNames[kNumTokenKinds] = {
    "identifier", "keyword",    "punctuation", "string-literal",
    "number-literal", "comment", "whitespace", "newline",
    "indent",     "dedent"};

struct CommentStyle {
  bool hash = false;        // "# ..."
  bool slash_line = false;  // "// ..."
  bool slash_block = false; // "/* ... */"
};

CommentStyle comment_style(const std::string& lang) {
  if (lang == "python" || lang == "ruby" || lang == "minilang" ||
      lang == "minilang2") {
    return {true, false, false};
  }
  if (lang == "javascript" || lang == "go" || lang == "java") {
    return {false, true, true};
  }
  return {true, true, true};
}

const std::unordered_set<std::string>& keywords(const std::string& lang) {
  static const std::unordered_set<std::string> kMini = {
      "fn", "func", "def", "if", "else", "return"};
  static const std::unordered_set<std::string> kPython = {
      "def",   "if",    "elif",  "else",  "return", "for",   "while",
      "in",    "not",   "and",   "or",    "import", "from",  "class",
      "pass",  "raise", "try",   "except", "with",  "as",    "lambda",
      "None",  "True",  "False", "yield", "global", "del",   "is",
      "break", "continue", "assert", "finally"};
  static const std::unordered_set<std::string> kCurly = {
      "function", "func",   "var",    "let",   "const",  "if",     "else",
      "return",   "for",    "while",  "do",    "switch", "case",   "break",
      "continue", "new",    "delete", "type",  "struct", "interface",
      "package",  "import", "range",  "go",    "defer",  "select", "chan",
      "map",      "class",  "public", "private", "protected", "static",
      "void",     "int",    "float",  "double", "boolean", "true",  "false",
      "null",     "nil",    "this",   "throw", "throws", "try",    "catch",
      "finally",  "extends", "implements"};
  if (lang == "minilang" || lang == "minilang2") return kMini;
  if (lang == "python" || lang == "ruby") return kPython;
  return kCurly;
}

bool is_ident_start(unsigned char c) {
  return std::isalpha(c) || c == '_' || c >= 0x80;
}
bool is_ident_char(unsigned char c) {
  return std::isalnum(c) || c == '_' || c >= 0x80;
}

// Multi-character operators recognized as single punctuation tokens.
bool is_two_char_op(char a, char b) {
  static const char* kOps[] = {"==", "!=", "<=", ">=", "->", "=>", "&&",
                               "||", "+=", "-=", "*=", "/=", "::", ":=",
                               "<<", ">>", "**", "..", "//"};
  for (const char* op : kOps) {
    if (op[0] == a && op[1] == b) return true;
  }
  return false;
}

// Pass A: full lexical scan keeping comments, whitespace runs and newlines.
std::vector<RawToken> scan(const std::string& src, const std::string& lang) {
  const CommentStyle style = comment_style(lang);
  const auto& kw = keywords(lang);
  std::vector<RawToken> out;
  const size_t n = src.size();
  size_t i = 0;
  while (i < n) {
    const char c = src[i];
    const size_t start = i;
    if (c == '\n') {
      out.push_back({"\n", TokenKind::kNewline, start, start + 1});
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      while (i < n && (src[i] == ' ' || src[i] == '\t' || src[i] == '\r')) ++i;
      out.push_back(
          {src.substr(start, i - start), TokenKind::kWhitespace, start, i});
      continue;
    }
    if (style.hash && c == '#') {
      while (i < n && src[i] != '\n') ++i;
      out.push_back(
          {src.substr(start, i - start), TokenKind::kComment, start, i});
      continue;
    }
    if (style.slash_line && c == '/' && i + 1 < n && src[i + 1] == '/') {
      while (i < n && src[i] != '\n') ++i;
      out.push_back(
          {src.substr(start, i - start), TokenKind::kComment, start, i});
      continue;
    }
    if (style.slash_block && c == '/' && i + 1 < n && src[i + 1] == '*') {
      i += 2;
      while (i + 1 < n && !(src[i] == '*' && src[i + 1] == '/')) ++i;
      if (i + 1 >= n) {
        throw SnippetReject("tokenizer", "unterminated block comment at byte " +
                                             std::to_string(start));
      }
      i += 2;
      out.push_back(
          {src.substr(start, i - start), TokenKind::kComment, start, i});
      continue;
    }
    if (c == '"' || c == '\'' || c == '`') {
      const char quote = c;
      // Triple-quoted strings (doc strings count as string literals).
      bool triple = false;
      if (i + 2 < n && src[i + 1] == quote && src[i + 2] == quote &&
          (quote == '"' || quote == '\'')) {
        triple = true;
        i += 3;
        while (i + 2 < n && !(src[i] == quote && src[i + 1] == quote &&
                              src[i + 2] == quote)) {
          if (src[i] == '\\') ++i;
          ++i;
        }
        if (i + 2 >= n) {
          throw SnippetReject(
              "tokenizer",
              "unterminated string at byte " + std::to_string(start));
        }
        i += 3;
      } else {
        ++i;
        while (i < n && src[i] != quote) {
          if (src[i] == '\\' && i + 1 < n) ++i;
          if (src[i] == '\n') break;  // plain strings do not span lines
          ++i;
        }
        if (i >= n || src[i] != quote) {
          throw SnippetReject(
              "tokenizer",
              "unterminated string at byte " + std::to_string(start));
        }
        ++i;
      }
      (void)triple;
      out.push_back({kMaskString, TokenKind::kStringLiteral, start, i});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++i;
      bool hex = false;
      if (c == '0' && i < n && (src[i] == 'x' || src[i] == 'X')) {
        hex = true;
        ++i;
      }
      while (i < n) {
        const unsigned char d = static_cast<unsigned char>(src[i]);
        if (std::isdigit(d) || d == '.' || d == '_' ||
            (hex && std::isxdigit(d)) ||
            (!hex && (d == 'e' || d == 'E')) ||
            ((d == '+' || d == '-') && (src[i - 1] == 'e' || src[i - 1] == 'E'))) {
          ++i;
        } else {
          break;
        }
      }
      out.push_back({kMaskNumber, TokenKind::kNumberLiteral, start, i});
      continue;
    }
    if (is_ident_start(static_cast<unsigned char>(c))) {
      ++i;
      while (i < n && is_ident_char(static_cast<unsigned char>(src[i]))) ++i;
      std::string text = src.substr(start, i - start);
      const TokenKind kind =
          kw.count(text) ? TokenKind::kKeyword : TokenKind::kIdentifier;
      out.push_back({std::move(text), kind, start, i});
      continue;
    }
    if (std::isprint(static_cast<unsigned char>(c))) {
      size_t len = 1;
      if (i + 1 < n && is_two_char_op(c, src[i + 1])) len = 2;
      out.push_back(
          {src.substr(start, len), TokenKind::kPunctuation, start, start + len});
      i += len;
      continue;
    }
    throw SnippetReject("tokenizer", "unlexable byte 0x" +
                                         std::to_string(int(static_cast<unsigned char>(c))) +
                                         " at offset " + std::to_string(start));
  }
  return out;
}

bool substantive(const RawToken& t) {
  return t.kind != TokenKind::kComment && t.kind != TokenKind::kWhitespace &&
         t.kind != TokenKind::kNewline;
}

// Leading-whitespace width; tabs count four columns. The indent unit is
// inferred from the first indented line and mixed indentation is rounded to
// whole units.
int ws_width(const std::string& text) {
  int w = 0;
  for (char c : text) w += (c == '\t') ? 4 : 1;
  return w;
}

}  // namespace

const std::string& token_kind_name(TokenKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

TokenKind token_kind_from_name(const std::string& name) {
  for (int k = 0; k < kNumTokenKinds; ++k) {
    if (kKindNames[k] == name) return static_cast<TokenKind>(k);
  }
  throw DataError("unknown token kind: " + name);
}

std::vector<RawToken> normalize(const std::string& source,
                                const std::string& lang) {
  const std::vector<RawToken> raw = scan(source, lang);
  std::vector<RawToken> out;
  out.reserve(raw.size());

  int unit = 0;   // inferred indent unit in columns
  int level = 0;  // current indentation level
  size_t i = 0;
  const size_t n = raw.size();
  while (i < n) {
    // One physical line: tokens up to and including the newline.
    size_t j = i;
    while (j < n && raw[j].kind != TokenKind::kNewline) ++j;
    const bool has_newline = j < n;
    bool any = false;
    for (size_t t = i; t < j; ++t) {
      if (substantive(raw[t])) {
        any = true;
        break;
      }
    }
    if (!any) {  // empty line (or comment-only): removed entirely
      i = has_newline ? j + 1 : j;
      continue;
    }
    // Indentation from the line's leading whitespace token.
    int width = 0;
    size_t first = i;
    if (raw[first].kind == TokenKind::kWhitespace) {
      width = ws_width(raw[first].text);
      ++first;
    }
    if (width > 0 && unit == 0) unit = width;
    const int new_level = (unit > 0)
        ? static_cast<int>(std::lround(double(width) / unit))
        : 0;
    const size_t anchor = raw[first].start;
    for (; level < new_level; ++level) {
      out.push_back({kIndentText, TokenKind::kIndent, anchor, anchor});
    }
    for (; level > new_level; --level) {
      out.push_back({kDedentText, TokenKind::kDedent, anchor, anchor});
    }
    for (size_t t = first; t < j; ++t) {
      if (substantive(raw[t])) out.push_back(raw[t]);
    }
    if (has_newline) {
      out.push_back(raw[j]);
      i = j + 1;
    } else {
      i = j;
    }
  }
  // Close any open indentation at end of input.
  const size_t eof = source.size();
  for (; level > 0; --level) {
    out.push_back({kDedentText, TokenKind::kDedent, eof, eof});
  }
  return out;
}

}  // namespace sct
