#include "sct/mini_parser.hpp"

#include <cctype>
#include <vector>

#include "sct/error.hpp"

namespace sct {

namespace {

struct Tok {
  enum Kind { kIdent, kNumber, kString, kPunct, kEof } kind;
  std::string text;
  size_t start, end;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Tok& peek() const { return cur_; }
  Tok take() {
    Tok t = cur_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg, size_t at) const {
    int line = 1, col = 1;
    for (size_t i = 0; i < at && i < src_.size(); ++i) {
      if (src_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw SnippetReject("parse", msg + " at line " + std::to_string(line) +
                                     ", column " + std::to_string(col));
  }

 private:
  void advance() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    const size_t start = pos_;
    if (pos_ >= src_.size()) {
      cur_ = {Tok::kEof, "", start, start};
      return;
    }
    const unsigned char c = static_cast<unsigned char>(src_[pos_]);
    if (std::isalpha(c) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_')) {
        ++pos_;
      }
      cur_ = {Tok::kIdent, src_.substr(start, pos_ - start), start, pos_};
      return;
    }
    if (std::isdigit(c)) {
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '.')) {
        ++pos_;
      }
      cur_ = {Tok::kNumber, src_.substr(start, pos_ - start), start, pos_};
      return;
    }
    if (c == '"' || c == '\'') {
      const char quote = static_cast<char>(c);
      ++pos_;
      while (pos_ < src_.size() && src_[pos_] != quote && src_[pos_] != '\n') {
        if (src_[pos_] == '\\') ++pos_;
        ++pos_;
      }
      if (pos_ >= src_.size() || src_[pos_] != quote) {
        fail("unterminated string", start);
      }
      ++pos_;
      cur_ = {Tok::kString, src_.substr(start, pos_ - start), start, pos_};
      return;
    }
    static const char* kTwo[] = {"==", "!=", "<=", ">="};
    for (const char* op : kTwo) {
      if (src_.compare(pos_, 2, op) == 0) {
        pos_ += 2;
        cur_ = {Tok::kPunct, op, start, pos_};
        return;
      }
    }
    if (std::string("(){},=+-*/%<>").find(static_cast<char>(c)) !=
        std::string::npos) {
      ++pos_;
      cur_ = {Tok::kPunct, std::string(1, static_cast<char>(c)), start, pos_};
      return;
    }
    fail("unexpected character '" + std::string(1, static_cast<char>(c)) + "'",
         start);
  }

  const std::string& src_;
  size_t pos_ = 0;
  Tok cur_{Tok::kEof, "", 0, 0};
};

class Parser {
 public:
  explicit Parser(const std::string& src) : src_(src), lex_(src) {}

  AstTree parse() {
    const int fn = parse_function();
    if (lex_.peek().kind != Tok::kEof) {
      lex_.fail("trailing input after function", lex_.peek().start);
    }
    // The root spans the whole source so layout tokens around the function
    // body stay inside it.
    nodes_[fn].start = 0;
    nodes_[fn].end = src_.size();
    return AstTree::build(std::move(nodes_), fn);
  }

 private:
  int make(const std::string& type, size_t start, size_t end) {
    AstNode n;
    n.id = static_cast<int>(nodes_.size());
    n.type = type;
    n.start = start;
    n.end = end;
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  void attach(int parent, int child) { nodes_[parent].children.push_back(child); }

  Tok expect_punct(const std::string& text) {
    const Tok& t = lex_.peek();
    if (t.kind != Tok::kPunct || t.text != text) {
      lex_.fail("expected '" + text + "'", t.start);
    }
    return lex_.take();
  }

  Tok expect_ident() {
    const Tok& t = lex_.peek();
    if (t.kind != Tok::kIdent) lex_.fail("expected identifier", t.start);
    return lex_.take();
  }

  bool peek_punct(const std::string& text) const {
    return lex_.peek().kind == Tok::kPunct && lex_.peek().text == text;
  }

  int parse_function() {
    const Tok& kw = lex_.peek();
    if (kw.kind != Tok::kIdent ||
        (kw.text != "fn" && kw.text != "func" && kw.text != "def")) {
      lex_.fail("expected function keyword", kw.start);
    }
    const Tok fn_kw = lex_.take();
    const Tok name = expect_ident();
    const int fn = make("function", fn_kw.start, name.end);
    const int name_node = make("name", name.start, name.end);
    attach(fn, name_node);

    const Tok open = expect_punct("(");
    int params = make("params", open.start, open.end);
    if (!peek_punct(")")) {
      while (true) {
        const Tok p = expect_ident();
        attach(params, make("param", p.start, p.end));
        if (peek_punct(",")) {
          lex_.take();
        } else {
          break;
        }
      }
    }
    const Tok close = expect_punct(")");
    nodes_[params].end = close.end;
    attach(fn, params);

    const int block = parse_block();
    attach(fn, block);
    nodes_[fn].end = nodes_[block].end;
    return fn;
  }

  int parse_block() {
    const Tok open = expect_punct("{");
    const int block = make("block", open.start, open.end);
    while (!peek_punct("}")) {
      if (lex_.peek().kind == Tok::kEof) {
        lex_.fail("unterminated block, expected '}'", lex_.peek().start);
      }
      attach(block, parse_statement());
    }
    const Tok close = expect_punct("}");
    nodes_[block].end = close.end;
    return block;
  }

  int parse_statement() {
    const Tok& t = lex_.peek();
    if (t.kind == Tok::kIdent && t.text == "if") {
      const Tok kw = lex_.take();
      expect_punct("(");
      const int cond = parse_expression();
      expect_punct(")");
      const int then_block = parse_block();
      const int node = make("if", kw.start, nodes_[then_block].end);
      attach(node, cond);
      attach(node, then_block);
      if (lex_.peek().kind == Tok::kIdent && lex_.peek().text == "else") {
        lex_.take();
        const int else_block = parse_block();
        attach(node, else_block);
        nodes_[node].end = nodes_[else_block].end;
      }
      return node;
    }
    if (t.kind == Tok::kIdent && t.text == "return") {
      const Tok kw = lex_.take();
      const int node = make("return", kw.start, kw.end);
      if (!peek_punct("}")) {
        const int value = parse_expression();
        attach(node, value);
        nodes_[node].end = nodes_[value].end;
      }
      return node;
    }
    // Assignment or expression statement.
    const int expr = parse_expression();
    if (nodes_[expr].type == "ident" && peek_punct("=")) {
      lex_.take();
      const int value = parse_expression();
      const int node = make("assign", nodes_[expr].start, nodes_[value].end);
      attach(node, expr);
      attach(node, value);
      return node;
    }
    return expr;
  }

  int parse_expression() { return parse_comparison(); }

  int parse_comparison() {
    int lhs = parse_sum();
    const Tok& t = lex_.peek();
    if (t.kind == Tok::kPunct &&
        (t.text == "==" || t.text == "!=" || t.text == "<" || t.text == ">" ||
         t.text == "<=" || t.text == ">=")) {
      lex_.take();
      const int rhs = parse_sum();
      const int node = make("binop", nodes_[lhs].start, nodes_[rhs].end);
      attach(node, lhs);
      attach(node, rhs);
      return node;
    }
    return lhs;
  }

  int parse_sum() {
    int lhs = parse_product();
    while (peek_punct("+") || peek_punct("-")) {
      lex_.take();
      const int rhs = parse_product();
      const int node = make("binop", nodes_[lhs].start, nodes_[rhs].end);
      attach(node, lhs);
      attach(node, rhs);
      lhs = node;
    }
    return lhs;
  }

  int parse_product() {
    int lhs = parse_primary();
    while (peek_punct("*") || peek_punct("/") || peek_punct("%")) {
      lex_.take();
      const int rhs = parse_primary();
      const int node = make("binop", nodes_[lhs].start, nodes_[rhs].end);
      attach(node, lhs);
      attach(node, rhs);
      lhs = node;
    }
    return lhs;
  }

  int parse_primary() {
    const Tok& t = lex_.peek();
    if (t.kind == Tok::kIdent) {
      const Tok id = lex_.take();
      if (peek_punct("(")) {
        lex_.take();
        const int call = make("call", id.start, id.end);
        attach(call, make("ident", id.start, id.end));
        if (!peek_punct(")")) {
          while (true) {
            attach(call, parse_expression());
            if (peek_punct(",")) {
              lex_.take();
            } else {
              break;
            }
          }
        }
        const Tok close = expect_punct(")");
        nodes_[call].end = close.end;
        return call;
      }
      return make("ident", id.start, id.end);
    }
    if (t.kind == Tok::kNumber) {
      const Tok num = lex_.take();
      return make("number", num.start, num.end);
    }
    if (t.kind == Tok::kString) {
      const Tok s = lex_.take();
      return make("string", s.start, s.end);
    }
    if (peek_punct("(")) {
      lex_.take();
      const int inner = parse_expression();
      expect_punct(")");
      return inner;
    }
    lex_.fail("expected expression", t.start);
  }

  const std::string& src_;
  Lexer lex_;
  std::vector<AstNode> nodes_;
};

}  // namespace

AstTree parse_mini(const std::string& source) {
  return Parser(source).parse();
}

int mini_name_node(const AstTree& tree) {
  for (int c : tree.node(tree.root()).children) {
    if (tree.node(c).type == "name") return c;
  }
  throw SnippetReject("no-name", "function has no name node");
}

}  // namespace sct
