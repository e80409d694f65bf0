#pragma once

#include <string>

#include "sct/ast.hpp"

namespace sct {

// Recursive-descent parser for the built-in demo mini-language (grammar in
// README.md): named functions with parameters, blocks of if / return /
// assignment / call statements, binary operators, parenthesized expressions.
// Produces an AST whose leaf ranges coincide with identifier and literal
// tokens. Throws SnippetReject("parse", ...) with line/column on error.
AstTree parse_mini(const std::string& source);

// Node id of the function's declared-name leaf (type "name").
int mini_name_node(const AstTree& tree);

}  // namespace sct
