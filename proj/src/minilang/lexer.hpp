#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace perfalign::minilang::detail {

enum class Tok {
  end,
  integer,
  identifier,
  input,
  kw_while,
  kw_if,
  kw_else,
  kw_print,
  kw_and,
  kw_or,
  kw_not,
  lparen,
  rparen,
  lbrace,
  rbrace,
  semicolon,
  assign,
  plus,
  minus,
  star,
  slash,
  percent,
  lt,
  le,
  gt,
  ge,
  eq,
  ne,
};

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::int64_t value = 0;
  int line = 1;
  int column = 1;
};

std::vector<Token> tokenize(std::string_view source);

const char* describe(Tok kind);

}  // namespace perfalign::minilang::detail
