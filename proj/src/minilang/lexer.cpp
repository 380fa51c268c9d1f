#include "lexer.hpp"

#include <cctype>
#include <limits>

#include "perfalign/error.hpp"

namespace perfalign::minilang::detail {

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

Tok keyword_or_identifier(std::string_view word) {
  if (word == "while") return Tok::kw_while;
  if (word == "if") return Tok::kw_if;
  if (word == "else") return Tok::kw_else;
  if (word == "print") return Tok::kw_print;
  if (word == "and") return Tok::kw_and;
  if (word == "or") return Tok::kw_or;
  if (word == "not") return Tok::kw_not;
  if (word.size() == 3 && word[0] == 'i' && word[1] == 'n' && std::isdigit(static_cast<unsigned char>(word[2]))) {
    return Tok::input;
  }
  return Tok::identifier;
}

}  // namespace

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };

  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token tok;
    tok.line = line;
    tok.column = col;

    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      std::uint64_t v = 0;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
        const auto digit = static_cast<std::uint64_t>(src[j] - '0');
        if (v > (static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) - digit) / 10) {
          throw ParseError("integer literal out of range", line, col);
        }
        v = v * 10 + digit;
        ++j;
      }
      if (j < src.size() && is_ident_start(src[j])) {
        throw ParseError("malformed number", line, col);
      }
      tok.kind = Tok::integer;
      tok.value = static_cast<std::int64_t>(v);
      tok.text = std::string(src.substr(i, j - i));
      advance(j - i);
      out.push_back(std::move(tok));
      continue;
    }

    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && is_ident_char(src[j])) ++j;
      tok.text = std::string(src.substr(i, j - i));
      tok.kind = keyword_or_identifier(tok.text);
      if (tok.kind == Tok::input) tok.value = tok.text[2] - '0';
      advance(j - i);
      out.push_back(std::move(tok));
      continue;
    }

    const char next = i + 1 < src.size() ? src[i + 1] : '\0';
    std::size_t len = 1;
    switch (c) {
      case '(': tok.kind = Tok::lparen; break;
      case ')': tok.kind = Tok::rparen; break;
      case '{': tok.kind = Tok::lbrace; break;
      case '}': tok.kind = Tok::rbrace; break;
      case ';': tok.kind = Tok::semicolon; break;
      case '+': tok.kind = Tok::plus; break;
      case '-': tok.kind = Tok::minus; break;
      case '*': tok.kind = Tok::star; break;
      case '/': tok.kind = Tok::slash; break;
      case '%': tok.kind = Tok::percent; break;
      case '<':
        if (next == '=') { tok.kind = Tok::le; len = 2; } else { tok.kind = Tok::lt; }
        break;
      case '>':
        if (next == '=') { tok.kind = Tok::ge; len = 2; } else { tok.kind = Tok::gt; }
        break;
      case '=':
        if (next == '=') { tok.kind = Tok::eq; len = 2; } else { tok.kind = Tok::assign; }
        break;
      case '!':
        if (next == '=') { tok.kind = Tok::ne; len = 2; break; }
        throw ParseError("unexpected character '!'", line, col);
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    tok.text = std::string(src.substr(i, len));
    advance(len);
    out.push_back(std::move(tok));
  }

  Token end;
  end.kind = Tok::end;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

const char* describe(Tok kind) {
  switch (kind) {
    case Tok::end: return "end of input";
    case Tok::integer: return "integer";
    case Tok::identifier: return "identifier";
    case Tok::input: return "input reference";
    case Tok::kw_while: return "'while'";
    case Tok::kw_if: return "'if'";
    case Tok::kw_else: return "'else'";
    case Tok::kw_print: return "'print'";
    case Tok::kw_and: return "'and'";
    case Tok::kw_or: return "'or'";
    case Tok::kw_not: return "'not'";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbrace: return "'{'";
    case Tok::rbrace: return "'}'";
    case Tok::semicolon: return "';'";
    case Tok::assign: return "'='";
    case Tok::plus: return "'+'";
    case Tok::minus: return "'-'";
    case Tok::star: return "'*'";
    case Tok::slash: return "'/'";
    case Tok::percent: return "'%'";
    case Tok::lt: return "'<'";
    case Tok::le: return "'<='";
    case Tok::gt: return "'>'";
    case Tok::ge: return "'>='";
    case Tok::eq: return "'=='";
    case Tok::ne: return "'!='";
  }
  return "token";
}

}  // namespace perfalign::minilang::detail
