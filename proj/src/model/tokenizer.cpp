#include "perfalign/model/tokenizer.hpp"

#include <algorithm>

#include "perfalign/error.hpp"

namespace perfalign {

namespace {

std::vector<std::string> default_vocabulary() {
  std::vector<std::string> v{"<pad>", "<bos>", "<eos>", "<unk>", "\n", "\t"};
  for (char c = 32; c < 127; ++c) v.emplace_back(1, c);
  for (const char* merge : {"### Instruction:\n", "### Response:\n", "```", "Optimize the following code:", "while",
                            "print", "else", "if", " and ", " or ", "not ", "==", "<=", ">=", "!=", "Print ",
                            " the ", "sum", "+...+"}) {
    v.emplace_back(merge);
  }
  for (int i = 0; i < 10; ++i) v.push_back("in" + std::to_string(i));
  return v;
}

}  // namespace

Tokenizer::Tokenizer() : Tokenizer(default_vocabulary()) {}

Tokenizer::Tokenizer(std::vector<std::string> vocabulary) : vocab_(std::move(vocabulary)) {
  if (vocab_.size() < 4) throw ValidationError("tokenizer vocabulary must include the four special tokens");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!lookup_.emplace(vocab_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate vocabulary entry '" + vocab_[i] + "'");
    }
    if (i >= 4) longest_ = std::max(longest_, vocab_[i].size());
  }
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  std::size_t i = 0;
  std::string piece;
  while (i < text.size()) {
    int found = kUnk;
    std::size_t len = 1;
    for (std::size_t n = std::min(longest_, text.size() - i); n >= 1; --n) {
      piece.assign(text.substr(i, n));
      auto it = lookup_.find(piece);
      if (it != lookup_.end() && it->second >= 4) {
        found = it->second;
        len = n;
        break;
      }
    }
    ids.push_back(found);
    i += len;
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) throw ValidationError("token id " + std::to_string(id) + " out of range");
    if (id < 4) continue;
    out += vocab_[static_cast<std::size_t>(id)];
  }
  return out;
}

int Tokenizer::id_of(std::string_view piece) const {
  auto it = lookup_.find(std::string(piece));
  return it == lookup_.end() ? kUnk : it->second;
}

}  // namespace perfalign
