#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace perfalign {

/// Character-level vocabulary plus whole-token merges for minilang keywords
/// and the prompt layout markers. Encoding is greedy longest match.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  /// The default vocabulary: specials, '\n', '\t', printable ASCII, merges.
  Tokenizer();
  explicit Tokenizer(std::vector<std::string> vocabulary);

  std::vector<int> encode(std::string_view text) const;
  /// Special tokens decode to nothing.
  std::string decode(const std::vector<int>& ids) const;

  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  int id_of(std::string_view piece) const;

  friend bool operator==(const Tokenizer& a, const Tokenizer& b) { return a.vocab_ == b.vocab_; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> lookup_;
  std::size_t longest_ = 1;
};

}  // namespace perfalign
