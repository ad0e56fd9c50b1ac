#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace efuf {

/// Word-level tokenizer: runs of letters/digits/apostrophes are words, every
/// other non-space character is its own token. Ids 0..3 are reserved.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  /// Vocabulary = specials followed by the sorted distinct tokens of `texts`.
  static Tokenizer build(std::span<const std::string> texts);
  /// Restores a tokenizer from a saved vocabulary (specials included).
  static Tokenizer from_vocabulary(std::vector<std::string> vocabulary);

  static std::vector<std::string> split(std::string_view text);

  std::vector<int> encode(std::string_view text) const;
  /// Joins tokens with single spaces, without a space before punctuation.
  /// Padding and the begin/end markers are not rendered.
  std::string decode(std::span<const int> ids) const;

  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  const std::string& token(int id) const;
  bool operator==(const Tokenizer& other) const { return vocab_ == other.vocab_; }

 private:
  std::vector<std::string> vocab_;
  std::map<std::string, int, std::less<>> index_;
};

/// Whitespace-normalized form that decode(encode(text)) reproduces.
std::string normalize_spacing(std::string_view text);

}  // namespace efuf
