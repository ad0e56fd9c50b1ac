#include "efuf/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "efuf/error.hpp"

namespace efuf {

namespace {

constexpr std::string_view kSpecials[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\''; }

bool attaches_left(std::string_view tok) {
  return tok.size() == 1 && std::string_view(".,;:!?").find(tok[0]) != std::string_view::npos;
}

}  // namespace

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (word_char(c)) {
      const std::size_t start = i;
      while (i < text.size() && word_char(text[i])) ++i;
      out.emplace_back(text.substr(start, i - start));
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (auto& w : split(t)) words.insert(std::move(w));
  }
  std::vector<std::string> vocab(std::begin(kSpecials), std::end(kSpecials));
  for (const auto& w : words) {
    if (std::find(std::begin(kSpecials), std::end(kSpecials), w) == std::end(kSpecials)) vocab.push_back(w);
  }
  return from_vocabulary(std::move(vocab));
}

Tokenizer Tokenizer::from_vocabulary(std::vector<std::string> vocabulary) {
  if (vocabulary.size() < std::size(kSpecials)) throw ConfigError("vocabulary lacks reserved tokens");
  for (std::size_t i = 0; i < std::size(kSpecials); ++i) {
    if (vocabulary[i] != kSpecials[i]) throw ConfigError("vocabulary reserved tokens out of order");
  }
  Tokenizer tok;
  tok.vocab_ = std::move(vocabulary);
  for (std::size_t i = 0; i < tok.vocab_.size(); ++i) {
    if (!tok.index_.emplace(tok.vocab_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate vocabulary entry '" + tok.vocab_[i] + "'");
    }
  }
  return tok;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split(text)) {
    auto it = index_.find(w);
    ids.push_back(it == index_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    const auto& tok = token(id);
    if (!out.empty() && !attaches_left(tok)) out += ' ';
    out += tok;
  }
  return out;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= size()) throw ShapeError("token id " + std::to_string(id) + " out of range");
  return vocab_[static_cast<std::size_t>(id)];
}

std::string normalize_spacing(std::string_view text) {
  std::string out;
  for (const auto& tok : Tokenizer::split(text)) {
    if (!out.empty() && !attaches_left(tok)) out += ' ';
    out += tok;
  }
  return out;
}

}  // namespace efuf
