#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "efuf/relevance.hpp"

namespace efuf {

struct CaptionRecord {
  std::string image_id;
  ImageRef image;
  std::string prompt;
  std::string caption;

  /// Throws DomainError when the caption is empty.
  void validate() const;
};

/// Half-open character span [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  bool operator==(const Span&) const = default;
};

struct ObjectMention {
  std::string phrase;
  Span span;
  /// 1 = hallucinated, 0 = present in the image; unset when unannotated.
  std::optional<int> gold_label;
  bool operator==(const ObjectMention&) const = default;
};

class ExtractorBackend {
 public:
  virtual ~ExtractorBackend() = default;
  /// Object phrases found in the caption. Failures raise ExtractionError.
  virtual std::vector<std::string> extract(std::string_view caption) = 0;
};

/// Surface forms (incl. plurals and synonyms) mapped to canonical categories.
class Lexicon {
 public:
  /// Parses `canonical<TAB>syn,syn` lines; `#` lines are comments.
  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);
  /// The bundled COCO category table.
  static const Lexicon& coco();

  void add(std::string_view canonical, std::string_view surface);
  /// Canonical category of a surface form (case-insensitive).
  std::optional<std::string> canonical(std::string_view surface) const;
  const std::map<std::string, std::string>& surface_forms() const { return forms_; }
  std::vector<std::string> categories() const;
  std::size_t max_words() const { return max_words_; }

 private:
  std::map<std::string, std::string> forms_;  // lowercase surface -> canonical
  std::size_t max_words_ = 1;
};

/// Maximal (longest) surface-form matches on word boundaries, left to right.
/// Returns the matched text as it appears in the caption.
std::vector<std::string> lexicon_extract(std::string_view caption, const Lexicon& lexicon);

class LexiconExtractor final : public ExtractorBackend {
 public:
  explicit LexiconExtractor(const Lexicon& lexicon) : lexicon_(&lexicon) {}
  std::vector<std::string> extract(std::string_view caption) override {
    return lexicon_extract(caption, *lexicon_);
  }

 private:
  const Lexicon* lexicon_;
};

struct RemoteExtractorConfig {
  std::string endpoint;  // e.g. http://host:port/v1/extract
  std::string model;
  std::string auth_token;
  int max_in_flight = 4;
  int max_attempts = 3;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds retry_backoff{200};
};

/// LLM-backed extractor. POSTs {"model", "prompt"} and expects a JSON body
/// whose "phrases" field is a list, or a string with one phrase per line. Requests are idempotent and retried on transport
/// errors and 5xx responses; at most max_in_flight requests run at once.
class RemoteExtractor final : public ExtractorBackend {
 public:
  explicit RemoteExtractor(RemoteExtractorConfig config);
  std::vector<std::string> extract(std::string_view caption) override;

  /// Peak number of simultaneous requests observed.
  int peak_in_flight() const { return peak_.load(); }

 private:
  RemoteExtractorConfig config_;
  std::counting_semaphore<1024> slots_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

/// Phrases from a line-per-phrase reply; list markers and blanks are dropped.
std::vector<std::string> parse_phrase_lines(std::string_view text);

/// The instruction sent to the remote extractor (our own wording).
std::string extraction_prompt(std::string_view caption);

struct ExtractionResult {
  std::vector<ObjectMention> mentions;
  /// Phrases the backend returned that could not be aligned.
  std::size_t dropped = 0;
};

/// Aligns each returned phrase to its leftmost unclaimed, non-overlapping,
/// word-bounded occurrence (case-insensitive); output sorted by span start.
ExtractionResult align_phrases(std::string_view caption, const std::vector<std::string>& phrases);

ExtractionResult extract_objects(ExtractorBackend& backend, const CaptionRecord& record);

std::string to_lower(std::string_view s);
bool is_word_char(char c);

}  // namespace efuf
