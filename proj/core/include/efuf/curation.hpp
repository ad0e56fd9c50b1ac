#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "efuf/extraction.hpp"

namespace efuf {

/// Subsentence spans of a caption. A span ends after each run of delimiter
/// characters (. , ; : ! ?); whitespace belongs to the following span; an
/// undelimited tail forms the last span. The spans tile the caption.
std::vector<Span> split_subsentences(std::string_view caption);

struct SubsentenceSplit {
  std::string pre;  // prompt + caption text before `cur`
  std::string cur;  // subsentence holding the object, delimiter included
};

/// CurationError when the mention is not inside exactly one subsentence.
SubsentenceSplit locate(const CaptionRecord& record, const ObjectMention& mention);

struct Thresholds {
  double t0 = 32.0;   // positive-object floor
  double t1 = 23.0;   // negative-object ceiling
  double t2 = 27.5;   // sentence floor
  /// ConfigError unless t1 < t0.
  void validate() const;
};

enum class Polarity { PositiveSub, NegativeSub, Sentence };

std::string_view to_string(Polarity p);
Polarity polarity_from_string(std::string_view s);

struct UnlearningSample {
  std::string image_id;
  std::string context;
  std::string target;
  Polarity polarity = Polarity::Sentence;
  double provenance_score = 0.0;
  bool operator==(const UnlearningSample&) const = default;
};

void to_json(nlohmann::json& j, const UnlearningSample& s);
void from_json(const nlohmann::json& j, UnlearningSample& s);

struct ScoredMention {
  ObjectMention mention;
  double score = 0.0;
};

struct CaptionMentions {
  CaptionRecord record;
  std::vector<ScoredMention> mentions;
};

struct UnlearningDatasets {
  std::vector<UnlearningSample> positive;  // D+
  std::vector<UnlearningSample> negative;  // D-
  std::vector<UnlearningSample> sentence;  // Ds
};

/// Builds D+, D-, Ds by thresholding object and sentence scores. Duplicate
/// (context, target, polarity) triples keep their first occurrence; each
/// dataset is then shuffled with a stream derived from `seed`.
UnlearningDatasets curate(std::span<const CaptionMentions> corpus, const Thresholds& thresholds,
                          std::uint64_t seed);

}  // namespace efuf
