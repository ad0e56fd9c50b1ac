#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "efuf/extraction.hpp"

namespace efuf {

struct LabeledObject {
  std::string phrase;
  int hallucinated = 0;  // h(o)
};

struct AnnotatedResponse {
  std::string image_id;
  std::string response;
  std::vector<LabeledObject> objects;
};

/// Lexicon objects of `response` as unique canonical categories, each labeled
/// hallucinated when absent from `ground_truth` (canonical names).
AnnotatedResponse annotate_response(std::string image_id, std::string response,
                                    const std::set<std::string>& ground_truth, const Lexicon& lexicon);

struct ChairScores {
  double chair_s = 0.0;
  double chair_i = 0.0;
  std::size_t responses = 0;
  std::size_t objects = 0;
  std::size_t hallucinated_objects = 0;
  std::size_t hallucinated_responses = 0;
};

/// CHAIR_i = hallucinated objects / objects; CHAIR_s = responses with at
/// least one hallucinated object / responses. DomainError when no objects.
ChairScores chair(std::span<const AnnotatedResponse> responses);

/// Lowercased word/punctuation tokens used for BLEU.
std::vector<std::string> bleu_tokens(std::string_view text);

/// Corpus BLEU with uniform weights over 1..n-grams, clipped counts, and the
/// closest-reference-length brevity penalty. Returns 0 when any order has no
/// matches or the candidates are empty.
double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::vector<std::string>>>& references, int n);

/// BLEU-n of one candidate text (n in {1, 2, 4}).
double bleu_n(std::string_view candidate, const std::vector<std::string>& references, int n);

/// Corpus BLEU-n over texts: candidates[i] is scored against references[i].
double corpus_bleu_text(const std::vector<std::string>& candidates,
                        const std::vector<std::vector<std::string>>& references, int n);

/// Per-token log-probabilities of a text under a language model.
class LmScorer {
 public:
  virtual ~LmScorer() = default;
  virtual std::string id() const = 0;
  /// nullopt when the scorer is unavailable.
  virtual std::optional<std::vector<double>> token_logprobs(std::string_view text) const = 0;
};

/// Mean token negative log-likelihood. nullopt (metric skipped) when no
/// scorer is configured or it is unavailable; DomainError on empty text.
std::optional<double> fluency(const LmScorer* scorer, std::string_view text);

/// Add-k smoothed word bigram model fitted on reference text; a desk-scale
/// stand-in for a pretrained LM scorer.
class BigramScorer final : public LmScorer {
 public:
  explicit BigramScorer(std::span<const std::string> corpus, double add_k = 1.0);
  std::string id() const override { return "bigram-addk"; }
  std::optional<std::vector<double>> token_logprobs(std::string_view text) const override;

 private:
  double add_k_;
  std::set<std::string> vocab_;
  std::map<std::string, double> context_counts_;
  std::map<std::pair<std::string, std::string>, double> pair_counts_;
};

/// Scores how well a caption covers the annotated content of an image.
/// No client is bundled; evaluation marks the column absent without one.
class InformativenessJudge {
 public:
  virtual ~InformativenessJudge() = default;
  virtual std::optional<double> score(std::string_view image_id, std::span<const std::string> objects,
                                      std::string_view reference, std::string_view candidate) = 0;
};

}  // namespace efuf
