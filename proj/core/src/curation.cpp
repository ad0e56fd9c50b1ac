#include "efuf/curation.hpp"

#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "efuf/error.hpp"
#include "efuf/rng.hpp"

namespace efuf {

namespace {

bool is_delimiter(char c) {
  switch (c) {
    case '.':
    case ',':
    case ';':
    case ':':
    case '!':
    case '?':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::vector<Span> split_subsentences(std::string_view caption) {
  std::vector<Span> spans;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < caption.size()) {
    if (is_delimiter(caption[i])) {
      while (i < caption.size() && is_delimiter(caption[i])) ++i;
      spans.push_back({start, i});
      start = i;
    } else {
      ++i;
    }
  }
  if (start < caption.size()) spans.push_back({start, caption.size()});
  return spans;
}

SubsentenceSplit locate(const CaptionRecord& record, const ObjectMention& mention) {
  const auto& caption = record.caption;
  if (mention.span.end > caption.size() || mention.span.start >= mention.span.end) {
    throw CurationError("mention '" + mention.phrase + "' has an invalid span");
  }
  for (const auto& sub : split_subsentences(caption)) {
    if (sub.start <= mention.span.start && mention.span.end <= sub.end) {
      return {record.prompt + caption.substr(0, sub.start), caption.substr(sub.start, sub.size())};
    }
    if (mention.span.start < sub.end && sub.end < mention.span.end) break;
  }
  throw CurationError("mention '" + mention.phrase + "' in image '" + record.image_id +
                      "' straddles a subsentence boundary");
}

void Thresholds::validate() const {
  if (!(t1 < t0)) throw ConfigError("thresholds require T1 < T0");
}

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::PositiveSub:
      return "POSITIVE_SUB";
    case Polarity::NegativeSub:
      return "NEGATIVE_SUB";
    case Polarity::Sentence:
      return "SENTENCE";
  }
  return "SENTENCE";
}

Polarity polarity_from_string(std::string_view s) {
  if (s == "POSITIVE_SUB") return Polarity::PositiveSub;
  if (s == "NEGATIVE_SUB") return Polarity::NegativeSub;
  if (s == "SENTENCE") return Polarity::Sentence;
  throw DomainError("unknown polarity '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const UnlearningSample& s) {
  j = nlohmann::json{{"image_id", s.image_id},
                     {"context", s.context},
                     {"target", s.target},
                     {"polarity", std::string(to_string(s.polarity))},
                     {"provenance_score", s.provenance_score}};
}

void from_json(const nlohmann::json& j, UnlearningSample& s) {
  s.image_id = j.at("image_id").get<std::string>();
  s.context = j.at("context").get<std::string>();
  s.target = j.at("target").get<std::string>();
  s.polarity = polarity_from_string(j.at("polarity").get<std::string>());
  s.provenance_score = j.at("provenance_score").get<double>();
  if (s.target.empty()) throw DomainError("unlearning sample with empty target");
}

UnlearningDatasets curate(std::span<const CaptionMentions> corpus, const Thresholds& thresholds,
                          std::uint64_t seed) {
  thresholds.validate();
  UnlearningDatasets out;
  std::set<std::tuple<std::string, std::string, Polarity>> seen;
  auto emit = [&](std::vector<UnlearningSample>& into, UnlearningSample sample) {
    if (sample.target.empty()) return;
    if (!seen.emplace(sample.context, sample.target, sample.polarity).second) return;
    into.push_back(std::move(sample));
  };

  for (const auto& item : corpus) {
    if (item.mentions.empty()) continue;
    const auto& rec = item.record;
    std::vector<RelevanceScore> scores;
    for (const auto& sm : item.mentions) {
      scores.push_back({sm.score});
      const bool pos = sm.score > thresholds.t0;
      const bool neg = sm.score < thresholds.t1;
      if (!pos && !neg) continue;
      auto split = locate(rec, sm.mention);
      emit(pos ? out.positive : out.negative,
           {rec.image_id, std::move(split.pre), std::move(split.cur),
            pos ? Polarity::PositiveSub : Polarity::NegativeSub, sm.score});
    }
    const double sentence = score_sentence(scores);
    if (sentence > thresholds.t2) {
      emit(out.sentence, {rec.image_id, rec.prompt, rec.caption, Polarity::Sentence, sentence});
    }
  }

  Rng(seed, "curation.d_pos").shuffle(out.positive);
  Rng(seed, "curation.d_neg").shuffle(out.negative);
  Rng(seed, "curation.d_sent").shuffle(out.sentence);
  return out;
}

}  // namespace efuf
