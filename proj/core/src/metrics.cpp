#include "efuf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "efuf/error.hpp"
#include "efuf/tokenizer.hpp"

namespace efuf {

AnnotatedResponse annotate_response(std::string image_id, std::string response,
                                    const std::set<std::string>& ground_truth, const Lexicon& lexicon) {
  AnnotatedResponse out{std::move(image_id), std::move(response), {}};
  std::set<std::string> seen;
  for (const auto& surface : lexicon_extract(out.response, lexicon)) {
    const auto canonical = *lexicon.canonical(surface);
    if (!seen.insert(canonical).second) continue;
    out.objects.push_back({canonical, ground_truth.contains(canonical) ? 0 : 1});
  }
  return out;
}

ChairScores chair(std::span<const AnnotatedResponse> responses) {
  ChairScores s;
  s.responses = responses.size();
  for (const auto& r : responses) {
    bool any = false;
    for (const auto& o : r.objects) {
      if (o.hallucinated != 0 && o.hallucinated != 1) throw DomainError("hallucination labels must be 0 or 1");
      ++s.objects;
      if (o.hallucinated == 1) {
        ++s.hallucinated_objects;
        any = true;
      }
    }
    if (any) ++s.hallucinated_responses;
  }
  if (s.objects == 0) throw DomainError("CHAIR needs at least one mentioned object");
  s.chair_i = static_cast<double>(s.hallucinated_objects) / static_cast<double>(s.objects);
  s.chair_s = static_cast<double>(s.hallucinated_responses) / static_cast<double>(s.responses);
  return s;
}

std::vector<std::string> bleu_tokens(std::string_view text) {
  auto toks = Tokenizer::split(text);
  for (auto& t : toks) t = to_lower(t);
  return toks;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<Ngram, int> out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
    ++out[Ngram(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  }
  return out;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::vector<std::string>>>& references, int n) {
  if (n < 1) throw DomainError("BLEU order must be positive");
  if (candidates.size() != references.size()) throw DomainError("BLEU candidate/reference count mismatch");
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw DomainError("BLEU needs at least one reference per candidate");
    for (int order = 1; order <= n; ++order) {
      const auto counts = ngram_counts(cand, order);
      std::map<Ngram, int> max_ref;
      for (const auto& ref : refs) {
        for (const auto& [g, c] : ngram_counts(ref, order)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : counts) {
        auto it = max_ref.find(g);
        matched[static_cast<std::size_t>(order - 1)] += std::min(c, it == max_ref.end() ? 0 : it->second);
        total[static_cast<std::size_t>(order - 1)] += c;
      }
    }
    // Closest reference length; ties go to the shorter reference.
    const double c = static_cast<double>(cand.size());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& ref : refs) {
      const double r = static_cast<double>(ref.size());
      if (std::abs(r - c) < std::abs(best - c) || (std::abs(r - c) == std::abs(best - c) && r < best)) best = r;
    }
    cand_len += c;
    ref_len += best;
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int order = 0; order < n; ++order) {
    if (matched[static_cast<std::size_t>(order)] == 0.0) return 0.0;
    log_sum += std::log(matched[static_cast<std::size_t>(order)] / total[static_cast<std::size_t>(order)]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / n);
}

double bleu_n(std::string_view candidate, const std::vector<std::string>& references, int n) {
  if (n != 1 && n != 2 && n != 4) throw DomainError("bleu_n supports n in {1, 2, 4}");
  return corpus_bleu_text({std::string(candidate)}, {references}, n);
}

double corpus_bleu_text(const std::vector<std::string>& candidates,
                        const std::vector<std::vector<std::string>>& references, int n) {
  std::vector<std::vector<std::string>> cands;
  std::vector<std::vector<std::vector<std::string>>> refs;
  for (const auto& c : candidates) cands.push_back(bleu_tokens(c));
  for (const auto& rs : references) {
    auto& out = refs.emplace_back();
    for (const auto& r : rs) out.push_back(bleu_tokens(r));
  }
  return corpus_bleu(cands, refs, n);
}

std::optional<double> fluency(const LmScorer* scorer, std::string_view text) {
  if (text.empty()) throw DomainError("fluency needs nonempty text");
  if (scorer == nullptr) return std::nullopt;
  const auto logprobs = scorer->token_logprobs(text);
  if (!logprobs) return std::nullopt;
  if (logprobs->empty()) throw DomainError("scorer returned no tokens");
  double sum = 0.0;
  for (double lp : *logprobs) sum -= lp;
  return sum / static_cast<double>(logprobs->size());
}

namespace {
constexpr std::string_view kStart = "<s>";
constexpr std::string_view kEnd = "</s>";
}  // namespace

BigramScorer::BigramScorer(std::span<const std::string> corpus, double add_k) : add_k_(add_k) {
  if (!(add_k > 0.0)) throw ConfigError("add-k smoothing constant must be positive");
  vocab_.insert(std::string(kEnd));
  vocab_.insert("<unk>");
  for (const auto& text : corpus) {
    std::string prev(kStart);
    auto toks = bleu_tokens(text);
    toks.emplace_back(kEnd);
    for (const auto& t : toks) {
      vocab_.insert(t);
      context_counts_[prev] += 1.0;
      pair_counts_[{prev, t}] += 1.0;
      prev = t;
    }
  }
}

std::optional<std::vector<double>> BigramScorer::token_logprobs(std::string_view text) const {
  std::vector<double> out;
  std::string prev(kStart);
  auto toks = bleu_tokens(text);
  toks.emplace_back(kEnd);
  const double v = static_cast<double>(vocab_.size());
  for (auto t : toks) {
    if (!vocab_.contains(t)) t = "<unk>";
    const auto ctx = context_counts_.find(prev);
    const auto pair = pair_counts_.find({prev, t});
    const double num = (pair == pair_counts_.end() ? 0.0 : pair->second) + add_k_;
    const double den = (ctx == context_counts_.end() ? 0.0 : ctx->second) + add_k_ * v;
    out.push_back(std::log(num / den));
    prev = t;
  }
  return out;
}

}  // namespace efuf
