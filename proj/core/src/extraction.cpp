#include "efuf/extraction.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "efuf/config.hpp"
#include "efuf/error.hpp"
#include "efuf/io.hpp"

namespace efuf {

extern const char* const kCocoLexiconText;

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

void CaptionRecord::validate() const {
  if (caption.empty()) throw DomainError("caption for image '" + image_id + "' is empty");
}

namespace {

std::vector<std::string> regular_plurals(const std::string& form) {
  const auto space = form.rfind(' ');
  const std::string head = space == std::string::npos ? "" : form.substr(0, space + 1);
  const std::string last = space == std::string::npos ? form : form.substr(space + 1);
  if (last.empty()) return {};
  auto ends_with = [&](std::string_view suffix) {
    return last.size() >= suffix.size() &&
           last.compare(last.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  auto is_vowel = [](char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; };
  if (ends_with("s") || ends_with("x") || ends_with("z") || ends_with("ch") || ends_with("sh")) {
    return {head + last + "es"};
  }
  if (last.size() >= 2 && last.back() == 'y' && !is_vowel(last[last.size() - 2])) {
    return {head + last.substr(0, last.size() - 1) + "ies"};
  }
  return {head + last + "s"};
}

struct WordSpan {
  std::size_t start;
  std::size_t end;
};

std::vector<WordSpan> word_spans(std::string_view text) {
  std::vector<WordSpan> words;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < text.size() && is_word_char(text[i])) ++i;
    words.push_back({start, i});
  }
  return words;
}

}  // namespace

Lexicon Lexicon::parse(std::string_view text) {
  Lexicon lex;
  std::vector<std::pair<std::string, std::string>> explicit_forms;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const auto tab = line.find('\t');
    const std::string canonical = to_lower(trim(line.substr(0, tab)));
    if (canonical.empty()) throw ConfigError("lexicon line without a category");
    explicit_forms.emplace_back(canonical, canonical);
    if (tab != std::string_view::npos) {
      for (auto& syn : split_list(line.substr(tab + 1), ',')) {
        explicit_forms.emplace_back(canonical, to_lower(syn));
      }
    }
  }
  // Explicit forms win over generated plurals.
  for (const auto& [canonical, form] : explicit_forms) lex.add(canonical, form);
  for (const auto& [canonical, form] : explicit_forms) {
    for (const auto& plural : regular_plurals(form)) {
      if (!lex.forms_.contains(plural)) lex.add(canonical, plural);
    }
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) { return parse(io::read_text(path)); }

const Lexicon& Lexicon::coco() {
  static const Lexicon lex = parse(kCocoLexiconText);
  return lex;
}

void Lexicon::add(std::string_view canonical, std::string_view surface) {
  const std::string form = to_lower(surface);
  if (form.empty()) return;
  forms_.emplace(form, to_lower(canonical));
  max_words_ = std::max<std::size_t>(max_words_, 1 + std::count(form.begin(), form.end(), ' '));
}

std::optional<std::string> Lexicon::canonical(std::string_view surface) const {
  auto it = forms_.find(to_lower(surface));
  if (it == forms_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Lexicon::categories() const {
  std::vector<std::string> out;
  for (const auto& [form, canonical] : forms_) out.push_back(canonical);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> lexicon_extract(std::string_view caption, const Lexicon& lexicon) {
  const auto words = word_spans(caption);
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t matched = 0;
    const std::size_t longest = std::min(lexicon.max_words(), words.size() - i);
    for (std::size_t n = longest; n >= 1; --n) {
      const auto text = caption.substr(words[i].start, words[i + n - 1].end - words[i].start);
      if (lexicon.surface_forms().contains(to_lower(text))) {
        out.emplace_back(text);
        matched = n;
        break;
      }
    }
    i += matched > 0 ? matched : 1;
  }
  return out;
}

ExtractionResult align_phrases(std::string_view caption, const std::vector<std::string>& phrases) {
  const std::string lower = to_lower(caption);
  ExtractionResult result;
  std::vector<Span> claimed;
  auto overlaps = [&](Span s) {
    return std::any_of(claimed.begin(), claimed.end(),
                       [&](Span c) { return s.start < c.end && c.start < s.end; });
  };
  for (const auto& phrase : phrases) {
    const std::string needle = to_lower(trim(phrase));
    bool placed = false;
    if (!needle.empty()) {
      for (auto pos = lower.find(needle); pos != std::string::npos; pos = lower.find(needle, pos + 1)) {
        const Span s{pos, pos + needle.size()};
        const bool left_ok = s.start == 0 || !is_word_char(lower[s.start - 1]) || !is_word_char(needle.front());
        const bool right_ok = s.end == lower.size() || !is_word_char(lower[s.end]) || !is_word_char(needle.back());
        if (left_ok && right_ok && !overlaps(s)) {
          claimed.push_back(s);
          result.mentions.push_back({std::string(caption.substr(s.start, s.size())), s, std::nullopt});
          placed = true;
          break;
        }
      }
    }
    if (!placed) ++result.dropped;
  }
  std::sort(result.mentions.begin(), result.mentions.end(),
            [](const ObjectMention& a, const ObjectMention& b) { return a.span.start < b.span.start; });
  return result;
}

ExtractionResult extract_objects(ExtractorBackend& backend, const CaptionRecord& record) {
  record.validate();
  std::vector<std::string> phrases;
  try {
    phrases = backend.extract(record.caption);
  } catch (const ExtractionError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExtractionError("extractor failed on image '" + record.image_id + "': " + e.what());
  }
  return align_phrases(record.caption, phrases);
}

std::vector<std::string> parse_phrase_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(start, end - start));
    start = end + 1;
    // Drop list markers such as "-", "*", "3." or "3)".
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
      line = trim(std::string_view(line).substr(i + 1));
    } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line = trim(std::string_view(line).substr(1));
    }
    if (!line.empty()) out.push_back(std::move(line));
  }
  return out;
}

std::string extraction_prompt(std::string_view caption) {
  std::string prompt =
      "List every physical object mentioned in the following image description. "
      "Copy each object phrase exactly as written, including multi-word names, "
      "one per line, with no numbering and no extra words. Do not list attributes, "
      "actions, or relations. If the same object is mentioned twice, list it twice.\n\n"
      "Description: ";
  prompt += caption;
  prompt += "\nObjects:";
  return prompt;
}

RemoteExtractor::RemoteExtractor(RemoteExtractorConfig config)
    : config_(std::move(config)), slots_(std::clamp(config_.max_in_flight, 1, 1024)) {
  if (config_.endpoint.empty()) throw ConfigError("remote extractor endpoint is empty");
  if (config_.max_attempts < 1) throw ConfigError("remote extractor needs max_attempts >= 1");
}

namespace {

struct Endpoint {
  std::string base;  // scheme://host:port
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::vector<std::string> RemoteExtractor::extract(std::string_view caption) {
  slots_.acquire();
  const int now = ++in_flight_;
  int prev = peak_.load();
  while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
  }
  struct Release {
    RemoteExtractor* self;
    ~Release() {
      --self->in_flight_;
      self->slots_.release();
    }
  } release{this};

  const auto endpoint = split_endpoint(config_.endpoint);
  httplib::Client client(endpoint.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  client.set_read_timeout(secs.count() > 0 ? secs.count() : 1, 0);
  httplib::Headers headers;
  if (!config_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + config_.auth_token);
  const nlohmann::json body{{"model", config_.model}, {"prompt", extraction_prompt(caption)}};
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    auto res = client.Post(endpoint.path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw ExtractionError("extractor rejected request with status " + std::to_string(res->status));
    } else {
      try {
        const auto reply = nlohmann::json::parse(res->body);
        const auto& phrases = reply.at("phrases");
        if (phrases.is_string()) return parse_phrase_lines(phrases.get<std::string>());
        return phrases.get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        throw ExtractionError(std::string("malformed extractor reply: ") + e.what());
      }
    }
    if (attempt < config_.max_attempts) std::this_thread::sleep_for(config_.retry_backoff * attempt);
  }
  throw ExtractionError("extractor unavailable after " + std::to_string(config_.max_attempts) +
                        " attempts: " + last_error);
}

}  // namespace efuf
