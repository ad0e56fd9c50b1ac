#include "efuf/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "efuf/error.hpp"
#include "efuf/hash.hpp"
#include "efuf/io.hpp"
#include "efuf/rng.hpp"

namespace efuf {

void WindowConfig::validate() const {
  if (grid_rows < 1 || grid_cols < 1) {
    throw ConfigError("window grid must be at least 1x1");
  }
  if (min_window < 1 || min_window > std::min(grid_rows, grid_cols)) {
    throw ConfigError("min_window must lie in [1, min(grid_rows, grid_cols)]");
  }
}

std::string WindowConfig::hash() const {
  return Fnv1a()
      .field("window")
      .field(static_cast<std::uint64_t>(grid_rows))
      .field(static_cast<std::uint64_t>(grid_cols))
      .field(static_cast<std::uint64_t>(min_window))
      .field(phrase_template)
      .hex();
}

std::string WindowConfig::render_phrase(std::string_view phrase) const {
  if (phrase_template.empty()) return std::string(phrase);
  std::string out = phrase_template;
  const auto pos = out.find("{}");
  if (pos == std::string::npos) return out + " " + std::string(phrase);
  out.replace(pos, 2, phrase);
  return out;
}

std::vector<WindowRect> generate_windows(const WindowConfig& config) {
  config.validate();
  std::vector<WindowRect> out;
  out.reserve(count_windows(config));
  for (int h = config.min_window; h <= config.grid_rows; ++h) {
    for (int w = config.min_window; w <= config.grid_cols; ++w) {
      for (int r = 0; r + h <= config.grid_rows; ++r) {
        for (int c = 0; c + w <= config.grid_cols; ++c) {
          out.push_back({r, c, r + h, c + w});
        }
      }
    }
  }
  return out;
}

std::size_t count_windows(const WindowConfig& config) {
  config.validate();
  auto side = [&](int n) {
    const std::size_t k = static_cast<std::size_t>(n - config.min_window + 1);
    return k * (k + 1) / 2;
  };
  return side(config.grid_rows) * side(config.grid_cols);
}

PixelBox pixel_box(const WindowRect& window, GridShape grid, int width, int height) {
  auto edge = [](int index, int cells, int pixels) {
    return static_cast<int>((static_cast<long long>(index) * pixels) / cells);
  };
  return {edge(window.col0, grid.cols, width), edge(window.row0, grid.rows, height),
          edge(window.col1, grid.cols, width), edge(window.row1, grid.rows, height)};
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw BackendError("embedding dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

RelevanceScore score_object_over(const EmbeddingBackend& backend, const ImageRef& image,
                                 std::string_view phrase, std::span<const WindowRect> windows,
                                 GridShape grid) {
  if (phrase.empty()) throw DomainError("cannot score an empty phrase");
  if (windows.empty()) throw DomainError("no windows to score");
  const auto text = backend.embed_text(phrase);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& w : windows) {
    const auto region = backend.embed_image_region(image, w, grid);
    best = std::max(best, 100.0 * dot(text, region));
  }
  return {best};
}

RelevanceScore score_object(const EmbeddingBackend& backend, const ImageRef& image,
                            std::string_view phrase, const WindowConfig& config) {
  const auto windows = generate_windows(config);
  return score_object_over(backend, image, config.render_phrase(phrase), windows, config.grid());
}

double score_sentence(std::span<const RelevanceScore> scores) {
  if (scores.empty()) throw DomainError("sentence score needs at least one object score");
  double sum = 0.0;
  for (const auto& s : scores) sum += s.value;
  return sum / static_cast<double>(scores.size());
}

StubEmbeddingBackend::StubEmbeddingBackend(std::uint64_t seed, std::size_t dim)
    : seed_(seed), dim_(dim) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
}

std::string StubEmbeddingBackend::id() const {
  return "stub-" + std::to_string(seed_) + "-" + std::to_string(dim_);
}

std::vector<double> StubEmbeddingBackend::embed_text(std::string_view phrase) const {
  Rng rng(Fnv1a().field(seed_).field("text").field(phrase).digest());
  return random_unit_vector(rng, dim_);
}

std::string StubEmbeddingBackend::image_key(const ImageRef& image) const {
  if (image.path.empty()) return "id:" + image.id;
  std::lock_guard lock(mu_);
  auto it = content_keys_.find(image.path);
  if (it != content_keys_.end()) return it->second;
  const auto key = "bytes:" + file_hash(image.path);
  content_keys_.emplace(image.path, key);
  return key;
}

std::vector<double> StubEmbeddingBackend::embed_image_region(const ImageRef& image,
                                                             const WindowRect& region,
                                                             GridShape grid) const {
  Rng rng(Fnv1a()
              .field(seed_)
              .field("region")
              .field(image_key(image))
              .field(static_cast<std::uint64_t>(grid.rows))
              .field(static_cast<std::uint64_t>(grid.cols))
              .field(static_cast<std::uint64_t>(region.row0))
              .field(static_cast<std::uint64_t>(region.col0))
              .field(static_cast<std::uint64_t>(region.row1))
              .field(static_cast<std::uint64_t>(region.col1))
              .digest());
  return random_unit_vector(rng, dim_);
}

ScoreCache::ScoreCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  for (const auto& r : io::read_jsonl(path_).records) {
    ScoreKey key{r.at("image_id").get<std::string>(), r.at("phrase").get<std::string>(),
                 r.at("config_hash").get<std::string>(), r.at("backend_id").get<std::string>()};
    entries_[std::move(key)] = r.at("score").get<double>();
  }
}

std::optional<double> ScoreCache::lookup(const ScoreKey& key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::insert(const ScoreKey& key, double score) {
  std::unique_lock lock(mu_);
  auto [it, inserted] = entries_.emplace(key, score);
  if (!inserted) return;
  if (!path_.empty()) {
    io::append_line(path_, io::Json{{"image_id", key.image_id},
                                    {"phrase", key.phrase},
                                    {"config_hash", key.config_hash},
                                    {"backend_id", key.backend_id},
                                    {"score", score}});
  }
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

RelevanceScore score_object_cached(ScoreCache& cache, const EmbeddingBackend& backend,
                                   const ImageRef& image, std::string_view phrase,
                                   const WindowConfig& config) {
  ScoreKey key{image.id, std::string(phrase), config.hash(), backend.id()};
  if (auto hit = cache.lookup(key)) return {*hit};
  const auto score = score_object(backend, image, phrase, config);
  cache.insert(key, score.value);
  return score;
}

}  // namespace efuf
