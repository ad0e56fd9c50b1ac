#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace efuf {

/// Handle to an image: a stable id plus the file it was loaded from. The path
/// may be empty for images that exist only as synthetic ids.
struct ImageRef {
  std::string id;
  std::filesystem::path path;
};

/// Rectangle of patch cells, half-open on row1/col1.
struct WindowRect {
  int row0 = 0;
  int col0 = 0;
  int row1 = 1;
  int col1 = 1;

  int rows() const { return row1 - row0; }
  int cols() const { return col1 - col0; }
  bool operator==(const WindowRect&) const = default;
};

struct GridShape {
  int rows = 3;
  int cols = 3;
};

struct WindowConfig {
  int grid_rows = 3;
  int grid_cols = 3;
  int min_window = 1;
  /// Optional phrase template; `{}` is replaced by the object phrase.
  std::string phrase_template;

  GridShape grid() const { return {grid_rows, grid_cols}; }
  /// Throws ConfigError when the grid or minimum window is invalid.
  void validate() const;
  std::string hash() const;
  std::string render_phrase(std::string_view phrase) const;
};

struct RelevanceScore {
  double value = 0.0;
  auto operator<=>(const RelevanceScore&) const = default;
};

/// Contrastive dual encoder. Implementations return unit-norm vectors and
/// are deterministic; failures are reported as BackendError (or IoError for
/// unreadable images).
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed_text(std::string_view phrase) const = 0;
  virtual std::vector<double> embed_image_region(const ImageRef& image, const WindowRect& region,
                                                 GridShape grid) const = 0;
};

/// Every rectangle with both sides >= min_window. Order: window height
/// ascending, then width ascending, then top-left corner in row-major order.
std::vector<WindowRect> generate_windows(const WindowConfig& config);

/// Closed form of generate_windows(config).size().
std::size_t count_windows(const WindowConfig& config);

/// Pixel bounding box [x0, x1) x [y0, y1) of a window's patch cells on a
/// width x height image. Used by backends that crop real pixels.
struct PixelBox {
  int x0, y0, x1, y1;
  bool operator==(const PixelBox&) const = default;
};
PixelBox pixel_box(const WindowRect& window, GridShape grid, int width, int height);

double dot(std::span<const double> a, std::span<const double> b);

/// max over windows of 100 * <text, region>.
RelevanceScore score_object(const EmbeddingBackend& backend, const ImageRef& image,
                            std::string_view phrase, const WindowConfig& config);

/// Same, over an explicit window list (must be nonempty).
RelevanceScore score_object_over(const EmbeddingBackend& backend, const ImageRef& image,
                                 std::string_view phrase, std::span<const WindowRect> windows,
                                 GridShape grid);

/// Arithmetic mean of object scores; DomainError on an empty list.
double score_sentence(std::span<const RelevanceScore> scores);

/// Hash-to-vector embeddings for tests and offline runs. Text vectors depend
/// only on the phrase; region vectors on the image content (file bytes when
/// a path is set, otherwise the id) and the window.
class StubEmbeddingBackend final : public EmbeddingBackend {
 public:
  explicit StubEmbeddingBackend(std::uint64_t seed = 0, std::size_t dim = 64);

  std::string id() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed_text(std::string_view phrase) const override;
  std::vector<double> embed_image_region(const ImageRef& image, const WindowRect& region,
                                         GridShape grid) const override;

 private:
  std::string image_key(const ImageRef& image) const;

  std::uint64_t seed_;
  std::size_t dim_;
  mutable std::mutex mu_;
  mutable std::map<std::filesystem::path, std::string> content_keys_;
};

struct ScoreKey {
  std::string image_id;
  std::string phrase;
  std::string config_hash;
  std::string backend_id;
  auto operator<=>(const ScoreKey&) const = default;
};

/// Persistent memo of object scores, one JSON record per line. Reads may run
/// concurrently; writes are serialized.
class ScoreCache {
 public:
  ScoreCache() = default;
  /// Loads existing records from `path` (if present); new entries append there.
  explicit ScoreCache(std::filesystem::path path);

  std::optional<double> lookup(const ScoreKey& key) const;
  void insert(const ScoreKey& key, double score);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::map<ScoreKey, double> entries_;
};

/// score_object through the cache.
RelevanceScore score_object_cached(ScoreCache& cache, const EmbeddingBackend& backend,
                                   const ImageRef& image, std::string_view phrase,
                                   const WindowConfig& config);

}  // namespace efuf
