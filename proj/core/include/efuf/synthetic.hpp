#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "efuf/extraction.hpp"
#include "efuf/relevance.hpp"

namespace efuf {

/// A synthetic image: a grid of cells, each empty or holding one object
/// category. Stored as a small JSON "scene file" standing in for pixels.
struct Scene {
  std::string image_id;
  int grid_rows = 3;
  int grid_cols = 3;
  std::vector<std::string> cells;  // row-major, "" = empty

  std::set<std::string> objects() const;
};

void write_scene(const std::filesystem::path& path, const Scene& scene);
Scene read_scene(const std::filesystem::path& path);

struct SyntheticCorpusConfig {
  int images = 50;
  int grid = 3;
  int min_objects = 2;
  int max_objects = 3;
  /// Probability that a caption carries one planted hallucinated clause.
  double hallucination_rate = 0.5;
  /// Probability that the planted object is the co-occurrence partner of a
  /// present one (categories pair up in list order) rather than any absent one.
  double co_occurrence = 0.8;
  std::string prompt = "describe the image.";
  std::vector<std::string> categories = {"dog",   "cat",   "horse", "car",   "truck", "bicycle",
                                         "bench", "bottle", "chair", "cup",   "bird",  "boat",
                                         "clock", "kite",  "umbrella", "sheep"};
  std::uint64_t seed = 0;
};

struct SyntheticImage {
  Scene scene;
  CaptionRecord record;         // caption a hallucinating captioner produced
  std::string reference;        // clean human-style caption
  std::vector<std::string> planted;  // hallucinated categories in the caption
};

struct SyntheticCorpus {
  std::vector<SyntheticImage> images;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& config);

/// Writes `images/<id>.json`, `captions.jsonl`, `objects.jsonl`, and
/// `references.jsonl` under `dir`; ImageRef paths point into `images/`.
void write_synthetic_corpus(const std::filesystem::path& dir, SyntheticCorpus& corpus);

/// Seeded standard-normal feature vector for an image id.
std::vector<double> synthetic_image_feature(std::string_view image_id, int dim, std::uint64_t seed);

/// Feature a vision encoder might produce for a scene: for every occupied
/// cell a category vector plus a smaller category-and-cell vector, on top of
/// `identity_noise` times the image's id feature.
std::vector<double> scene_image_feature(const Scene& scene, int dim, std::uint64_t seed, double identity_noise);

/// Embedding backend over scene files. Text embeddings mix a shared "photo"
/// direction with a per-category concept vector; a window's embedding adds
/// the concepts of the objects inside it (diluted by window area) plus
/// per-image and per-window noise. Scores of present objects land in the
/// mid-to-high 30s and those of absent objects in the high teens.
class SceneEmbeddingBackend final : public EmbeddingBackend {
 public:
  struct Params {
    std::size_t dim = 256;
    double shared = 0.8;
    double image_noise = 3.0;
    double window_noise = 0.3;
  };

  explicit SceneEmbeddingBackend(const Lexicon& lexicon, std::uint64_t seed = 0);
  SceneEmbeddingBackend(const Lexicon& lexicon, std::uint64_t seed, Params params);

  std::string id() const override;
  std::size_t dim() const override { return params_.dim; }
  std::vector<double> embed_text(std::string_view phrase) const override;
  std::vector<double> embed_image_region(const ImageRef& image, const WindowRect& region,
                                         GridShape grid) const override;

 private:
  std::vector<double> concept_vector(std::string_view category) const;
  std::shared_ptr<const Scene> scene(const ImageRef& image) const;

  const Lexicon* lexicon_;
  std::uint64_t seed_;
  Params params_;
  std::vector<double> shared_;
  mutable std::mutex mu_;
  mutable std::map<std::filesystem::path, std::shared_ptr<const Scene>> scenes_;
};

}  // namespace efuf
