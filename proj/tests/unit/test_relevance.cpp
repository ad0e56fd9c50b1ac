#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "efuf/error.hpp"
#include "efuf/relevance.hpp"
#include "efuf/rng.hpp"
#include "oracles.hpp"

namespace {

using efuf::ImageRef;
using efuf::WindowConfig;

WindowConfig grid(int r, int c, int m = 1) {
  WindowConfig w;
  w.grid_rows = r;
  w.grid_cols = c;
  w.min_window = m;
  return w;
}

TEST(Windows, DefaultGridHas36) {
  EXPECT_EQ(efuf::generate_windows(WindowConfig{}).size(), 36u);
  EXPECT_EQ(efuf::count_windows(WindowConfig{}), 36u);
}

TEST(Windows, SingleCellGrid) {
  const auto w = efuf::generate_windows(grid(1, 1));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0], (efuf::WindowRect{0, 0, 1, 1}));
}

TEST(Windows, MatchBruteForceUpTo4x4) {
  for (int r = 1; r <= 4; ++r)
    for (int c = 1; c <= 4; ++c)
      for (int m = 1; m <= std::min(r, c); ++m) {
        const auto cfg = grid(r, c, m);
        const auto got = efuf::generate_windows(cfg);
        std::set<oracle::Rect> as_set;
        for (const auto& w : got) as_set.insert({w.row0, w.col0, w.row1, w.col1});
        EXPECT_EQ(as_set.size(), got.size()) << "duplicate windows";
        EXPECT_EQ(as_set, oracle::brute_windows(r, c, m)) << r << "x" << c << " min " << m;
        EXPECT_EQ(efuf::count_windows(cfg), got.size());
      }
}

TEST(Windows, OrderIsHeightWidthThenRowMajor) {
  const auto w = efuf::generate_windows(grid(3, 3));
  for (std::size_t i = 1; i < w.size(); ++i) {
    const auto key = [](const efuf::WindowRect& r) { return std::tuple(r.rows(), r.cols(), r.row0, r.col0); };
    EXPECT_LT(key(w[i - 1]), key(w[i]));
  }
}

TEST(Windows, InvalidConfigRejected) {
  EXPECT_THROW(grid(0, 3).validate(), efuf::ConfigError);
  EXPECT_THROW(grid(3, 3, 4).validate(), efuf::ConfigError);
  EXPECT_THROW(grid(3, 3, 0).validate(), efuf::ConfigError);
}

TEST(Windows, PixelBoxesTileImage) {
  const auto box = efuf::pixel_box({0, 0, 3, 3}, {3, 3}, 100, 61);
  EXPECT_EQ(box, (efuf::PixelBox{0, 0, 100, 61}));
  const auto cell = efuf::pixel_box({1, 1, 2, 2}, {3, 3}, 90, 60);
  EXPECT_EQ(cell, (efuf::PixelBox{30, 20, 60, 40}));
}

TEST(Score, StubIsDeterministicUnitNorm) {
  efuf::StubEmbeddingBackend a(3), b(3);
  const auto v = a.embed_text("dog");
  EXPECT_EQ(v, b.embed_text("dog"));
  EXPECT_NEAR(efuf::dot(v, v), 1.0, 1e-12);
  const auto r = a.embed_image_region(ImageRef{"img", {}}, {0, 0, 1, 2}, {3, 3});
  EXPECT_NEAR(efuf::dot(r, r), 1.0, 1e-12);
  EXPECT_NE(a.embed_text("cat"), v);
}

TEST(Score, EqualsExhaustiveWindowMax) {
  efuf::StubEmbeddingBackend backend(11);
  efuf::Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const ImageRef img{"image_" + std::to_string(rng.below(1000)), {}};
    const std::string phrase = "phrase_" + std::to_string(rng.below(1000));
    const auto got = efuf::score_object(backend, img, phrase, WindowConfig{}).value;
    EXPECT_NEAR(got, oracle::exhaustive_score(backend, img, phrase, 3, 3, 1), 1e-9);
  }
}

TEST(Score, IdenticalEmbeddingsGive100) {
  // A backend whose text and region vectors coincide.
  struct Same final : efuf::EmbeddingBackend {
    std::string id() const override { return "same"; }
    std::size_t dim() const override { return 2; }
    std::vector<double> embed_text(std::string_view) const override { return {0.6, 0.8}; }
    std::vector<double> embed_image_region(const ImageRef&, const efuf::WindowRect&, efuf::GridShape) const override {
      return {0.6, 0.8};
    }
  } same;
  EXPECT_NEAR(efuf::score_object(same, {"x", {}}, "p", WindowConfig{}).value, 100.0, 1e-12);
}

TEST(Score, SentenceIsMean) {
  const std::vector<efuf::RelevanceScore> s{{30.0}, {20.0}, {40.0}};
  EXPECT_DOUBLE_EQ(efuf::score_sentence(s), 30.0);
  EXPECT_THROW(efuf::score_sentence({}), efuf::DomainError);
}

TEST(Score, PhraseTemplate) {
  WindowConfig w;
  EXPECT_EQ(w.render_phrase("dog"), "dog");
  w.phrase_template = "a photo of a {}.";
  EXPECT_EQ(w.render_phrase("dog"), "a photo of a dog.");
  EXPECT_NE(w.hash(), WindowConfig{}.hash());
}

TEST(Score, UnreadableImageIsIoError) {
  efuf::StubEmbeddingBackend backend;
  EXPECT_THROW(efuf::score_object(backend, {"gone", "/nonexistent/file.png"}, "dog", WindowConfig{}), efuf::IoError);
}

TEST(ScoreCache, PersistsAndReloads) {
  const auto path = std::filesystem::temp_directory_path() / "efuf_test_cache.jsonl";
  std::filesystem::remove(path);
  efuf::StubEmbeddingBackend backend(2);
  const ImageRef img{"i1", {}};
  double first = 0.0;
  {
    efuf::ScoreCache cache(path);
    first = efuf::score_object_cached(cache, backend, img, "dog", WindowConfig{}).value;
    EXPECT_EQ(cache.size(), 1u);
    efuf::score_object_cached(cache, backend, img, "dog", WindowConfig{});
    EXPECT_EQ(cache.size(), 1u);
  }
  efuf::ScoreCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 1u);
  const efuf::ScoreKey key{"i1", "dog", WindowConfig{}.hash(), backend.id()};
  ASSERT_TRUE(reloaded.lookup(key).has_value());
  EXPECT_EQ(*reloaded.lookup(key), first);
  std::filesystem::remove(path);
}

}  // namespace
