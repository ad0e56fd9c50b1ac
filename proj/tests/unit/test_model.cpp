#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "efuf/error.hpp"
#include "efuf/model.hpp"
#include "efuf/optimizer.hpp"
#include "efuf/rng.hpp"
#include "oracles.hpp"

namespace {

using efuf::ModelConfig;
using efuf::ToyMLLM;

ModelConfig tiny(int vocab = 9) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 4;
  c.layers = 1;
  c.heads = 2;
  c.ffn_dim = 8;
  c.prefix_tokens = 2;
  c.image_dim = 3;
  c.max_positions = 12;
  return c;
}

ModelConfig small() {
  ModelConfig c;
  c.vocab_size = 11;
  c.embed_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn_dim = 12;
  c.prefix_tokens = 3;
  c.image_dim = 5;
  c.max_positions = 16;
  return c;
}

std::vector<double> image(int dim, std::uint64_t seed) {
  efuf::Rng r(seed);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = r.normal();
  return v;
}

TEST(ModelConfig, Validation) {
  auto c = small();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), efuf::ConfigError);
  c = small();
  c.vocab_size = 3;
  EXPECT_THROW(c.validate(), efuf::ConfigError);
  c = small();
  c.max_positions = c.prefix_tokens;
  EXPECT_THROW(c.validate(), efuf::ConfigError);
}

TEST(Model, BlockLayout) {
  const ToyMLLM m(small(), 1);
  EXPECT_EQ(m.block_names(), (std::vector<std::string>{"image_projector", "token_embedding", "position_embedding",
                                                       "layer0", "layer1", "final_norm", "output_head"}));
  EXPECT_EQ(m.parameters().block("layer0").tensors.size(), 16u);
  EXPECT_EQ(m.parameters().size(), m.parameters().trainable_size());
}

TEST(Model, ForwardMatchesNaiveLoops) {
  const ToyMLLM m(small(), 3);
  const auto img = image(5, 4);
  const std::vector<int> ids = {1, 5, 7, 4, 10, 2};
  const auto dist = m.forward(img, ids);
  const std::vector<int> inputs(ids.begin(), ids.end() - 1);
  const auto ref = oracle::naive_forward(m, img, inputs);
  ASSERT_EQ(dist.size(), ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& row = ref[static_cast<std::size_t>(m.config().prefix_tokens - 1) + i];
    for (std::size_t v = 0; v < row.size(); ++v) EXPECT_NEAR(dist[i][v], row[v], 1e-12);
    EXPECT_NEAR(std::accumulate(dist[i].begin(), dist[i].end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Model, Causal) {
  const ToyMLLM m(small(), 3);
  const auto img = image(5, 4);
  const auto a = m.forward(img, std::vector<int>{1, 5, 7, 4});
  const auto b = m.forward(img, std::vector<int>{1, 5, 9, 8});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Model, ImageConditions) {
  const ToyMLLM m(small(), 3);
  EXPECT_NE(m.forward(image(5, 1), std::vector<int>{1, 4}), m.forward(image(5, 2), std::vector<int>{1, 4}));
}

ToyMLLM with_fixed_head(ModelConfig c, const std::vector<double>& bias) {
  ToyMLLM m(c, 1);
  auto& head = m.parameters().block("output_head");
  std::fill(head.tensors[0].values.begin(), head.tensors[0].values.end(), 0.0);
  head.tensors[1].values = bias;
  return m;
}

TEST(Loss, HandComputedCrossEntropy) {
  auto c = tiny(5);
  const std::vector<double> probs = {0.1, 0.1, 0.2, 0.1, 0.5};
  std::vector<double> bias;
  for (double p : probs) bias.push_back(std::log(p));
  const auto m = with_fixed_head(c, bias);
  const auto img = image(3, 1);
  const double ce = m.token_ce_loss(img, std::vector<int>{3}, std::vector<int>{4, 2});
  EXPECT_NEAR(ce, -(std::log(0.5) + std::log(0.2)) / 2.0, 1e-12);
}

TEST(Loss, UniformModelGivesLogV) {
  for (int v : {5, 17, 64}) {
    const auto m = with_fixed_head(tiny(v), std::vector<double>(static_cast<std::size_t>(v), 0.0));
    EXPECT_NEAR(m.token_ce_loss(image(3, 2), std::vector<int>{4}, std::vector<int>{4, 4, 3}), std::log(v), 1e-12);
  }
}

TEST(Loss, EmptyTargetIsDomainError) {
  const ToyMLLM m(tiny(), 1);
  EXPECT_THROW(m.token_ce_loss(image(3, 1), std::vector<int>{4}, std::vector<int>{}), efuf::DomainError);
}

TEST(Loss, ShapeErrors) {
  const ToyMLLM m(tiny(), 1);
  EXPECT_THROW(m.token_ce_loss(image(4, 1), std::vector<int>{4}, std::vector<int>{4}), efuf::ShapeError);
  EXPECT_THROW(m.token_ce_loss(image(3, 1), std::vector<int>{99}, std::vector<int>{4}), efuf::ShapeError);
  EXPECT_THROW(m.token_ce_loss(image(3, 1), std::vector<int>(20, 4), std::vector<int>{4}), efuf::ShapeError);
}

double relative_error(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale == 0.0 ? 0.0 : std::fabs(a - b) / scale;
}

TEST(Gradient, MatchesCentralDifferences) {
  ToyMLLM m(tiny(), 7);
  ASSERT_LE(m.parameters().size(), 1000u);
  const auto img = image(3, 8);
  const std::vector<int> ctx = {4, 6}, tgt = {7, 5, 2};
  auto grad = m.parameters().zeros_like();
  m.accumulate_gradient(img, ctx, tgt, 1.0, grad);
  efuf::Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto i = rng.below(m.parameters().size());
    double& theta = m.parameters().coordinate(i);
    const double saved = theta;
    const double h = 1e-4;
    theta = saved + h;
    const double up = m.token_ce_loss(img, ctx, tgt);
    theta = saved - h;
    const double down = m.token_ce_loss(img, ctx, tgt);
    theta = saved;
    EXPECT_LT(relative_error(grad.coordinate(i), (up - down) / (2 * h)), 1e-4) << "coordinate " << i;
  }
}

TEST(Gradient, WeightScalesLinearly) {
  const ToyMLLM m(tiny(), 7);
  const auto img = image(3, 8);
  auto g1 = m.parameters().zeros_like();
  auto g2 = m.parameters().zeros_like();
  m.accumulate_gradient(img, std::vector<int>{4}, std::vector<int>{5}, 1.0, g1);
  m.accumulate_gradient(img, std::vector<int>{4}, std::vector<int>{5}, -0.5, g2);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2.coordinate(i), -0.5 * g1.coordinate(i), 1e-15);
}

TEST(Trainable, FrozenBlocksGetNoGradientAndNoUpdate) {
  ToyMLLM m(small(), 2);
  const std::vector<std::string> only = {"image_projector"};
  m.select_trainable(only);
  EXPECT_EQ(m.parameters().trainable_size(), m.parameters().block("image_projector").tensors[0].size() +
                                                 m.parameters().block("image_projector").tensors[1].size());
  const auto before = m.parameters();
  auto grad = m.parameters().zeros_like();
  m.accumulate_gradient(image(5, 3), std::vector<int>{4}, std::vector<int>{5, 6}, 1.0, grad);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!m.parameters().coordinate_trainable(i)) EXPECT_EQ(grad.coordinate(i), 0.0);
  }
  efuf::Optimizer opt({efuf::OptimizerKind::AdamW, 1e-2, 0.1});
  opt.step(m.parameters(), grad);
  bool projector_moved = false;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (m.parameters().coordinate_trainable(i)) {
      projector_moved |= m.parameters().coordinate(i) != before.coordinate(i);
    } else {
      EXPECT_EQ(m.parameters().coordinate(i), before.coordinate(i));
    }
  }
  EXPECT_TRUE(projector_moved);
}

TEST(Trainable, ProjectorGradientMatchesFullReplay) {
  // A frozen-mask run must produce the same projector gradient as a run with
  // every block trainable.
  ToyMLLM full(small(), 2);
  ToyMLLM masked(small(), 2);
  const std::vector<std::string> only = {"image_projector"};
  masked.select_trainable(only);
  auto gf = full.parameters().zeros_like();
  auto gm = masked.parameters().zeros_like();
  const auto img = image(5, 6);
  full.accumulate_gradient(img, std::vector<int>{4, 7}, std::vector<int>{8, 2}, 1.0, gf);
  masked.accumulate_gradient(img, std::vector<int>{4, 7}, std::vector<int>{8, 2}, 1.0, gm);
  for (std::size_t i = 0; i < gm.size(); ++i) {
    if (masked.parameters().coordinate_trainable(i)) EXPECT_EQ(gm.coordinate(i), gf.coordinate(i));
  }
}

TEST(Trainable, UnknownBlockIsConfigError) {
  ToyMLLM m(small(), 2);
  const std::vector<std::string> bad = {"image_projector", "adapter"};
  EXPECT_THROW(m.select_trainable(bad), efuf::ConfigError);
}

TEST(Generate, StopsAtEosOrLimit) {
  auto c = tiny(6);
  std::vector<double> bias(6, 0.0);
  bias[5] = 5.0;
  const auto always5 = with_fixed_head(c, bias);
  EXPECT_EQ(always5.generate_greedy(image(3, 1), std::vector<int>{}, 4), (std::vector<int>{5, 5, 5, 5}));
  bias[efuf::Tokenizer::kEos] = 9.0;
  const auto stop = with_fixed_head(c, bias);
  EXPECT_TRUE(stop.generate_greedy(image(3, 1), std::vector<int>{}, 4).empty());
  // The position table bounds the output length.
  EXPECT_EQ(always5.generate_greedy(image(3, 1), std::vector<int>{}, 100).size(),
            static_cast<std::size_t>(c.max_positions - c.prefix_tokens));
}

TEST(Checkpoint, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "efuf_unit_ckpt.json";
  ToyMLLM m(small(), 5);
  const std::vector<std::string> only = {"image_projector", "output_head"};
  m.select_trainable(only);
  std::vector<std::string> words = {"<pad>", "<bos>", "<eos>", "<unk>", "a", "b", "c", "d", "e", "f", "g"};
  const auto tok = efuf::Tokenizer::from_vocabulary(words);
  efuf::save_checkpoint(path, m, tok);
  const auto loaded = efuf::load_checkpoint(path);
  EXPECT_EQ(loaded.tokenizer, tok);
  EXPECT_EQ(loaded.model.config(), m.config());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(loaded.model.parameters().coordinate(i), m.parameters().coordinate(i));
  }
  EXPECT_TRUE(loaded.model.parameters().block("output_head").trainable);
  EXPECT_FALSE(loaded.model.parameters().block("layer0").trainable);
  std::filesystem::remove(path);
}

TEST(Checkpoint, VocabularySizeMismatchRejected) {
  const auto path = std::filesystem::temp_directory_path() / "efuf_unit_ckpt_bad.json";
  ToyMLLM m(small(), 5);
  const auto tok = efuf::Tokenizer::from_vocabulary({"<pad>", "<bos>", "<eos>", "<unk>", "a"});
  EXPECT_THROW(efuf::save_checkpoint(path, m, tok), efuf::ShapeError);
}

}  // namespace
