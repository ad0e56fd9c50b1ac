#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "efuf/tokenizer.hpp"

namespace efuf {

/// Hyperparameters of the toy captioner.
struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 32;
  int layers = 2;
  int heads = 2;
  int ffn_dim = 64;
  int prefix_tokens = 4;  // image prefix length k
  int image_dim = 16;
  int max_positions = 64;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Row-major matrix of parameters (a vector is a 1 x n matrix).
struct Tensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

struct ParamBlock {
  std::string name;
  std::vector<Tensor> tensors;
  bool trainable = true;
};

/// Named parameter blocks. Gradient buffers are stores with the same layout.
class ParameterStore {
 public:
  ParamBlock& add_block(std::string name);
  Tensor& add_tensor(ParamBlock& block, std::string name, int rows, int cols);

  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  /// ConfigError for unknown names.
  const ParamBlock& block(std::string_view name) const;
  ParamBlock& block(std::string_view name);

  ParameterStore zeros_like() const;
  void set_zero();
  bool same_layout(const ParameterStore& other) const;
  /// Total number of scalars, and the number inside trainable blocks.
  std::size_t size() const;
  std::size_t trainable_size() const;

  /// Flat coordinate view over all scalars, block order then tensor order.
  double& coordinate(std::size_t index);
  double coordinate(std::size_t index) const;
  bool coordinate_trainable(std::size_t index) const;

 private:
  std::vector<ParamBlock> blocks_;
};

/// One next-token distribution per input position.
using Distributions = std::vector<std::vector<double>>;

/// Miniature multimodal captioner: a linear projector turns the image
/// feature into `prefix_tokens` embeddings, followed by a causal pre-norm
/// transformer decoder over the text tokens.
///
/// Blocks: image_projector, token_embedding, position_embedding,
/// layer0..layerN, final_norm, output_head.
class ToyMLLM {
 public:
  ToyMLLM(const ModelConfig& config, std::uint64_t seed);
  ToyMLLM(const ModelConfig& config, ParameterStore params);

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  std::vector<std::string> block_names() const;

  /// Marks exactly the listed blocks trainable; ConfigError on unknown names.
  void select_trainable(std::span<const std::string> blocks);

  /// dist[i] is the distribution of ids[i] given the image and ids[0..i).
  /// dist[0] is conditioned on the image prefix alone.
  Distributions forward(std::span<const double> image, std::span<const int> ids) const;

  /// Distribution of the token following `ids`.
  std::vector<double> next_token_distribution(std::span<const double> image,
                                              std::span<const int> ids) const;

  /// Mean cross-entropy over `target` for the sequence <bos> context target.
  /// DomainError on an empty target.
  double token_ce_loss(std::span<const double> image, std::span<const int> context,
                       std::span<const int> target) const;

  /// Adds weight * d(token_ce_loss)/d(theta) into `grad` and returns the loss.
  double accumulate_gradient(std::span<const double> image, std::span<const int> context,
                             std::span<const int> target, double weight, ParameterStore& grad) const;

  /// Greedy decoding after <bos> context; stops at <eos> or the length cap.
  std::vector<int> generate_greedy(std::span<const double> image, std::span<const int> context,
                                   int max_new_tokens) const;

 private:
  void build_layout();
  void initialize(std::uint64_t seed);

  ModelConfig config_;
  ParameterStore params_;
};

/// Self-describing JSON checkpoint: config, vocabulary, and every block with
/// its tensors' names, shapes, and flat row-major values.
void save_checkpoint(const std::filesystem::path& path, const ToyMLLM& model,
                     const Tokenizer& tokenizer);

struct Checkpoint {
  ToyMLLM model;
  Tokenizer tokenizer;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace efuf
