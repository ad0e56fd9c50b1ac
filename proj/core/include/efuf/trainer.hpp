#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "efuf/curation.hpp"
#include "efuf/model.hpp"
#include "efuf/optimizer.hpp"

namespace efuf {

struct LossWeights {
  double lambda1 = 0.3;  // unlearning (negative) weight
  double lambda2 = 0.2;  // sentence weight
  /// ConfigError unless both are finite and non-negative.
  void validate() const;
};

struct TrainConfig {
  OptimizerConfig optimizer;
  int epochs = 1;
  std::size_t batch_pos = 4;
  std::size_t batch_neg = 4;
  std::size_t batch_sent = 4;
  std::uint64_t seed = 0;
  /// Global-norm clipping; disabled when unset. kDefaultClipNorm is the
  /// threshold used when clipping is switched on without a value.
  std::optional<double> clip_norm;
  static constexpr double kDefaultClipNorm = 1.0;

  void validate() const;
};

struct StepReport {
  std::size_t step = 0;
  double l_pos = 0.0;
  double l_neg = 0.0;
  double l_sent = 0.0;
  double l_total = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_sent = 0;
  bool operator==(const StepReport&) const = default;
};

void to_json(nlohmann::json& j, const StepReport& r);
void from_json(const nlohmann::json& j, StepReport& r);

/// A curated sample after tokenization and image-feature lookup.
struct TrainingSample {
  std::string image_id;
  std::vector<double> image;
  std::vector<int> context;
  std::vector<int> target;
};

using ImageFeatureFn = std::function<std::vector<double>(std::string_view image_id)>;

/// Full-response (SENTENCE) targets get a trailing <eos>; subsentence
/// targets are truncated text and do not.
TrainingSample encode_sample(const UnlearningSample& sample, const Tokenizer& tokenizer,
                             const ImageFeatureFn& features);

struct Batches {
  std::vector<const TrainingSample*> pos;
  std::vector<const TrainingSample*> neg;
  std::vector<const TrainingSample*> sent;
};

struct LossComponents {
  double l_pos = 0.0;
  double l_neg = 0.0;
  double l_sent = 0.0;
  double l_total = 0.0;
};

/// L_total = L_pos + lambda1 * L_neg + lambda2 * L_sent.
double combine_losses(double l_pos, double l_neg, double l_sent, const LossWeights& weights);

/// Loss values only. L_neg is the negated mean CE over the negative batch;
/// empty batches contribute 0. DomainError when every batch is empty.
LossComponents efuf_losses(const ToyMLLM& model, const Batches& batches, const LossWeights& weights);

/// One optimizer update on the gradient of L_total w.r.t. trainable blocks.
/// Throws TrainingError (naming the batch) on a non-finite loss or gradient.
StepReport train_step(ToyMLLM& model, Optimizer& optimizer, const Batches& batches,
                      const LossWeights& weights, const TrainConfig& config, std::size_t step);

struct TrainingSets {
  std::vector<TrainingSample> pos;
  std::vector<TrainingSample> neg;
  std::vector<TrainingSample> sent;
};

/// max over nonempty datasets of ceil(size / batch).
std::size_t steps_per_epoch(const TrainingSets& sets, const TrainConfig& config);

/// One pass driven by the largest dataset; smaller datasets cycle. Order is
/// a seeded permutation per (epoch, dataset). `first_step` numbers reports.
std::vector<StepReport> run_epoch(ToyMLLM& model, Optimizer& optimizer, const TrainingSets& sets,
                                  const LossWeights& weights, const TrainConfig& config, int epoch,
                                  std::size_t first_step = 0,
                                  const std::function<void(const StepReport&)>& on_step = {});

/// Mean token_ce_loss over samples (NaN for an empty list).
double mean_token_nll(const ToyMLLM& model, const std::vector<TrainingSample>& samples);

}  // namespace efuf
