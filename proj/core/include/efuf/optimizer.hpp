#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "efuf/model.hpp"

namespace efuf {

enum class OptimizerKind { PlainSgd, AdamW };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::AdamW;
  double learning_rate = 1e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Applies updates to trainable blocks only; frozen blocks are never touched.
/// Weight decay is decoupled: theta -= lr * weight_decay * theta.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void step(ParameterStore& params, const ParameterStore& grads);
  const OptimizerConfig& config() const { return config_; }
  long steps_taken() const { return t_; }

 private:
  OptimizerConfig config_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Global L2 norm over trainable blocks of `grads` (as flagged in `params`).
double gradient_norm(const ParameterStore& params, const ParameterStore& grads);

/// Rescales trainable gradients so their global norm is at most max_norm.
void clip_gradients(const ParameterStore& params, ParameterStore& grads, double max_norm);

}  // namespace efuf
