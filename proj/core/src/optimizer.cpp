#include "efuf/optimizer.hpp"

#include <cmath>

#include "efuf/error.hpp"

namespace efuf {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::PlainSgd ? "plain-sgd" : "adamw";
}

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "plain-sgd" || name == "sgd") return OptimizerKind::PlainSgd;
  if (name == "adamw" || name == "adamw-style") return OptimizerKind::AdamW;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0) || !std::isfinite(config_.learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (config_.weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
}

void Optimizer::step(ParameterStore& params, const ParameterStore& grads) {
  if (!params.same_layout(grads)) throw ShapeError("gradient layout does not match parameters");
  ++t_;
  const double lr = config_.learning_rate;
  const double wd = config_.weight_decay;
  const bool adam = config_.kind == OptimizerKind::AdamW;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));

  std::size_t slot = 0;
  for (std::size_t bi = 0; bi < params.blocks().size(); ++bi) {
    auto& block = params.blocks()[bi];
    const auto& gblock = grads.blocks()[bi];
    for (std::size_t ti = 0; ti < block.tensors.size(); ++ti, ++slot) {
      if (!block.trainable) continue;
      auto& theta = block.tensors[ti].values;
      const auto& g = gblock.tensors[ti].values;
      if (adam) {
        if (m_.size() <= slot) {
          m_.resize(slot + 1);
          v_.resize(slot + 1);
        }
        if (m_[slot].empty()) {
          m_[slot].assign(theta.size(), 0.0);
          v_[slot].assign(theta.size(), 0.0);
        }
        auto& m = m_[slot];
        auto& v = v_[slot];
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
          v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
          const double mhat = m[i] / bc1;
          const double vhat = v[i] / bc2;
          theta[i] -= lr * (mhat / (std::sqrt(vhat) + config_.epsilon) + wd * theta[i]);
        }
      } else {
        for (std::size_t i = 0; i < theta.size(); ++i) {
          theta[i] -= lr * g[i];
          if (wd != 0.0) theta[i] -= lr * wd * theta[i];
        }
      }
    }
  }
}

double gradient_norm(const ParameterStore& params, const ParameterStore& grads) {
  double sq = 0.0;
  for (std::size_t bi = 0; bi < params.blocks().size(); ++bi) {
    if (!params.blocks()[bi].trainable) continue;
    for (const auto& t : grads.blocks()[bi].tensors) {
      for (double g : t.values) sq += g * g;
    }
  }
  return std::sqrt(sq);
}

void clip_gradients(const ParameterStore& params, ParameterStore& grads, double max_norm) {
  const double norm = gradient_norm(params, grads);
  if (!(norm > max_norm)) return;
  const double scale = max_norm / norm;
  for (std::size_t bi = 0; bi < params.blocks().size(); ++bi) {
    if (!params.blocks()[bi].trainable) continue;
    for (auto& t : grads.blocks()[bi].tensors) {
      for (double& g : t.values) g *= scale;
    }
  }
}

}  // namespace efuf
