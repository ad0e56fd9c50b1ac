#include "efuf/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "efuf/error.hpp"
#include "efuf/rng.hpp"

namespace efuf {

void LossWeights::validate() const {
  if (!std::isfinite(lambda1) || !std::isfinite(lambda2) || lambda1 < 0.0 || lambda2 < 0.0) {
    throw ConfigError("loss weights must be finite and non-negative");
  }
}

void TrainConfig::validate() const {
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_pos == 0 || batch_neg == 0 || batch_sent == 0) throw ConfigError("batch sizes must be positive");
  if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
}

void to_json(nlohmann::json& j, const StepReport& r) {
  j = nlohmann::json{{"step", r.step},   {"l_pos", r.l_pos}, {"l_neg", r.l_neg}, {"l_sent", r.l_sent},
                     {"l_total", r.l_total}, {"n_pos", r.n_pos}, {"n_neg", r.n_neg}, {"n_sent", r.n_sent}};
}

void from_json(const nlohmann::json& j, StepReport& r) {
  r.step = j.at("step").get<std::size_t>();
  r.l_pos = j.at("l_pos").get<double>();
  r.l_neg = j.at("l_neg").get<double>();
  r.l_sent = j.at("l_sent").get<double>();
  r.l_total = j.at("l_total").get<double>();
  r.n_pos = j.at("n_pos").get<std::size_t>();
  r.n_neg = j.at("n_neg").get<std::size_t>();
  r.n_sent = j.at("n_sent").get<std::size_t>();
}

TrainingSample encode_sample(const UnlearningSample& sample, const Tokenizer& tokenizer,
                             const ImageFeatureFn& features) {
  TrainingSample out{sample.image_id, features(sample.image_id), tokenizer.encode(sample.context),
                     tokenizer.encode(sample.target)};
  if (sample.polarity == Polarity::Sentence) out.target.push_back(Tokenizer::kEos);
  if (out.target.empty()) throw DomainError("sample for '" + sample.image_id + "' has no target tokens");
  return out;
}

double combine_losses(double l_pos, double l_neg, double l_sent, const LossWeights& weights) {
  return l_pos + weights.lambda1 * l_neg + weights.lambda2 * l_sent;
}

namespace {

double batch_mean_loss(const ToyMLLM& model, const std::vector<const TrainingSample*>& batch) {
  if (batch.empty()) return 0.0;
  double sum = 0.0;
  for (const auto* s : batch) sum += model.token_ce_loss(s->image, s->context, s->target);
  return sum / static_cast<double>(batch.size());
}

std::string describe(std::string_view dataset, const std::vector<const TrainingSample*>& batch,
                     std::size_t step) {
  std::string ids;
  for (const auto* s : batch) {
    if (!ids.empty()) ids += ",";
    ids += s->image_id;
  }
  return std::string(dataset) + " batch at step " + std::to_string(step) + " (images: " + ids + ")";
}

bool all_finite(const ParameterStore& store) {
  for (const auto& b : store.blocks()) {
    for (const auto& t : b.tensors) {
      for (double v : t.values) {
        if (!std::isfinite(v)) return false;
      }
    }
  }
  return true;
}

}  // namespace

LossComponents efuf_losses(const ToyMLLM& model, const Batches& batches, const LossWeights& weights) {
  if (batches.pos.empty() && batches.neg.empty() && batches.sent.empty()) {
    throw DomainError("all three batches are empty");
  }
  LossComponents out;
  out.l_pos = batch_mean_loss(model, batches.pos);
  out.l_neg = -batch_mean_loss(model, batches.neg);
  out.l_sent = batch_mean_loss(model, batches.sent);
  out.l_total = combine_losses(out.l_pos, out.l_neg, out.l_sent, weights);
  return out;
}

StepReport train_step(ToyMLLM& model, Optimizer& optimizer, const Batches& batches, const LossWeights& weights,
                      const TrainConfig& config, std::size_t step) {
  if (batches.pos.empty() && batches.neg.empty() && batches.sent.empty()) {
    throw DomainError("all three batches are empty");
  }
  ParameterStore grad = model.parameters().zeros_like();

  // Per-sample weight on d(CE)/d(theta); the sign of L_neg lives here.
  auto accumulate = [&](std::string_view name, const std::vector<const TrainingSample*>& batch, double weight,
                        double sign) {
    if (batch.empty()) return 0.0;
    const double per_sample = weight / static_cast<double>(batch.size());
    double sum = 0.0;
    for (const auto* s : batch) {
      const double loss = model.accumulate_gradient(s->image, s->context, s->target, sign * per_sample, grad);
      if (!std::isfinite(loss)) throw TrainingError("non-finite loss in " + describe(name, batch, step));
      sum += loss;
    }
    if (!all_finite(grad)) throw TrainingError("non-finite gradient after " + describe(name, batch, step));
    return sign * sum / static_cast<double>(batch.size());
  };

  StepReport report;
  report.step = step;
  report.n_pos = batches.pos.size();
  report.n_neg = batches.neg.size();
  report.n_sent = batches.sent.size();
  report.l_pos = accumulate("positive", batches.pos, 1.0, 1.0);
  report.l_neg = accumulate("negative", batches.neg, weights.lambda1, -1.0);
  report.l_sent = accumulate("sentence", batches.sent, weights.lambda2, 1.0);
  report.l_total = combine_losses(report.l_pos, report.l_neg, report.l_sent, weights);

  if (config.clip_norm) clip_gradients(model.parameters(), grad, *config.clip_norm);
  optimizer.step(model.parameters(), grad);
  return report;
}

std::size_t steps_per_epoch(const TrainingSets& sets, const TrainConfig& config) {
  auto ceil_div = [](std::size_t n, std::size_t b) { return (n + b - 1) / b; };
  return std::max({ceil_div(sets.pos.size(), config.batch_pos), ceil_div(sets.neg.size(), config.batch_neg),
                   ceil_div(sets.sent.size(), config.batch_sent)});
}

std::vector<StepReport> run_epoch(ToyMLLM& model, Optimizer& optimizer, const TrainingSets& sets,
                                  const LossWeights& weights, const TrainConfig& config, int epoch,
                                  std::size_t first_step, const std::function<void(const StepReport&)>& on_step) {
  config.validate();
  weights.validate();
  const std::size_t steps = steps_per_epoch(sets, config);
  if (steps == 0) throw DomainError("all three datasets are empty");

  struct Stream {
    const std::vector<TrainingSample>* data;
    std::size_t batch;
    std::vector<std::size_t> order;
    bool wraps;
  };
  auto make_stream = [&](const std::vector<TrainingSample>& data, std::size_t batch, std::string_view name) {
    Stream s{&data, batch, std::vector<std::size_t>(data.size()), false};
    std::iota(s.order.begin(), s.order.end(), std::size_t{0});
    Rng(config.seed, "trainer.epoch" + std::to_string(epoch) + "." + std::string(name)).shuffle(s.order);
    s.wraps = (data.size() + batch - 1) / batch < steps;
    return s;
  };
  Stream streams[] = {make_stream(sets.pos, config.batch_pos, "d_pos"),
                      make_stream(sets.neg, config.batch_neg, "d_neg"),
                      make_stream(sets.sent, config.batch_sent, "d_sent")};

  auto take = [&](const Stream& s, std::size_t step) {
    std::vector<const TrainingSample*> out;
    const std::size_t n = s.data->size();
    if (n == 0) return out;
    const std::size_t begin = step * s.batch;
    for (std::size_t j = 0; j < s.batch && (s.wraps || begin + j < n); ++j) {
      out.push_back(&(*s.data)[s.order[(begin + j) % n]]);
    }
    return out;
  };

  std::vector<StepReport> reports;
  reports.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    Batches b{take(streams[0], s), take(streams[1], s), take(streams[2], s)};
    reports.push_back(train_step(model, optimizer, b, weights, config, first_step + s));
    if (on_step) on_step(reports.back());
  }
  return reports;
}

double mean_token_nll(const ToyMLLM& model, const std::vector<TrainingSample>& samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& s : samples) sum += model.token_ce_loss(s.image, s.context, s.target);
  return sum / static_cast<double>(samples.size());
}

}  // namespace efuf
