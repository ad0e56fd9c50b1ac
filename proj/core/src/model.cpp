#include "efuf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "efuf/error.hpp"
#include "efuf/io.hpp"
#include "efuf/rng.hpp"

namespace efuf {

// ---------------------------------------------------------------------------
// ParameterStore

ParamBlock& ParameterStore::add_block(std::string name) {
  blocks_.push_back(ParamBlock{std::move(name), {}, true});
  return blocks_.back();
}

Tensor& ParameterStore::add_tensor(ParamBlock& block, std::string name, int rows, int cols) {
  block.tensors.push_back(
      Tensor{std::move(name), rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0)});
  return block.tensors.back();
}

const ParamBlock& ParameterStore::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw ConfigError("unknown parameter block '" + std::string(name) + "'");
}

ParamBlock& ParameterStore::block(std::string_view name) {
  return const_cast<ParamBlock&>(std::as_const(*this).block(name));
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore out = *this;
  out.set_zero();
  return out;
}

void ParameterStore::set_zero() {
  for (auto& b : blocks_) {
    for (auto& t : b.tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
  }
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& a = blocks_[i];
    const auto& b = other.blocks_[i];
    if (a.name != b.name || a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t j = 0; j < a.tensors.size(); ++j) {
      if (a.tensors[j].name != b.tensors[j].name || a.tensors[j].rows != b.tensors[j].rows ||
          a.tensors[j].cols != b.tensors[j].cols) {
        return false;
      }
    }
  }
  return true;
}

std::size_t ParameterStore::size() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) {
    for (const auto& t : b.tensors) n += t.size();
  }
  return n;
}

std::size_t ParameterStore::trainable_size() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) {
    if (!b.trainable) continue;
    for (const auto& t : b.tensors) n += t.size();
  }
  return n;
}

double& ParameterStore::coordinate(std::size_t index) {
  for (auto& b : blocks_) {
    for (auto& t : b.tensors) {
      if (index < t.size()) return t.values[index];
      index -= t.size();
    }
  }
  throw ShapeError("parameter coordinate out of range");
}

double ParameterStore::coordinate(std::size_t index) const {
  return const_cast<ParameterStore&>(*this).coordinate(index);
}

bool ParameterStore::coordinate_trainable(std::size_t index) const {
  for (const auto& b : blocks_) {
    for (const auto& t : b.tensors) {
      if (index < t.size()) return b.trainable;
      index -= t.size();
    }
  }
  throw ShapeError("parameter coordinate out of range");
}

void ModelConfig::validate() const {
  if (vocab_size < 5) throw ConfigError("vocabulary must hold the reserved tokens and at least one word");
  if (embed_dim < 1 || layers < 0 || heads < 1 || ffn_dim < 1 || prefix_tokens < 1 || image_dim < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
  if (max_positions <= prefix_tokens) throw ConfigError("max_positions must exceed prefix_tokens");
}

// ---------------------------------------------------------------------------
// Network

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;
using Vec = Eigen::VectorXd;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using MapRow = Eigen::Map<RowVec>;
using CMapRow = Eigen::Map<const RowVec>;

constexpr double kLnEps = 1e-5;

// Fixed block order.
constexpr std::size_t kProjector = 0;
constexpr std::size_t kTokenEmbedding = 1;
constexpr std::size_t kPositionEmbedding = 2;
constexpr std::size_t kFirstLayer = 3;

enum LayerTensor : std::size_t { Ln1G, Ln1B, Wq, Bq, Wk, Bk, Wv, Bv, Wo, Bo, Ln2G, Ln2B, W1, B1, W2, B2 };

CMapMat mat(const Tensor& t) { return CMapMat(t.values.data(), t.rows, t.cols); }
MapMat mat(Tensor& t) { return MapMat(t.values.data(), t.rows, t.cols); }
CMapRow row(const Tensor& t) { return CMapRow(t.values.data(), static_cast<Eigen::Index>(t.size())); }
MapRow row(Tensor& t) { return MapRow(t.values.data(), static_cast<Eigen::Index>(t.size())); }

struct LnCache {
  Mat xhat;
  Vec rstd;
};

Mat layer_norm(const Mat& x, CMapRow gain, CMapRow bias, LnCache& cache) {
  const auto rows = x.rows();
  cache.xhat.resize(rows, x.cols());
  cache.rstd.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const RowVec centered = x.row(r).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(x.cols());
    cache.rstd(r) = 1.0 / std::sqrt(var + kLnEps);
    cache.xhat.row(r) = centered * cache.rstd(r);
  }
  return (cache.xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
}

Mat layer_norm_backward(const Mat& dy, CMapRow gain, const LnCache& cache, Tensor* dgain, Tensor* dbias) {
  if (dgain) row(*dgain) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (dbias) row(*dbias) += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gain.array();
  Mat dx(dy.rows(), dy.cols());
  const double n = static_cast<double>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / n;
    const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / n;
    dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LayerCache {
  Mat x_in;
  LnCache ln1;
  Mat a;
  Mat q, k, v;
  std::vector<Mat> probs;  // per head, T x T
  Mat o;
  Mat x1;
  LnCache ln2;
  Mat b;
  Mat hpre;
  Mat hact;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Mat x_out;
  LnCache lnf;
  Mat c;
  Mat logits;
  Vec lse;  // log-sum-exp per row
};

class Network {
 public:
  Network(const ModelConfig& cfg, const ParameterStore& params) : cfg_(cfg), p_(params) {}

  // Runs the decoder over [prefix; inputs]; rows of cache.logits are positions.
  ForwardCache run(std::span<const double> image, std::span<const int> inputs) const {
    const int k = cfg_.prefix_tokens;
    const int e = cfg_.embed_dim;
    const int t_len = k + static_cast<int>(inputs.size());
    if (static_cast<int>(image.size()) != cfg_.image_dim) {
      throw ShapeError("image feature has dimension " + std::to_string(image.size()) + ", expected " +
                       std::to_string(cfg_.image_dim));
    }
    if (t_len > cfg_.max_positions) {
      throw ShapeError("sequence of " + std::to_string(t_len) + " positions exceeds max_positions " +
                       std::to_string(cfg_.max_positions));
    }
    const auto& proj = p_.blocks()[kProjector];
    const Eigen::Map<const Vec> img(image.data(), static_cast<Eigen::Index>(image.size()));
    const Vec prefix = mat(proj.tensors[0]) * img + row(proj.tensors[1]).transpose();

    Mat x(t_len, e);
    for (int p = 0; p < k; ++p) x.row(p) = prefix.segment(static_cast<Eigen::Index>(p) * e, e).transpose();
    const auto tok = mat(p_.blocks()[kTokenEmbedding].tensors[0]);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      const int id = inputs[j];
      if (id < 0 || id >= cfg_.vocab_size) throw ShapeError("token id " + std::to_string(id) + " out of range");
      x.row(k + static_cast<Eigen::Index>(j)) = tok.row(id);
    }
    x += mat(p_.blocks()[kPositionEmbedding].tensors[0]).topRows(t_len);

    ForwardCache cache;
    cache.layers.resize(static_cast<std::size_t>(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) x = layer_forward(static_cast<std::size_t>(l), x, cache.layers[l]);
    cache.x_out = x;

    const auto& fin = p_.blocks()[kFirstLayer + cfg_.layers];
    const auto& head = p_.blocks()[kFirstLayer + cfg_.layers + 1];
    cache.c = layer_norm(x, row(fin.tensors[0]), row(fin.tensors[1]), cache.lnf);
    cache.logits = (cache.c * mat(head.tensors[0])).rowwise() + row(head.tensors[1]);
    cache.lse.resize(t_len);
    for (int r = 0; r < t_len; ++r) {
      const double m = cache.logits.row(r).maxCoeff();
      cache.lse(r) = m + std::log((cache.logits.row(r).array() - m).exp().sum());
    }
    return cache;
  }

  // dlogits: T x V. Accumulates parameter gradients of trainable blocks.
  void backward(std::span<const double> image, std::span<const int> inputs, const ForwardCache& cache,
                const Mat& dlogits, ParameterStore& grad) const {
    const int k = cfg_.prefix_tokens;
    const int e = cfg_.embed_dim;
    const std::size_t fin_idx = kFirstLayer + cfg_.layers;
    const std::size_t head_idx = fin_idx + 1;
    const auto& head = p_.blocks()[head_idx];
    auto& ghead = grad.blocks()[head_idx];
    if (trainable(head_idx)) {
      mat(ghead.tensors[0]).noalias() += cache.c.transpose() * dlogits;
      row(ghead.tensors[1]) += dlogits.colwise().sum();
    }
    const Mat dc = dlogits * mat(head.tensors[0]).transpose();
    const auto& fin = p_.blocks()[fin_idx];
    auto& gfin = grad.blocks()[fin_idx];
    Mat dx = layer_norm_backward(dc, row(fin.tensors[0]), cache.lnf, trainable(fin_idx) ? &gfin.tensors[0] : nullptr,
                                 trainable(fin_idx) ? &gfin.tensors[1] : nullptr);

    for (int l = cfg_.layers - 1; l >= 0; --l) {
      dx = layer_backward(static_cast<std::size_t>(l), cache.layers[static_cast<std::size_t>(l)], dx, grad);
    }

    // Embeddings.
    const int t_len = static_cast<int>(dx.rows());
    if (trainable(kPositionEmbedding)) {
      mat(grad.blocks()[kPositionEmbedding].tensors[0]).topRows(t_len) += dx;
    }
    if (trainable(kTokenEmbedding)) {
      auto gtok = mat(grad.blocks()[kTokenEmbedding].tensors[0]);
      for (std::size_t j = 0; j < inputs.size(); ++j) gtok.row(inputs[j]) += dx.row(k + static_cast<Eigen::Index>(j));
    }
    if (trainable(kProjector)) {
      Vec dprefix(static_cast<Eigen::Index>(k) * e);
      for (int p = 0; p < k; ++p) dprefix.segment(static_cast<Eigen::Index>(p) * e, e) = dx.row(p).transpose();
      const Eigen::Map<const Vec> img(image.data(), static_cast<Eigen::Index>(image.size()));
      auto& gproj = grad.blocks()[kProjector];
      mat(gproj.tensors[0]).noalias() += dprefix * img.transpose();
      row(gproj.tensors[1]) += dprefix.transpose();
    }
  }

 private:
  bool trainable(std::size_t block) const { return p_.blocks()[block].trainable; }

  const ParamBlock& layer(std::size_t l) const { return p_.blocks()[kFirstLayer + l]; }

  Mat layer_forward(std::size_t l, const Mat& x, LayerCache& c) const {
    const auto& ts = layer(l).tensors;
    const int heads = cfg_.heads;
    const int dh = cfg_.embed_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto t_len = x.rows();

    c.x_in = x;
    c.a = layer_norm(x, row(ts[Ln1G]), row(ts[Ln1B]), c.ln1);
    c.q = (c.a * mat(ts[Wq])).rowwise() + row(ts[Bq]);
    c.k = (c.a * mat(ts[Wk])).rowwise() + row(ts[Bk]);
    c.v = (c.a * mat(ts[Wv])).rowwise() + row(ts[Bv]);
    c.o.resize(t_len, cfg_.embed_dim);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h) * dh;
      Mat s = c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose() * scale;
      Mat& p = c.probs[static_cast<std::size_t>(h)];
      p.setZero(t_len, t_len);
      for (Eigen::Index i = 0; i < t_len; ++i) {
        const double m = s.row(i).head(i + 1).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          p(i, j) = std::exp(s(i, j) - m);
          z += p(i, j);
        }
        p.row(i).head(i + 1) /= z;
      }
      c.o.middleCols(off, dh) = p * c.v.middleCols(off, dh);
    }
    c.x1 = x + ((c.o * mat(ts[Wo])).rowwise() + row(ts[Bo]));
    c.b = layer_norm(c.x1, row(ts[Ln2G]), row(ts[Ln2B]), c.ln2);
    c.hpre = (c.b * mat(ts[W1])).rowwise() + row(ts[B1]);
    c.hact = c.hpre.unaryExpr([](double v) { return gelu(v); });
    return c.x1 + ((c.hact * mat(ts[W2])).rowwise() + row(ts[B2]));
  }

  Mat layer_backward(std::size_t l, const LayerCache& c, const Mat& dx2, ParameterStore& grad) const {
    const auto& ts = layer(l).tensors;
    const bool train = trainable(kFirstLayer + l);
    auto& gs = grad.blocks()[kFirstLayer + l].tensors;
    const int heads = cfg_.heads;
    const int dh = cfg_.embed_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // Feed-forward branch.
    if (train) {
      mat(gs[W2]).noalias() += c.hact.transpose() * dx2;
      row(gs[B2]) += dx2.colwise().sum();
    }
    const Mat dhact = dx2 * mat(ts[W2]).transpose();
    const Mat dhpre = dhact.array() * c.hpre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    if (train) {
      mat(gs[W1]).noalias() += c.b.transpose() * dhpre;
      row(gs[B1]) += dhpre.colwise().sum();
    }
    const Mat db = dhpre * mat(ts[W1]).transpose();
    Mat dx1 = dx2 + layer_norm_backward(db, row(ts[Ln2G]), c.ln2, train ? &gs[Ln2G] : nullptr,
                                        train ? &gs[Ln2B] : nullptr);

    // Attention branch.
    if (train) {
      mat(gs[Wo]).noalias() += c.o.transpose() * dx1;
      row(gs[Bo]) += dx1.colwise().sum();
    }
    const Mat d_o = dx1 * mat(ts[Wo]).transpose();
    Mat dq(c.q.rows(), c.q.cols());
    Mat dk(c.k.rows(), c.k.cols());
    Mat dv(c.v.rows(), c.v.cols());
    for (int h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h) * dh;
      const Mat& p = c.probs[static_cast<std::size_t>(h)];
      const auto doh = d_o.middleCols(off, dh);
      const Mat dp = doh * c.v.middleCols(off, dh).transpose();
      dv.middleCols(off, dh) = p.transpose() * doh;
      const Vec rowdot = (dp.array() * p.array()).rowwise().sum();
      const Mat ds = p.array() * (dp.colwise() - rowdot).array();
      dq.middleCols(off, dh) = ds * c.k.middleCols(off, dh) * scale;
      dk.middleCols(off, dh) = ds.transpose() * c.q.middleCols(off, dh) * scale;
    }
    if (train) {
      mat(gs[Wq]).noalias() += c.a.transpose() * dq;
      row(gs[Bq]) += dq.colwise().sum();
      mat(gs[Wk]).noalias() += c.a.transpose() * dk;
      row(gs[Bk]) += dk.colwise().sum();
      mat(gs[Wv]).noalias() += c.a.transpose() * dv;
      row(gs[Bv]) += dv.colwise().sum();
    }
    const Mat da = dq * mat(ts[Wq]).transpose() + dk * mat(ts[Wk]).transpose() + dv * mat(ts[Wv]).transpose();
    return dx1 + layer_norm_backward(da, row(ts[Ln1G]), c.ln1, train ? &gs[Ln1G] : nullptr,
                                     train ? &gs[Ln1B] : nullptr);
  }

  const ModelConfig& cfg_;
  const ParameterStore& p_;
};

std::vector<int> full_sequence(std::span<const int> context, std::span<const int> target) {
  std::vector<int> ids;
  ids.reserve(1 + context.size() + target.size());
  ids.push_back(Tokenizer::kBos);
  ids.insert(ids.end(), context.begin(), context.end());
  ids.insert(ids.end(), target.begin(), target.end());
  return ids;
}

std::vector<double> softmax_row(const ForwardCache& cache, Eigen::Index r) {
  std::vector<double> out(static_cast<std::size_t>(cache.logits.cols()));
  for (Eigen::Index v = 0; v < cache.logits.cols(); ++v) {
    out[static_cast<std::size_t>(v)] = std::exp(cache.logits(r, v) - cache.lse(r));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ToyMLLM

ToyMLLM::ToyMLLM(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  build_layout();
  initialize(seed);
}

ToyMLLM::ToyMLLM(const ModelConfig& config, ParameterStore params) : config_(config) {
  config_.validate();
  build_layout();
  if (!params_.same_layout(params)) throw ShapeError("parameter layout does not match model config");
  params_ = std::move(params);
}

void ToyMLLM::build_layout() {
  const int e = config_.embed_dim;
  params_ = ParameterStore{};
  {
    auto& b = params_.add_block("image_projector");
    params_.add_tensor(b, "weight", config_.prefix_tokens * e, config_.image_dim);
    params_.add_tensor(b, "bias", 1, config_.prefix_tokens * e);
  }
  params_.add_tensor(params_.add_block("token_embedding"), "table", config_.vocab_size, e);
  params_.add_tensor(params_.add_block("position_embedding"), "table", config_.max_positions, e);
  for (int l = 0; l < config_.layers; ++l) {
    auto& b = params_.add_block("layer" + std::to_string(l));
    params_.add_tensor(b, "ln1_gain", 1, e);
    params_.add_tensor(b, "ln1_bias", 1, e);
    params_.add_tensor(b, "wq", e, e);
    params_.add_tensor(b, "bq", 1, e);
    params_.add_tensor(b, "wk", e, e);
    params_.add_tensor(b, "bk", 1, e);
    params_.add_tensor(b, "wv", e, e);
    params_.add_tensor(b, "bv", 1, e);
    params_.add_tensor(b, "wo", e, e);
    params_.add_tensor(b, "bo", 1, e);
    params_.add_tensor(b, "ln2_gain", 1, e);
    params_.add_tensor(b, "ln2_bias", 1, e);
    params_.add_tensor(b, "w1", e, config_.ffn_dim);
    params_.add_tensor(b, "b1", 1, config_.ffn_dim);
    params_.add_tensor(b, "w2", config_.ffn_dim, e);
    params_.add_tensor(b, "b2", 1, e);
  }
  {
    auto& b = params_.add_block("final_norm");
    params_.add_tensor(b, "gain", 1, e);
    params_.add_tensor(b, "bias", 1, e);
  }
  {
    auto& b = params_.add_block("output_head");
    params_.add_tensor(b, "weight", e, config_.vocab_size);
    params_.add_tensor(b, "bias", 1, config_.vocab_size);
  }
}

void ToyMLLM::initialize(std::uint64_t seed) {
  Rng rng(seed, "model.init");
  auto fill_normal = [&](Tensor& t, double stddev) {
    for (auto& v : t.values) v = rng.normal(0.0, stddev);
  };
  auto fill = [](Tensor& t, double value) { std::fill(t.values.begin(), t.values.end(), value); };
  const double e = config_.embed_dim;
  auto& blocks = params_.blocks();
  fill_normal(blocks[kProjector].tensors[0], 1.0 / std::sqrt(static_cast<double>(config_.image_dim)));
  fill_normal(blocks[kTokenEmbedding].tensors[0], 0.3);
  fill_normal(blocks[kPositionEmbedding].tensors[0], 0.1);
  for (int l = 0; l < config_.layers; ++l) {
    auto& ts = blocks[kFirstLayer + l].tensors;
    fill(ts[Ln1G], 1.0);
    fill(ts[Ln2G], 1.0);
    for (auto idx : {Wq, Wk, Wv, Wo, W1}) fill_normal(ts[idx], 1.0 / std::sqrt(e));
    fill_normal(ts[W2], 1.0 / std::sqrt(static_cast<double>(config_.ffn_dim)));
  }
  fill(blocks[kFirstLayer + config_.layers].tensors[0], 1.0);
  fill_normal(blocks[kFirstLayer + config_.layers + 1].tensors[0], 1.0 / std::sqrt(e));
}

std::vector<std::string> ToyMLLM::block_names() const {
  std::vector<std::string> names;
  for (const auto& b : params_.blocks()) names.push_back(b.name);
  return names;
}

void ToyMLLM::select_trainable(std::span<const std::string> blocks) {
  for (const auto& name : blocks) (void)params_.block(name);
  for (auto& b : params_.blocks()) {
    b.trainable = std::find(blocks.begin(), blocks.end(), b.name) != blocks.end();
  }
}

Distributions ToyMLLM::forward(std::span<const double> image, std::span<const int> ids) const {
  if (ids.empty()) throw ShapeError("forward needs at least one token");
  const Network net(config_, params_);
  const auto cache = net.run(image, ids.first(ids.size() - 1));
  Distributions out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back(softmax_row(cache, config_.prefix_tokens - 1 + static_cast<Eigen::Index>(i)));
  }
  return out;
}

std::vector<double> ToyMLLM::next_token_distribution(std::span<const double> image, std::span<const int> ids) const {
  const Network net(config_, params_);
  const auto cache = net.run(image, ids);
  return softmax_row(cache, cache.logits.rows() - 1);
}

double ToyMLLM::token_ce_loss(std::span<const double> image, std::span<const int> context,
                              std::span<const int> target) const {
  if (target.empty()) throw DomainError("token_ce_loss needs a nonempty target");
  const auto ids = full_sequence(context, target);
  const Network net(config_, params_);
  const auto inputs = std::span<const int>(ids).first(ids.size() - 1);
  const auto cache = net.run(image, inputs);
  const std::size_t first = ids.size() - target.size();
  double total = 0.0;
  for (std::size_t i = first; i < ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(config_.prefix_tokens - 1 + i);
    total += cache.lse(r) - cache.logits(r, ids[i]);
  }
  return total / static_cast<double>(target.size());
}

double ToyMLLM::accumulate_gradient(std::span<const double> image, std::span<const int> context,
                                    std::span<const int> target, double weight, ParameterStore& grad) const {
  if (target.empty()) throw DomainError("token_ce_loss needs a nonempty target");
  if (!grad.same_layout(params_)) throw ShapeError("gradient buffer layout mismatch");
  const auto ids = full_sequence(context, target);
  const Network net(config_, params_);
  const auto inputs = std::span<const int>(ids).first(ids.size() - 1);
  const auto cache = net.run(image, inputs);
  const std::size_t first = ids.size() - target.size();
  const double inv = 1.0 / static_cast<double>(target.size());
  Mat dlogits = Mat::Zero(cache.logits.rows(), cache.logits.cols());
  double total = 0.0;
  for (std::size_t i = first; i < ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(config_.prefix_tokens - 1 + i);
    total += cache.lse(r) - cache.logits(r, ids[i]);
    dlogits.row(r) = (cache.logits.row(r).array() - cache.lse(r)).exp().matrix() * (weight * inv);
    dlogits(r, ids[i]) -= weight * inv;
  }
  net.backward(image, inputs, cache, dlogits, grad);
  return total * inv;
}

std::vector<int> ToyMLLM::generate_greedy(std::span<const double> image, std::span<const int> context,
                                          int max_new_tokens) const {
  std::vector<int> ids{Tokenizer::kBos};
  ids.insert(ids.end(), context.begin(), context.end());
  const Network net(config_, params_);
  std::vector<int> out;
  for (int step = 0; step < max_new_tokens; ++step) {
    if (config_.prefix_tokens + static_cast<int>(ids.size()) > config_.max_positions) break;
    const auto cache = net.run(image, ids);
    const auto last = cache.logits.rows() - 1;
    Eigen::Index best = 0;
    cache.logits.row(last).maxCoeff(&best);
    const int tok = static_cast<int>(best);
    if (tok == Tokenizer::kEos) break;
    out.push_back(tok);
    ids.push_back(tok);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kCheckpointFormat = "efuf-toy-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ToyMLLM& model, const Tokenizer& tokenizer) {
  const auto& c = model.config();
  if (c.vocab_size != tokenizer.size()) throw ShapeError("tokenizer size does not match model vocabulary");
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},   {"layers", c.layers},
                 {"heads", c.heads},           {"ffn_dim", c.ffn_dim},       {"prefix_tokens", c.prefix_tokens},
                 {"image_dim", c.image_dim},   {"max_positions", c.max_positions}};
  j["vocabulary"] = tokenizer.vocabulary();
  auto& blocks = j["blocks"] = nlohmann::json::array();
  for (const auto& b : model.parameters().blocks()) {
    nlohmann::json jb{{"name", b.name}, {"trainable", b.trainable}, {"tensors", nlohmann::json::array()}};
    for (const auto& t : b.tensors) {
      jb["tensors"].push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"values", t.values}});
    }
    blocks.push_back(std::move(jb));
  }
  io::write_text(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto j = io::read_json(path);
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw IoError(path.string() + " is not a toy-model checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw IoError(path.string() + ": unsupported checkpoint version");
    }
    const auto& jc = j.at("config");
    ModelConfig cfg;
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.embed_dim = jc.at("embed_dim").get<int>();
    cfg.layers = jc.at("layers").get<int>();
    cfg.heads = jc.at("heads").get<int>();
    cfg.ffn_dim = jc.at("ffn_dim").get<int>();
    cfg.prefix_tokens = jc.at("prefix_tokens").get<int>();
    cfg.image_dim = jc.at("image_dim").get<int>();
    cfg.max_positions = jc.at("max_positions").get<int>();
    ParameterStore store;
    for (const auto& jb : j.at("blocks")) {
      auto& b = store.add_block(jb.at("name").get<std::string>());
      b.trainable = jb.at("trainable").get<bool>();
      for (const auto& jt : jb.at("tensors")) {
        const auto shape = jt.at("shape").get<std::vector<int>>();
        if (shape.size() != 2) throw ShapeError("tensor shape must have two dimensions");
        auto& t = store.add_tensor(b, jt.at("name").get<std::string>(), shape[0], shape[1]);
        t.values = jt.at("values").get<std::vector<double>>();
        if (t.values.size() != static_cast<std::size_t>(shape[0]) * shape[1]) {
          throw ShapeError("tensor '" + t.name + "' value count does not match its shape");
        }
      }
    }
    auto tokenizer = Tokenizer::from_vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
    if (tokenizer.size() != cfg.vocab_size) throw ShapeError("checkpoint vocabulary size mismatch");
    return Checkpoint{ToyMLLM(cfg, std::move(store)), std::move(tokenizer)};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace efuf
