#include "efuf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <limits>
#include <memory>

#include "efuf/error.hpp"
#include "efuf/hash.hpp"
#include "efuf/io.hpp"
#include "efuf/metrics.hpp"
#include "efuf/rng.hpp"
#include "efuf/stats.hpp"
#include "efuf/synthetic.hpp"

namespace efuf {

namespace fs = std::filesystem;
using io::Json;

namespace {

const std::set<std::string, std::less<>> kKnownKeys = {
    "corpus_dir",      "out_dir",           "seed",
    "grid_rows",       "grid_cols",         "min_window",
    "phrase_template", "backend",           "backend_seed",
    "embedding_dim",   "extractor",         "extractor_endpoint",
    "extractor_model", "extractor_max_in_flight", "extractor_max_attempts",
    "extractor_timeout_ms", "t0",           "t1",
    "t2",              "lambda1",           "lambda2",
    "optimizer",       "lr",                "weight_decay",
    "epochs",          "batch_pos",         "batch_neg",
    "batch_sent",      "clip_norm",         "train_mode",
    "trainable",       "embed_dim",         "layers",
    "heads",           "ffn_dim",           "prefix_tokens",
    "image_dim",       "max_positions",     "sft_optimizer",
    "sft_lr",          "sft_weight_decay",  "sft_epochs",
    "sft_batch",       "sft_clip_norm",     "generator",
    "image_features",  "feature_noise",
    "max_new_tokens",  "val_fraction",      "test_fraction",
    "eval_split",      "prelim_source",     "prelim_samples",
    "prelim_mean0",    "prelim_sd0",        "prelim_mean1",
    "prelim_sd1",      "histogram_bins",
};

// Environment variable holding the bearer token of the remote extractor.
constexpr const char* kExtractorTokenEnv = "EFUF_EXTRACTOR_TOKEN";

std::optional<double> clip_setting(const KeyValueConfig& c, std::string_view key) {
  const auto v = c.find(key);
  if (!v || *v == "off" || *v == "none") return std::nullopt;
  if (*v == "on" || *v == "default") return TrainConfig::kDefaultClipNorm;
  const double x = c.get_double(key, TrainConfig::kDefaultClipNorm);
  if (!(x > 0.0)) throw ConfigError(std::string(key) + " must be positive, 'on', or 'off'");
  return x;
}

std::size_t positive_size(const KeyValueConfig& c, std::string_view key, std::size_t fallback) {
  const auto v = c.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 1) throw ConfigError(std::string(key) + " must be at least 1");
  return static_cast<std::size_t>(v);
}

int positive_int(const KeyValueConfig& c, std::string_view key, int fallback) {
  return static_cast<int>(positive_size(c, key, static_cast<std::size_t>(fallback)));
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

fs::path artifact(const RunConfig& cfg, std::string_view name) { return cfg.out_dir / std::string(name); }

/// Throws an IoError naming the file and the subcommand that produces it.
fs::path require(const RunConfig& cfg, std::string_view name, std::string_view producer) {
  auto p = artifact(cfg, name);
  if (!fs::exists(p)) {
    throw IoError("missing " + p.string() + "; run `efuf " + std::string(producer) + "` first");
  }
  return p;
}

Json stage_meta(const RunConfig& cfg, std::string_view command, const std::vector<fs::path>& inputs) {
  Json in = Json::object();
  for (const auto& p : inputs) in[p.filename().string()] = file_hash(p);
  return Json{{"command", command}, {"config_hash", cfg.config_hash}, {"seed", cfg.seed}, {"inputs", in}};
}

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Writes `<command>.meta.json`; the only file that carries timings.
StageReport finish_stage(const RunConfig& cfg, std::string_view command, const std::vector<fs::path>& inputs,
                         const std::vector<fs::path>& outputs, const StageTimer& timer, Json extra = Json::object()) {
  Json report = stage_meta(cfg, command, inputs);
  Json out = Json::object();
  for (const auto& p : outputs) out[p.filename().string()] = file_hash(p);
  report["outputs"] = out;
  report["elapsed_ms"] = timer.elapsed_ms();
  for (auto& [k, v] : extra.items()) report[k] = v;
  io::write_json(cfg.out_dir / (std::string(command) + ".meta.json"), report);
  return report;
}

const CorpusEntry* find_entry(const std::map<std::string, const CorpusEntry*>& index, const std::string& id) {
  const auto it = index.find(id);
  if (it == index.end()) throw DomainError("image '" + id + "' is not part of the corpus");
  return it->second;
}

std::map<std::string, const CorpusEntry*> index_corpus(const std::vector<CorpusEntry>& corpus) {
  std::map<std::string, const CorpusEntry*> index;
  for (const auto& e : corpus) index.emplace(e.record.image_id, &e);
  return index;
}

Split read_splits(const RunConfig& cfg) {
  const auto j = io::read_json(require(cfg, artifacts::kSplits, "generate"));
  return Split{j.at("train").get<std::vector<std::string>>(), j.at("val").get<std::vector<std::string>>(),
               j.at("test").get<std::vector<std::string>>()};
}

std::vector<TrainingSample> encode_all(const std::vector<UnlearningSample>& samples, const Tokenizer& tok,
                                       const ImageFeatureFn& features) {
  std::vector<TrainingSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_sample(s, tok, features));
  return out;
}

Json nullable(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

RunConfig RunConfig::from_config(const KeyValueConfig& config, const fs::path& base_dir, const Overrides& overrides) {
  for (const auto& [key, value] : config.entries()) {
    if (!kKnownKeys.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig rc;
  rc.raw = config;
  if (overrides.seed) rc.raw.set("seed", std::to_string(*overrides.seed));
  const auto& c = rc.raw;

  const auto seed = c.get_int("seed", 0);
  if (seed < 0) throw ConfigError("seed must be non-negative");
  rc.seed = static_cast<std::uint64_t>(seed);
  rc.corpus_dir = resolve(base_dir, c.get_string("corpus_dir", "data/synthetic"));
  if (!fs::is_directory(rc.corpus_dir)) throw ConfigError("corpus_dir " + rc.corpus_dir.string() + " does not exist");
  rc.out_dir = overrides.out_dir ? *overrides.out_dir : resolve(base_dir, c.get_string("out_dir", "runs/default"));

  rc.window.grid_rows = static_cast<int>(c.get_int("grid_rows", 3));
  rc.window.grid_cols = static_cast<int>(c.get_int("grid_cols", 3));
  rc.window.min_window = static_cast<int>(c.get_int("min_window", 1));
  rc.window.phrase_template = c.get_string("phrase_template", "");
  rc.window.validate();
  rc.backend = c.get_string("backend", "scene");
  if (rc.backend != "scene" && rc.backend != "stub") throw ConfigError("backend must be 'scene' or 'stub'");
  rc.embedding_dim = positive_size(c, "embedding_dim", 256);
  rc.extractor = c.get_string("extractor", "lexicon");
  if (rc.extractor != "lexicon" && rc.extractor != "remote") throw ConfigError("extractor must be 'lexicon' or 'remote'");
  rc.remote.endpoint = c.get_string("extractor_endpoint", "");
  rc.remote.model = c.get_string("extractor_model", "");
  rc.remote.max_in_flight = positive_int(c, "extractor_max_in_flight", 4);
  rc.remote.max_attempts = positive_int(c, "extractor_max_attempts", 3);
  rc.remote.timeout = std::chrono::milliseconds(c.get_int("extractor_timeout_ms", 30000));
  if (rc.extractor == "remote") {
    if (rc.remote.endpoint.empty()) throw ConfigError("extractor = remote needs extractor_endpoint");
    if (const char* token = std::getenv(kExtractorTokenEnv)) rc.remote.auth_token = token;
  }

  rc.thresholds = {c.get_double("t0", 32.0), c.get_double("t1", 23.0), c.get_double("t2", 27.5)};
  rc.thresholds.validate();
  rc.weights = {c.get_double("lambda1", 0.3), c.get_double("lambda2", 0.2)};
  rc.weights.validate();

  rc.efuf.optimizer.kind = optimizer_from_string(c.get_string("optimizer", "adamw"));
  rc.efuf.optimizer.learning_rate = c.get_double("lr", 1e-5);
  rc.efuf.optimizer.weight_decay = c.get_double("weight_decay", 0.05);
  rc.efuf.epochs = positive_int(c, "epochs", 1);
  rc.efuf.batch_pos = positive_size(c, "batch_pos", 4);
  rc.efuf.batch_neg = positive_size(c, "batch_neg", 4);
  rc.efuf.batch_sent = positive_size(c, "batch_sent", 4);
  rc.efuf.clip_norm = clip_setting(c, "clip_norm");
  rc.efuf.seed = substream_seed(rc.seed, "trainer.efuf");
  rc.efuf.validate();
  rc.train_mode = c.get_string("train_mode", "efuf");
  if (rc.train_mode != "efuf" && rc.train_mode != "sft") throw ConfigError("train_mode must be 'efuf' or 'sft'");
  rc.trainable = split_list(c.get_string("trainable", "image_projector"));
  if (rc.trainable.empty()) throw ConfigError("trainable must name at least one block");

  rc.model.embed_dim = positive_int(c, "embed_dim", 32);
  rc.model.layers = positive_int(c, "layers", 2);
  rc.model.heads = positive_int(c, "heads", 2);
  rc.model.ffn_dim = positive_int(c, "ffn_dim", 64);
  rc.model.prefix_tokens = positive_int(c, "prefix_tokens", 4);
  rc.model.image_dim = positive_int(c, "image_dim", 16);
  rc.model.max_positions = positive_int(c, "max_positions", 64);

  rc.sft.optimizer.kind = optimizer_from_string(c.get_string("sft_optimizer", "adamw"));
  rc.sft.optimizer.learning_rate = c.get_double("sft_lr", 3e-3);
  rc.sft.optimizer.weight_decay = c.get_double("sft_weight_decay", 0.0);
  rc.sft.epochs = positive_int(c, "sft_epochs", 60);
  rc.sft.batch_sent = positive_size(c, "sft_batch", 8);
  rc.sft.clip_norm = clip_setting(c, "sft_clip_norm");
  rc.sft.seed = substream_seed(rc.seed, "trainer.sft");
  rc.sft.validate();
  rc.image_features = c.get_string("image_features", "scene");
  if (rc.image_features != "scene" && rc.image_features != "random") {
    throw ConfigError("image_features must be 'scene' or 'random'");
  }
  rc.feature_noise = c.get_double("feature_noise", 0.2);
  if (!(rc.feature_noise >= 0.0)) throw ConfigError("feature_noise must be non-negative");
  rc.generator = c.get_string("generator", "model");
  if (rc.generator != "model" && rc.generator != "corpus") throw ConfigError("generator must be 'model' or 'corpus'");
  rc.max_new_tokens = positive_int(c, "max_new_tokens", 48);

  rc.val_fraction = c.get_double("val_fraction", 0.1);
  rc.test_fraction = c.get_double("test_fraction", 0.1);
  if (rc.val_fraction < 0 || rc.test_fraction < 0 || rc.val_fraction + rc.test_fraction >= 1.0) {
    throw ConfigError("val_fraction and test_fraction must be non-negative and sum below 1");
  }
  rc.eval_split = c.get_string("eval_split", "train");
  if (rc.eval_split != "train" && rc.eval_split != "val" && rc.eval_split != "test") {
    throw ConfigError("eval_split must be train, val, or test");
  }

  rc.prelim_source = c.get_string("prelim_source", "gaussian");
  if (rc.prelim_source != "gaussian" && rc.prelim_source != "scores") {
    throw ConfigError("prelim_source must be 'gaussian' or 'scores'");
  }
  rc.prelim_samples = positive_int(c, "prelim_samples", 500);
  rc.prelim_mean0 = c.get_double("prelim_mean0", 28.26);
  rc.prelim_sd0 = c.get_double("prelim_sd0", 2.74);
  rc.prelim_mean1 = c.get_double("prelim_mean1", 25.35);
  rc.prelim_sd1 = c.get_double("prelim_sd1", 2.70);
  rc.histogram_bins = positive_int(c, "histogram_bins", 20);
  if (rc.histogram_bins < 2) throw ConfigError("histogram_bins must be at least 2");

  // The output location is not part of the run's identity.
  KeyValueConfig identity;
  for (const auto& [key, value] : c.entries()) {
    if (key != "out_dir") identity.set(key, value);
  }
  rc.config_hash = identity.hash();
  return rc;
}

RunConfig RunConfig::load(const fs::path& path, const Overrides& overrides) {
  const auto kv = KeyValueConfig::load(path);
  return from_config(kv, path.parent_path().empty() ? fs::path(".") : path.parent_path(), overrides);
}

std::vector<CorpusEntry> load_corpus(const fs::path& dir) {
  const auto captions_path = dir / "captions.jsonl";
  if (!fs::exists(captions_path)) throw IoError("corpus " + dir.string() + " has no captions.jsonl");
  std::vector<CorpusEntry> corpus;
  std::map<std::string, std::size_t> by_id;
  for (const auto& r : io::read_jsonl(captions_path).records) {
    CorpusEntry e;
    e.record.image_id = r.at("image_id").get<std::string>();
    e.record.image.id = e.record.image_id;
    if (const auto it = r.find("image"); it != r.end() && !it->get<std::string>().empty()) {
      e.record.image.path = dir / it->get<std::string>();
    }
    e.record.prompt = r.value("prompt", std::string());
    e.record.caption = r.at("caption").get<std::string>();
    if (!by_id.emplace(e.record.image_id, corpus.size()).second) {
      throw IoError(captions_path.string() + ": duplicate image_id '" + e.record.image_id + "'");
    }
    corpus.push_back(std::move(e));
  }
  auto attach = [&](const fs::path& path, auto&& apply) {
    if (!fs::exists(path)) return;
    for (const auto& r : io::read_jsonl(path).records) {
      const auto id = r.at("image_id").get<std::string>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw IoError(path.string() + ": unknown image_id '" + id + "'");
      apply(corpus[it->second], r);
    }
  };
  attach(dir / "objects.jsonl", [](CorpusEntry& e, const Json& r) {
    for (const auto& o : r.at("objects")) {
      const auto name = o.get<std::string>();
      e.objects.insert(Lexicon::coco().canonical(name).value_or(to_lower(name)));
    }
    e.has_objects = true;
  });
  attach(dir / "references.jsonl", [](CorpusEntry& e, const Json& r) {
    e.references = r.at("references").get<std::vector<std::string>>();
  });
  return corpus;
}

Split split_ids(std::vector<std::string> ids, double val_fraction, double test_fraction, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Rng(seed, "pipeline.split").shuffle(ids);
  const auto n = ids.size();
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n)));
  Split s;
  s.val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val),
                ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  check_disjoint(s);
  return s;
}

void check_disjoint(const Split& split) {
  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) throw DomainError("image '" + id + "' appears in more than one split");
    }
  }
}

ImageFeatureFn feature_function(const RunConfig& config) {
  const auto seed = substream_seed(config.seed, "pipeline.image_features");
  const int dim = config.model.image_dim;
  if (config.image_features == "random") {
    return [seed, dim](std::string_view id) { return synthetic_image_feature(id, dim, seed); };
  }
  // Scene files are read once; images without one fall back to identity noise.
  auto by_id = std::make_shared<std::map<std::string, std::vector<double>, std::less<>>>();
  for (const auto& e : load_corpus(config.corpus_dir)) {
    const auto& path = e.record.image.path;
    if (path.extension() != ".json" || !fs::exists(path)) continue;
    (*by_id)[e.record.image_id] = scene_image_feature(read_scene(path), dim, seed, config.feature_noise);
  }
  return [seed, dim, by_id](std::string_view id) {
    const auto it = by_id->find(id);
    return it != by_id->end() ? it->second : synthetic_image_feature(id, dim, seed);
  };
}

std::vector<CaptionMentions> read_mentions(const fs::path& path) {
  std::vector<CaptionMentions> out;
  for (const auto& r : io::read_jsonl(path).records) {
    CaptionMentions cm;
    cm.record.image_id = r.at("image_id").get<std::string>();
    cm.record.image.id = cm.record.image_id;
    cm.record.prompt = r.at("prompt").get<std::string>();
    cm.record.caption = r.at("caption").get<std::string>();
    for (const auto& m : r.at("mentions")) {
      ScoredMention sm;
      sm.mention.phrase = m.at("phrase").get<std::string>();
      sm.mention.span = {m.at("start").get<std::size_t>(), m.at("end").get<std::size_t>()};
      if (m.contains("gold_label") && !m.at("gold_label").is_null()) sm.mention.gold_label = m.at("gold_label").get<int>();
      sm.score = m.at("score").get<double>();
      cm.mentions.push_back(std::move(sm));
    }
    out.push_back(std::move(cm));
  }
  return out;
}

std::vector<UnlearningSample> read_dataset(const fs::path& path) {
  std::vector<UnlearningSample> out;
  for (const auto& r : io::read_jsonl(path).records) out.push_back(r.get<UnlearningSample>());
  return out;
}

StageReport cmd_generate(const RunConfig& cfg) {
  StageTimer timer;
  fs::create_directories(cfg.out_dir);
  const auto corpus = load_corpus(cfg.corpus_dir);
  const auto index = index_corpus(corpus);
  const auto captions_in = cfg.corpus_dir / "captions.jsonl";

  std::vector<std::string> ids;
  for (const auto& e : corpus) ids.push_back(e.record.image_id);
  const auto split = split_ids(ids, cfg.val_fraction, cfg.test_fraction, cfg.seed);
  const auto meta = stage_meta(cfg, "generate", {captions_in});
  io::write_json(artifact(cfg, artifacts::kSplits),
                 Json{{"_meta", meta}, {"train", split.train}, {"val", split.val}, {"test", split.test}});

  // Base captioner: supervised fine-tuning on the training captions.
  std::vector<std::string> texts;
  std::vector<UnlearningSample> sft_samples;
  for (const auto& id : split.train) {
    const auto& rec = find_entry(index, id)->record;
    texts.push_back(rec.prompt);
    texts.push_back(rec.caption);
    sft_samples.push_back({id, rec.prompt, rec.caption, Polarity::Sentence, 0.0});
  }
  const auto tokenizer = Tokenizer::build(texts);
  ModelConfig mc = cfg.model;
  mc.vocab_size = tokenizer.size();
  ToyMLLM model(mc, substream_seed(cfg.seed, "model.init"));
  const auto features = feature_function(cfg);
  TrainingSets sets;
  sets.sent = encode_all(sft_samples, tokenizer, features);
  for (const auto& s : sets.sent) {
    if (static_cast<int>(1 + s.context.size() + s.target.size()) > mc.max_positions) {
      throw ConfigError("caption of '" + s.image_id + "' exceeds max_positions = " + std::to_string(mc.max_positions));
    }
  }

  std::vector<Json> sft_log;
  if (!sets.sent.empty()) {
    Optimizer optimizer(cfg.sft.optimizer);
    std::size_t step = 0;
    for (int epoch = 0; epoch < cfg.sft.epochs; ++epoch) {
      const auto reports = run_epoch(model, optimizer, sets, LossWeights{0.0, 1.0}, cfg.sft, epoch, step);
      step += reports.size();
      double sum = 0.0;
      for (const auto& r : reports) sum += r.l_sent;
      sft_log.push_back(Json{{"epoch", epoch},
                             {"steps", reports.size()},
                             {"mean_loss", sum / static_cast<double>(reports.size())}});
    }
  }
  io::write_jsonl(artifact(cfg, artifacts::kSftLog), meta, sft_log);
  save_checkpoint(artifact(cfg, artifacts::kBaseModel), model, tokenizer);

  std::vector<Json> captions;
  std::vector<Json> errors;
  for (const auto& id : split.train) {
    const auto& e = *find_entry(index, id);
    std::string caption;
    if (cfg.generator == "corpus") {
      caption = e.record.caption;
    } else {
      try {
        const auto ctx = tokenizer.encode(e.record.prompt);
        caption = tokenizer.decode(model.generate_greedy(features(id), ctx, cfg.max_new_tokens));
        if (caption.empty()) throw DomainError("empty caption");
      } catch (const Error& err) {
        errors.push_back(Json{{"image_id", id}, {"error", err.what()}});
        continue;
      }
    }
    Json rec{{"image_id", id}, {"prompt", e.record.prompt}, {"caption", caption}};
    rec["image"] = e.record.image.path.empty() ? std::string() : fs::relative(e.record.image.path, cfg.corpus_dir).generic_string();
    captions.push_back(std::move(rec));
  }
  io::write_jsonl(artifact(cfg, artifacts::kCaptions), meta, captions);
  io::write_jsonl(artifact(cfg, artifacts::kGenerateErrors), meta, errors);

  return finish_stage(cfg, "generate", {captions_in},
                      {artifact(cfg, artifacts::kSplits), artifact(cfg, artifacts::kSftLog),
                       artifact(cfg, artifacts::kBaseModel), artifact(cfg, artifacts::kCaptions)},
                      timer, Json{{"captions", captions.size()}, {"errors", errors.size()}});
}

namespace {

std::unique_ptr<EmbeddingBackend> make_backend(const RunConfig& cfg) {
  const auto seed = static_cast<std::uint64_t>(cfg.raw.get_int("backend_seed", 0));
  if (cfg.backend == "stub") return std::make_unique<StubEmbeddingBackend>(seed, cfg.embedding_dim);
  SceneEmbeddingBackend::Params params;
  params.dim = cfg.embedding_dim;
  return std::make_unique<SceneEmbeddingBackend>(Lexicon::coco(), seed, params);
}

std::unique_ptr<ExtractorBackend> make_extractor(const RunConfig& cfg) {
  if (cfg.extractor == "remote") return std::make_unique<RemoteExtractor>(cfg.remote);
  return std::make_unique<LexiconExtractor>(Lexicon::coco());
}

}  // namespace

StageReport cmd_score(const RunConfig& cfg) {
  StageTimer timer;
  const auto captions_path = require(cfg, artifacts::kCaptions, "generate");
  const auto corpus = load_corpus(cfg.corpus_dir);
  const auto index = index_corpus(corpus);
  const auto backend = make_backend(cfg);
  const auto extractor = make_extractor(cfg);
  ScoreCache cache(artifact(cfg, artifacts::kScoreCache));

  std::vector<Json> out;
  std::size_t n_mentions = 0;
  std::size_t n_dropped = 0;
  for (const auto& r : io::read_jsonl(captions_path).records) {
    CaptionRecord rec;
    rec.image_id = r.at("image_id").get<std::string>();
    rec.image.id = rec.image_id;
    const auto image = r.value("image", std::string());
    if (!image.empty()) rec.image.path = cfg.corpus_dir / image;
    rec.prompt = r.at("prompt").get<std::string>();
    rec.caption = r.at("caption").get<std::string>();
    const auto* entry = find_entry(index, rec.image_id);

    const auto extraction = extract_objects(*extractor, rec);
    n_dropped += extraction.dropped;
    Json mentions = Json::array();
    for (const auto& m : extraction.mentions) {
      const double score = score_object_cached(cache, *backend, rec.image, m.phrase, cfg.window).value;
      Json jm{{"phrase", m.phrase}, {"start", m.span.start}, {"end", m.span.end}, {"score", score}};
      if (entry->has_objects) {
        const auto canonical = Lexicon::coco().canonical(m.phrase).value_or(to_lower(m.phrase));
        jm["gold_label"] = entry->objects.count(canonical) ? 0 : 1;
      } else {
        jm["gold_label"] = nullptr;
      }
      mentions.push_back(std::move(jm));
      ++n_mentions;
    }
    out.push_back(Json{{"image_id", rec.image_id},
                       {"image", image},
                       {"prompt", rec.prompt},
                       {"caption", rec.caption},
                       {"mentions", std::move(mentions)},
                       {"dropped", extraction.dropped}});
  }
  auto meta = stage_meta(cfg, "score", {captions_path});
  meta["backend"] = backend->id();
  meta["window_hash"] = cfg.window.hash();
  io::write_jsonl(artifact(cfg, artifacts::kMentions), meta, out);
  return finish_stage(cfg, "score", {captions_path}, {artifact(cfg, artifacts::kMentions)}, timer,
                      Json{{"captions", out.size()}, {"mentions", n_mentions}, {"dropped", n_dropped}});
}

StageReport cmd_curate(const RunConfig& cfg) {
  StageTimer timer;
  const auto mentions_path = require(cfg, artifacts::kMentions, "score");
  const auto corpus = read_mentions(mentions_path);
  const auto sets = curate(corpus, cfg.thresholds, cfg.seed);
  const auto meta = stage_meta(cfg, "curate", {mentions_path});
  auto write = [&](std::string_view name, const std::vector<UnlearningSample>& samples) {
    std::vector<Json> records(samples.begin(), samples.end());
    io::write_jsonl(artifact(cfg, name), meta, records);
    return artifact(cfg, name);
  };
  const std::vector<fs::path> outputs = {write(artifacts::kPositive, sets.positive),
                                         write(artifacts::kNegative, sets.negative),
                                         write(artifacts::kSentence, sets.sentence)};
  return finish_stage(cfg, "curate", {mentions_path}, outputs, timer,
                      Json{{"d_pos", sets.positive.size()},
                           {"d_neg", sets.negative.size()},
                           {"d_sent", sets.sentence.size()}});
}

StageReport cmd_train(const RunConfig& cfg) {
  StageTimer timer;
  const auto base_path = require(cfg, artifacts::kBaseModel, "generate");
  const auto pos_path = require(cfg, artifacts::kPositive, "curate");
  const auto neg_path = require(cfg, artifacts::kNegative, "curate");
  const auto sent_path = require(cfg, artifacts::kSentence, "curate");

  auto ckpt = load_checkpoint(base_path);
  auto& model = ckpt.model;
  const auto features = feature_function(cfg);
  TrainingSets sets;
  LossWeights weights = cfg.weights;
  sets.sent = encode_all(read_dataset(sent_path), ckpt.tokenizer, features);
  if (cfg.train_mode == "efuf") {
    sets.pos = encode_all(read_dataset(pos_path), ckpt.tokenizer, features);
    sets.neg = encode_all(read_dataset(neg_path), ckpt.tokenizer, features);
  } else {
    weights = LossWeights{0.0, 1.0};
  }
  model.select_trainable(cfg.trainable);

  Optimizer optimizer(cfg.efuf.optimizer);
  std::vector<Json> log;
  std::size_t step = 0;
  for (int epoch = 0; epoch < cfg.efuf.epochs; ++epoch) {
    const auto reports = run_epoch(model, optimizer, sets, weights, cfg.efuf, epoch, step,
                                   [&](const StepReport& r) {
                                     Json j = r;
                                     j["epoch"] = epoch;
                                     log.push_back(std::move(j));
                                   });
    step += reports.size();
  }
  const auto inputs = std::vector<fs::path>{base_path, pos_path, neg_path, sent_path};
  auto meta = stage_meta(cfg, "train", inputs);
  meta["train_mode"] = cfg.train_mode;
  meta["trainable"] = cfg.trainable;
  io::write_jsonl(artifact(cfg, artifacts::kTrainLog), meta, log);
  save_checkpoint(artifact(cfg, artifacts::kEfufModel), model, ckpt.tokenizer);
  return finish_stage(cfg, "train", inputs,
                      {artifact(cfg, artifacts::kTrainLog), artifact(cfg, artifacts::kEfufModel)}, timer,
                      Json{{"steps", step}});
}

StageReport cmd_eval(const RunConfig& cfg) {
  StageTimer timer;
  const auto base_path = require(cfg, artifacts::kBaseModel, "generate");
  const auto efuf_path = require(cfg, artifacts::kEfufModel, "train");
  const auto base = load_checkpoint(base_path);
  const auto tuned = load_checkpoint(efuf_path);
  if (!(base.tokenizer == tuned.tokenizer)) {
    throw ConfigError("refusing to compare " + base_path.string() + " and " + efuf_path.string() +
                      ": they were produced under different tokenizer vocabularies");
  }
  const auto corpus = load_corpus(cfg.corpus_dir);
  const auto index = index_corpus(corpus);
  const auto split = read_splits(cfg);
  const auto& ids = cfg.eval_split == "train" ? split.train : cfg.eval_split == "val" ? split.val : split.test;
  const auto features = feature_function(cfg);

  std::vector<std::string> lm_corpus;
  for (const auto& id : split.train) {
    const auto* e = find_entry(index, id);
    for (const auto& ref : e->references) lm_corpus.push_back(ref);
  }
  std::optional<BigramScorer> scorer;
  if (!lm_corpus.empty()) scorer.emplace(lm_corpus);

  std::vector<fs::path> inputs = {base_path, efuf_path, artifact(cfg, artifacts::kSplits)};
  std::map<std::string, std::vector<TrainingSample>> nll_sets;
  for (const auto& [key, name] : {std::pair{"d_pos", artifacts::kPositive}, std::pair{"d_neg", artifacts::kNegative},
                                  std::pair{"d_sent", artifacts::kSentence}}) {
    const auto p = artifact(cfg, name);
    if (!fs::exists(p)) continue;
    inputs.push_back(p);
    nll_sets[key] = encode_all(read_dataset(p), base.tokenizer, features);
  }

  std::vector<Json> caption_log(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) caption_log[i] = Json{{"image_id", ids[i]}};

  auto evaluate = [&](const char* label, const ToyMLLM& model) {
    std::vector<std::string> candidates;
    std::vector<std::vector<std::string>> references;
    std::vector<AnnotatedResponse> annotated;
    double nll_sum = 0.0;
    std::size_t nll_count = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& e = *find_entry(index, ids[i]);
      const auto ctx = base.tokenizer.encode(e.record.prompt);
      const auto text = base.tokenizer.decode(model.generate_greedy(features(ids[i]), ctx, cfg.max_new_tokens));
      caption_log[i][label] = text;
      if (e.has_objects) annotated.push_back(annotate_response(ids[i], text, e.objects, Lexicon::coco()));
      if (!e.references.empty()) {
        candidates.push_back(text);
        references.push_back(e.references);
      }
      if (scorer && !text.empty()) {
        if (const auto f = fluency(&*scorer, text)) {
          nll_sum += *f;
          ++nll_count;
        }
      }
    }
    Json m;
    m["samples"] = ids.size();
    std::size_t total_objects = 0;
    for (const auto& a : annotated) total_objects += a.objects.size();
    if (total_objects > 0) {
      const auto c = chair(annotated);
      m["chair_s"] = c.chair_s;
      m["chair_i"] = c.chair_i;
      m["objects"] = c.objects;
      m["hallucinated_objects"] = c.hallucinated_objects;
      m["hallucinated_responses"] = c.hallucinated_responses;
    } else {
      m["chair_s"] = nullptr;
      m["chair_i"] = nullptr;
      m["chair_note"] = "skipped: no ground-truth objects or no mentioned objects";
    }
    if (!candidates.empty()) {
      m["bleu1"] = corpus_bleu_text(candidates, references, 1);
      m["bleu2"] = corpus_bleu_text(candidates, references, 2);
      m["bleu4"] = corpus_bleu_text(candidates, references, 4);
    } else {
      m["bleu1"] = m["bleu2"] = m["bleu4"] = nullptr;
    }
    if (nll_count > 0) {
      m["fluency"] = nll_sum / static_cast<double>(nll_count);
      m["fluency_scorer"] = scorer->id();
    } else {
      m["fluency"] = nullptr;
      m["fluency_note"] = "skipped: no language-model scorer available";
    }
    Json nll = Json::object();
    for (const auto& [key, samples] : nll_sets) {
      nll[key] = samples.empty() ? Json(nullptr) : Json(mean_token_nll(model, samples));
    }
    m["target_nll"] = nll;
    return m;
  };

  Json report;
  report["_meta"] = stage_meta(cfg, "eval", inputs);
  report["split"] = cfg.eval_split;
  report["models"] = Json{{"base", evaluate("base", base.model)}, {"efuf", evaluate("efuf", tuned.model)}};
  report["informativeness"] = nullptr;
  report["informativeness_note"] = "skipped: no judge configured";
  io::write_json(artifact(cfg, artifacts::kEvalReport), report);
  io::write_jsonl(artifact(cfg, artifacts::kEvalCaptions), report["_meta"], caption_log);
  return finish_stage(cfg, "eval", inputs,
                      {artifact(cfg, artifacts::kEvalReport), artifact(cfg, artifacts::kEvalCaptions)}, timer);
}

StageReport cmd_prelim(const RunConfig& cfg) {
  StageTimer timer;
  fs::create_directories(cfg.out_dir);
  std::vector<double> clean;
  std::vector<double> halluc;
  std::vector<fs::path> inputs;
  if (cfg.prelim_source == "gaussian") {
    Rng r0(cfg.seed, "prelim.non_hallucinated");
    Rng r1(cfg.seed, "prelim.hallucinated");
    for (int i = 0; i < cfg.prelim_samples; ++i) clean.push_back(r0.normal(cfg.prelim_mean0, cfg.prelim_sd0));
    for (int i = 0; i < cfg.prelim_samples; ++i) halluc.push_back(r1.normal(cfg.prelim_mean1, cfg.prelim_sd1));
  } else {
    const auto path = require(cfg, artifacts::kMentions, "score");
    inputs.push_back(path);
    for (const auto& cm : read_mentions(path)) {
      for (const auto& sm : cm.mentions) {
        if (!sm.mention.gold_label) continue;
        (*sm.mention.gold_label ? halluc : clean).push_back(sm.score);
      }
    }
    if (clean.size() < 2 || halluc.size() < 2) {
      throw DomainError("prelim needs at least two labeled scores per group; found " + std::to_string(clean.size()) +
                        " clean and " + std::to_string(halluc.size()) + " hallucinated");
    }
  }

  const auto t = welch_ttest(clean, halluc);
  std::vector<LabeledScore> labeled;
  for (double s : clean) labeled.push_back({s, 0});
  for (double s : halluc) labeled.push_back({s, 1});
  const auto above = threshold_purity(labeled, cfg.thresholds.t0);
  const auto below = threshold_purity(labeled, cfg.thresholds.t1);

  auto group = [](const std::vector<double>& xs) {
    return Json{{"n", xs.size()}, {"mean", mean(xs)}, {"std", sample_stddev(xs)}};
  };
  Json stats;
  stats["_meta"] = stage_meta(cfg, "prelim", inputs);
  stats["source"] = cfg.prelim_source;
  stats["non_hallucinated"] = group(clean);
  stats["hallucinated"] = group(halluc);
  stats["t"] = t.t;
  stats["df"] = t.df;
  stats["p"] = t.p;
  stats["purity"] = Json{{"t0", cfg.thresholds.t0},
                         {"hallucinated_above_t0", nullable(above.hallucinated_above)},
                         {"n_above_t0", above.n_above},
                         {"t1", cfg.thresholds.t1},
                         {"non_hallucinated_below_t1", nullable(below.clean_below)},
                         {"n_below_t1", below.n_below}};
  io::write_json(artifact(cfg, artifacts::kPrelimStats), stats);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* xs : {&clean, &halluc}) {
    for (double x : *xs) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  auto write_hist = [&](std::string_view name, const std::vector<double>& xs, const char* label) {
    const auto csv = histogram_csv(histogram(xs, cfg.histogram_bins, lo, hi),
                                   {{"config_hash", cfg.config_hash}, {"group", label}, {"seed", std::to_string(cfg.seed)}});
    io::write_text(artifact(cfg, name), csv);
    return artifact(cfg, name);
  };
  const std::vector<fs::path> outputs = {artifact(cfg, artifacts::kPrelimStats),
                                         write_hist(artifacts::kPrelimHistClean, clean, "non_hallucinated"),
                                         write_hist(artifacts::kPrelimHistHallucinated, halluc, "hallucinated")};
  return finish_stage(cfg, "prelim", inputs, outputs, timer, Json{{"p", t.p}, {"t", t.t}});
}

void run_all(const RunConfig& config) {
  cmd_generate(config);
  cmd_score(config);
  cmd_curate(config);
  cmd_train(config);
  cmd_eval(config);
}

}  // namespace efuf
