#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "efuf/config.hpp"
#include "efuf/curation.hpp"
#include "efuf/extraction.hpp"
#include "efuf/model.hpp"
#include "efuf/relevance.hpp"
#include "efuf/trainer.hpp"

namespace efuf {

/// Every setting of a pipeline run, read from a flat key-value file.
/// Relative paths in the file resolve against the file's directory.
struct RunConfig {
  KeyValueConfig raw;
  std::string config_hash;  // excludes the output directory
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;

  // scoring
  WindowConfig window;
  std::string backend = "scene";  // scene | stub
  std::size_t embedding_dim = 256;
  std::string extractor = "lexicon";  // lexicon | remote
  RemoteExtractorConfig remote;

  // curation and unlearning
  Thresholds thresholds;
  LossWeights weights;
  TrainConfig efuf;
  std::string train_mode = "efuf";  // efuf | sft
  std::vector<std::string> trainable = {"image_projector"};

  // base captioner
  ModelConfig model;
  TrainConfig sft;
  std::string generator = "model";  // model | corpus
  std::string image_features = "scene";  // scene | random
  double feature_noise = 0.2;
  int max_new_tokens = 48;

  // splits and evaluation
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::string eval_split = "train";  // train | val | test

  // preliminary experiment
  std::string prelim_source = "gaussian";  // gaussian | scores
  int prelim_samples = 500;
  double prelim_mean0 = 28.26;
  double prelim_sd0 = 2.74;
  double prelim_mean1 = 25.35;
  double prelim_sd1 = 2.70;
  int histogram_bins = 20;

  struct Overrides {
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::uint64_t> seed;
  };

  /// ConfigError on unknown keys, malformed values, or a missing corpus.
  static RunConfig from_config(const KeyValueConfig& config, const std::filesystem::path& base_dir,
                               const Overrides& overrides = {});
  static RunConfig load(const std::filesystem::path& path, const Overrides& overrides = {});
};

struct CorpusEntry {
  CaptionRecord record;
  std::set<std::string> objects;  // canonical ground truth (may be empty)
  bool has_objects = false;
  std::vector<std::string> references;
};

/// Reads `captions.jsonl` plus the optional `objects.jsonl` and
/// `references.jsonl` of a corpus directory.
std::vector<CorpusEntry> load_corpus(const std::filesystem::path& dir);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Seeded random split; DomainError if the parts are not disjoint.
Split split_ids(std::vector<std::string> ids, double val_fraction, double test_fraction, std::uint64_t seed);
void check_disjoint(const Split& split);

/// Image feature used by the toy captioner for a corpus image id.
ImageFeatureFn feature_function(const RunConfig& config);

/// Result of one subcommand: its run-metadata record.
using StageReport = nlohmann::json;

StageReport cmd_generate(const RunConfig& config);
StageReport cmd_score(const RunConfig& config);
StageReport cmd_curate(const RunConfig& config);
StageReport cmd_train(const RunConfig& config);
StageReport cmd_eval(const RunConfig& config);
StageReport cmd_prelim(const RunConfig& config);

/// Runs generate, score, curate, train, eval in order.
void run_all(const RunConfig& config);

/// Artifact names inside the output directory.
namespace artifacts {
inline constexpr std::string_view kSplits = "splits.json";
inline constexpr std::string_view kBaseModel = "model_base.ckpt";
inline constexpr std::string_view kSftLog = "sft_log.jsonl";
inline constexpr std::string_view kCaptions = "captions.jsonl";
inline constexpr std::string_view kGenerateErrors = "generate_errors.jsonl";
inline constexpr std::string_view kMentions = "mentions.jsonl";
inline constexpr std::string_view kScoreCache = "score_cache.jsonl";
inline constexpr std::string_view kPositive = "d_pos.jsonl";
inline constexpr std::string_view kNegative = "d_neg.jsonl";
inline constexpr std::string_view kSentence = "d_sent.jsonl";
inline constexpr std::string_view kEfufModel = "model_efuf.ckpt";
inline constexpr std::string_view kTrainLog = "train_log.jsonl";
inline constexpr std::string_view kEvalReport = "eval_report.json";
inline constexpr std::string_view kEvalCaptions = "eval_captions.jsonl";
inline constexpr std::string_view kPrelimStats = "prelim_stats.json";
inline constexpr std::string_view kPrelimHistClean = "prelim_hist_clean.csv";
inline constexpr std::string_view kPrelimHistHallucinated = "prelim_hist_hallucinated.csv";
}  // namespace artifacts

/// Mentions file contents back in curation form.
std::vector<CaptionMentions> read_mentions(const std::filesystem::path& path);
std::vector<UnlearningSample> read_dataset(const std::filesystem::path& path);

}  // namespace efuf
