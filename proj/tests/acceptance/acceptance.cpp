// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "efuf/curation.hpp"
#include "efuf/error.hpp"
#include "efuf/extraction.hpp"
#include "efuf/io.hpp"
#include "efuf/metrics.hpp"
#include "efuf/model.hpp"
#include "efuf/pipeline.hpp"
#include "efuf/relevance.hpp"
#include "efuf/rng.hpp"
#include "efuf/stats.hpp"
#include "efuf/synthetic.hpp"
#include "efuf/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

/// Outcome of one criterion: pass flag plus a short human-readable summary.
struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      else detail.str("");
      pass = false;
      detail << what;
    }
  }

  /// Stream for the summary, separated from any failure text.
  std::ostringstream& info() {
    if (!detail.str().empty()) detail << "; ";
    return detail;
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ------------------------------------------------------------- criterion 1

void prelim_welch(Outcome& out, const fs::path& work) {
  efuf::RunConfig::Overrides o;
  o.out_dir = work / "prelim";
  auto cfg = efuf::RunConfig::load(fs::path(EFUF_SOURCE_DIR) / "configs" / "pipeline.conf", o);
  cfg.prelim_source = "gaussian";
  cfg.prelim_samples = 500;
  cfg.prelim_mean0 = 28.26;
  cfg.prelim_sd0 = 2.74;
  cfg.prelim_mean1 = 25.35;
  cfg.prelim_sd1 = 2.70;
  efuf::cmd_prelim(cfg);
  const auto stats = efuf::io::read_json(cfg.out_dir / efuf::artifacts::kPrelimStats);
  const double p = stats.at("p").get<double>(), t = stats.at("t").get<double>();
  const double m0 = stats.at("non_hallucinated").at("mean").get<double>();
  const double m1 = stats.at("hallucinated").at("mean").get<double>();
  const auto n0 = stats.at("non_hallucinated").at("n").get<int>(), n1 = stats.at("hallucinated").at("n").get<int>();
  out.require(n0 == 500 && n1 == 500, "group sizes " + std::to_string(n0) + " / " + std::to_string(n1));
  out.require(p < 1e-10, "p = " + fmt(p) + " not below 1e-10");
  out.require(std::fabs(m0 - 28.26) <= 0.3, "clean mean " + fmt(m0) + " off by more than 0.3");
  out.require(std::fabs(m1 - 25.35) <= 0.3, "hallucinated mean " + fmt(m1) + " off by more than 0.3");
  out.info() << "t = " << fmt(t) << ", p = " << fmt(p, 3) << ", means " << fmt(m0) << " / " << fmt(m1);
}

// ------------------------------------------------------------- criterion 2

void scoring_oracle(Outcome& out) {
  // Window enumeration against brute force on every grid up to 4x4.
  int grids = 0;
  for (int rows = 1; rows <= 4; ++rows) {
    for (int cols = 1; cols <= 4; ++cols) {
      for (int m = 1; m <= std::min(rows, cols); ++m) {
        efuf::WindowConfig wc;
        wc.grid_rows = rows;
        wc.grid_cols = cols;
        wc.min_window = m;
        const auto ws = efuf::generate_windows(wc);
        std::set<oracle::Rect> got;
        for (const auto& w : ws) got.insert({w.row0, w.col0, w.row1, w.col1});
        const auto ref = oracle::brute_windows(rows, cols, m);
        out.require(got == ref && ws.size() == ref.size() && efuf::count_windows(wc) == ref.size(),
                    "window set mismatch on " + std::to_string(rows) + "x" + std::to_string(cols) + " m=" +
                        std::to_string(m));
        ++grids;
      }
    }
  }

  // Scores of random (image, phrase, grid) pairs against exhaustive search.
  const efuf::StubEmbeddingBackend backend(17, 96);
  efuf::Rng rng(2024, "acceptance.scoring");
  const std::vector<std::string> phrases = {"dog", "red car", "a man riding a horse", "cup", "kite", "two sheep"};
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    efuf::WindowConfig wc;
    wc.grid_rows = 1 + static_cast<int>(rng.below(4));
    wc.grid_cols = 1 + static_cast<int>(rng.below(4));
    wc.min_window = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(std::min(wc.grid_rows, wc.grid_cols))));
    const efuf::ImageRef image{"img" + std::to_string(rng.below(1000)), {}};
    const auto& phrase = phrases[rng.below(phrases.size())];
    const double got = efuf::score_object(backend, image, phrase, wc).value;
    const double ref = oracle::exhaustive_score(backend, image, phrase, wc.grid_rows, wc.grid_cols, wc.min_window);
    worst = std::max(worst, std::fabs(got - ref));
  }
  out.require(worst <= 1e-9, "max score deviation " + fmt(worst, 3));
  out.info() << grids << " grids enumerated, 100 scores, max deviation " << fmt(worst, 3);
}

// ------------------------------------------------------------- criterion 3

std::vector<efuf::CaptionMentions> scored_bundled_corpus() {
  const auto corpus = efuf::load_corpus(fs::path(EFUF_SOURCE_DIR) / "data" / "synthetic");
  const efuf::SceneEmbeddingBackend backend(efuf::Lexicon::coco(), 0);
  efuf::LexiconExtractor extractor(efuf::Lexicon::coco());
  const efuf::WindowConfig wc;
  std::vector<efuf::CaptionMentions> out;
  for (const auto& e : corpus) {
    efuf::CaptionMentions cm{e.record, {}};
    for (const auto& m : efuf::extract_objects(extractor, e.record).mentions) {
      cm.mentions.push_back({m, efuf::score_object(backend, e.record.image, m.phrase, wc).value});
    }
    out.push_back(std::move(cm));
  }
  return out;
}

/// Checks every curated sample against its source caption and the thresholds.
void check_datasets(Outcome& out, const std::vector<efuf::CaptionMentions>& corpus, const efuf::Thresholds& t,
                    const std::string& label) {
  const auto sets = efuf::curate(corpus, t, 11);
  std::map<std::string, const efuf::CaptionRecord*> by_id;
  for (const auto& cm : corpus) by_id[cm.record.image_id] = &cm.record;

  auto object_prefix_ok = [&](const efuf::UnlearningSample& s) {
    const auto& rec = *by_id.at(s.image_id);
    if (s.context.rfind(rec.prompt, 0) != 0) return false;
    const auto before = s.context.substr(rec.prompt.size());
    return rec.caption.rfind(before + s.target, 0) == 0;
  };
  for (const auto& s : sets.positive) {
    out.require(s.provenance_score > t.t0, label + ": positive sample at or below T0");
    out.require(object_prefix_ok(s), label + ": positive sample is not a caption prefix split");
  }
  for (const auto& s : sets.negative) {
    out.require(s.provenance_score < t.t1, label + ": negative sample at or above T1");
    out.require(object_prefix_ok(s), label + ": negative sample is not a caption prefix split");
  }
  for (const auto& s : sets.sentence) {
    const auto& rec = *by_id.at(s.image_id);
    out.require(s.provenance_score > t.t2, label + ": sentence sample at or below T2");
    out.require(s.context == rec.prompt && s.target == rec.caption, label + ": sentence sample altered");
  }
  const auto ref = oracle::refilter(corpus, t.t0, t.t1, t.t2);
  out.require(sets.positive.size() == ref.pos && sets.negative.size() == ref.neg && sets.sentence.size() == ref.sent,
              label + ": sizes " + std::to_string(sets.positive.size()) + "/" + std::to_string(sets.negative.size()) +
                  "/" + std::to_string(sets.sentence.size()) + " vs refilter " + std::to_string(ref.pos) + "/" +
                  std::to_string(ref.neg) + "/" + std::to_string(ref.sent));
}

void curation(Outcome& out) {
  const efuf::Thresholds t{32.0, 23.0, 27.5};
  const auto scored = scored_bundled_corpus();
  check_datasets(out, scored, t, "scene scores");

  // Same captions with random scores, a quarter of them exactly on a threshold.
  auto stressed = scored;
  efuf::Rng rng(5, "acceptance.curation");
  const double edges[] = {t.t0, t.t1, t.t2};
  for (auto& cm : stressed) {
    for (auto& sm : cm.mentions) sm.score = rng.uniform() < 0.25 ? edges[rng.below(3)] : rng.uniform(10.0, 45.0);
  }
  check_datasets(out, stressed, t, "random scores");

  const auto sets = efuf::curate(scored, t, 11);
  out.info() << "bundled corpus gives d_pos " << sets.positive.size() << ", d_neg " << sets.negative.size()
             << ", d_sent " << sets.sentence.size() << "; both corpora match the refilter";
}

// ------------------------------------------------------------- criteria 4, 5

efuf::ModelConfig tiny_model(int vocab) {
  efuf::ModelConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 6;
  c.layers = 1;
  c.heads = 2;
  c.ffn_dim = 8;
  c.prefix_tokens = 2;
  c.image_dim = 3;
  c.max_positions = 16;
  return c;
}

std::vector<efuf::TrainingSample> random_samples(efuf::Rng& rng, int vocab, int count) {
  std::vector<efuf::TrainingSample> out;
  for (int i = 0; i < count; ++i) {
    efuf::TrainingSample s;
    s.image_id = "s" + std::to_string(i);
    for (int d = 0; d < 3; ++d) s.image.push_back(rng.normal());
    const int nc = 1 + static_cast<int>(rng.below(3)), nt = 1 + static_cast<int>(rng.below(3));
    for (int j = 0; j < nc; ++j) s.context.push_back(4 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 4))));
    for (int j = 0; j < nt; ++j) s.target.push_back(2 + static_cast<int>(rng.below(static_cast<std::size_t>(vocab - 2))));
    out.push_back(std::move(s));
  }
  return out;
}

/// Token-mean cross entropy recomputed from the plain-loop forward pass.
double naive_ce(const efuf::ToyMLLM& model, const efuf::TrainingSample& s) {
  std::vector<int> inputs{efuf::Tokenizer::kBos};
  inputs.insert(inputs.end(), s.context.begin(), s.context.end());
  inputs.insert(inputs.end(), s.target.begin(), s.target.end());
  inputs.pop_back();
  const auto dist = oracle::naive_forward(model, s.image, inputs);
  const std::size_t first = static_cast<std::size_t>(model.config().prefix_tokens) + s.context.size();
  double sum = 0.0;
  for (std::size_t j = 0; j < s.target.size(); ++j) sum -= std::log(dist[first + j][static_cast<std::size_t>(s.target[j])]);
  return sum / static_cast<double>(s.target.size());
}

double naive_mean(const efuf::ToyMLLM& model, const std::vector<const efuf::TrainingSample*>& batch) {
  double sum = 0.0;
  for (const auto* s : batch) sum += naive_ce(model, *s);
  return sum / static_cast<double>(batch.size());
}

void loss_identities(Outcome& out) {
  const int vocab = 12;
  efuf::Rng rng(31, "acceptance.losses");
  const efuf::ToyMLLM model(tiny_model(vocab), 4);
  const auto samples = random_samples(rng, vocab, 9);
  const efuf::LossWeights w{0.3, 0.2};

  efuf::Batches same{{&samples[0], &samples[1], &samples[2]}, {&samples[0], &samples[1], &samples[2]}, {}};
  const auto mirrored = efuf::efuf_losses(model, same, w);
  out.require(mirrored.l_neg == -mirrored.l_pos, "L_neg is not exactly -L_pos on a shared batch");

  efuf::Batches b{{&samples[0], &samples[1], &samples[2]}, {&samples[3], &samples[4]},
                  {&samples[5], &samples[6], &samples[7], &samples[8]}};
  const auto l = efuf::efuf_losses(model, b, w);
  const double ref_pos = naive_mean(model, b.pos), ref_neg = -naive_mean(model, b.neg),
               ref_sent = naive_mean(model, b.sent);
  const double ref_total = ref_pos + 0.3 * ref_neg + 0.2 * ref_sent;
  const double dev = std::max({std::fabs(l.l_pos - ref_pos), std::fabs(l.l_neg - ref_neg),
                               std::fabs(l.l_sent - ref_sent), std::fabs(l.l_total - ref_total),
                               std::fabs(l.l_total - (l.l_pos + 0.3 * l.l_neg + 0.2 * l.l_sent))});
  out.require(dev <= 1e-6, "L_total decomposition off by " + fmt(dev, 3));

  // A model whose output layer is zero predicts the uniform distribution.
  efuf::ToyMLLM uniform(tiny_model(vocab), 4);
  auto& head = uniform.parameters().blocks().back();
  for (auto& t : head.tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
  double worst = 0.0;
  for (const auto& s : samples) {
    worst = std::max(worst, std::fabs(uniform.token_ce_loss(s.image, s.context, s.target) - std::log(double(vocab))));
  }
  out.require(worst <= 1e-9, "uniform CE deviates from ln|V| by " + fmt(worst, 3));
  out.info() << "decomposition deviation " << fmt(dev, 3) << ", uniform CE deviation " << fmt(worst, 3);
}

void gradient_check(Outcome& out) {
  const int vocab = 10;
  efuf::Rng rng(77, "acceptance.gradcheck");
  efuf::ToyMLLM model(tiny_model(vocab), 8);
  const std::size_t n_params = model.parameters().size();
  out.require(n_params <= 1000, "model has " + std::to_string(n_params) + " parameters");
  const auto samples = random_samples(rng, vocab, 6);
  const efuf::Batches b{{&samples[0], &samples[1]}, {&samples[2], &samples[3]}, {&samples[4], &samples[5]}};
  const efuf::LossWeights w{0.3, 0.2};

  auto grad = model.parameters().zeros_like();
  auto add = [&](const std::vector<const efuf::TrainingSample*>& batch, double weight) {
    for (const auto* s : batch)
      model.accumulate_gradient(s->image, s->context, s->target, weight / static_cast<double>(batch.size()), grad);
  };
  add(b.pos, 1.0);
  add(b.neg, -w.lambda1);
  add(b.sent, w.lambda2);

  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t c = rng.below(n_params);
    double& theta = model.parameters().coordinate(c);
    const double saved = theta;
    theta = saved + h;
    const double up = efuf::efuf_losses(model, b, w).l_total;
    theta = saved - h;
    const double down = efuf::efuf_losses(model, b, w).l_total;
    theta = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grad.coordinate(c);
    const double denom = std::max(std::fabs(numeric), std::fabs(analytic));
    const double rel = denom == 0.0 ? 0.0 : std::fabs(numeric - analytic) / denom;
    worst = std::max(worst, rel);
  }
  out.require(worst <= 1e-4, "max relative error " + fmt(worst, 3));
  out.info() << n_params << " parameters, 50 coordinates, max relative error " << fmt(worst, 3);
}

// ------------------------------------------------------------- criterion 6

/// Unlearning settings used for the efficacy run.
constexpr const char* kEfficacyConfig =
    "seed = 13\n"
    "val_fraction = 0\n"
    "test_fraction = 0\n"
    "eval_split = train\n"
    "lambda1 = 0.3\n"
    "lambda2 = 0.2\n"
    "epochs = 1\n";

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

void unlearning_efficacy(Outcome& out, const fs::path& work, const std::string& tuning) {
  const auto dir = work / "efficacy";
  fs::remove_all(dir);
  efuf::SyntheticCorpusConfig sc;
  sc.images = 200;
  sc.seed = 13;
  auto corpus = efuf::make_synthetic_corpus(sc);
  efuf::write_synthetic_corpus(dir / "corpus", corpus);
  const auto base_conf = slurp(fs::path(EFUF_SOURCE_DIR) / "configs" / "pipeline.conf");
  write_text(dir / "run.conf",
             base_conf + "\n# efficacy overrides\ncorpus_dir = corpus\nout_dir = out\n" + kEfficacyConfig + tuning);
  const auto cfg = efuf::RunConfig::load(dir / "run.conf");
  efuf::run_all(cfg);

  const auto report = efuf::io::read_json(cfg.out_dir / efuf::artifacts::kEvalReport);
  const auto& base = report.at("models").at("base");
  const auto& tuned = report.at("models").at("efuf");
  auto number = [](const Json& j) { return j.is_number() ? j.get<double>() : std::nan(""); };
  const double neg0 = number(base.at("target_nll").at("d_neg")), neg1 = number(tuned.at("target_nll").at("d_neg"));
  const double pos0 = number(base.at("target_nll").at("d_pos")), pos1 = number(tuned.at("target_nll").at("d_pos"));
  const double chair0 = number(base.at("chair_i")), chair1 = number(tuned.at("chair_i"));
  out.require(neg1 - neg0 >= 0.1, "d_neg NLL rose by " + fmt(neg1 - neg0) + " (< 0.1)");
  out.require(pos1 - pos0 <= 0.01, "d_pos NLL rose by " + fmt(pos1 - pos0) + " (> 0.01)");
  out.require(chair1 < chair0, "CHAIR_i " + fmt(chair0) + " -> " + fmt(chair1) + " did not decrease");
  {
    out.info() << "d_neg NLL " << fmt(neg0) << " -> " << fmt(neg1) << ", d_pos NLL " << fmt(pos0) << " -> "
               << fmt(pos1) << ", CHAIR_i " << fmt(chair0) << " -> " << fmt(chair1);
  }
}

// ------------------------------------------------------------- criterion 7

void metric_oracles(Outcome& out) {
  efuf::Rng rng(9, "acceptance.chair");
  const auto categories = efuf::Lexicon::coco().categories();
  std::vector<efuf::AnnotatedResponse> rs;
  for (int i = 0; i < 100; ++i) {
    efuf::AnnotatedResponse r{"r" + std::to_string(i), "", {}};
    const int n = 1 + static_cast<int>(rng.below(5));
    for (int j = 0; j < n; ++j) r.objects.push_back({categories[rng.below(categories.size())], rng.uniform() < 0.3 ? 1 : 0});
    rs.push_back(std::move(r));
  }
  const auto c = efuf::chair(rs);
  const auto ref = oracle::recount_chair(rs);
  out.require(c.chair_i == ref.chair_i && c.chair_s == ref.chair_s, "CHAIR differs from recount");

  // Corpus BLEU on five sentences, reference values from NLTK 3.10.3.
  const std::vector<std::string> cands = {"the cat sat on the mat", "a dog runs in the park with a red ball",
                                          "there is a man riding a horse on the beach", "two birds sit on a wire",
                                          "a bowl of fruit on the kitchen table next to a cup"};
  const std::vector<std::vector<std::string>> refs = {
      {"the cat is sitting on the mat", "a cat sat on the mat"},
      {"a dog is running in the park with a ball"},
      {"a man rides a horse along the beach", "a person riding a brown horse on a sandy beach"},
      {"two small birds sitting on a power line", "birds on a wire"},
      {"a bowl of fruit sits on a table beside a coffee cup"}};
  const double expected[] = {0.7954545454545454, 0.6386903850265854, 0.3693848581454725};
  const int orders[] = {1, 2, 4};
  double bleu_dev = 0.0;
  for (int i = 0; i < 3; ++i) {
    bleu_dev = std::max(bleu_dev, std::fabs(efuf::corpus_bleu_text(cands, refs, orders[i]) - expected[i]));
  }
  out.require(bleu_dev <= 1e-6, "BLEU off by " + fmt(bleu_dev, 3));

  double welch_dev = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    efuf::Rng r(seed, "acceptance.welch");
    std::vector<double> a(10 + r.below(50)), b(10 + r.below(50));
    for (auto& x : a) x = r.normal(28.0, 2.5);
    for (auto& x : b) x = r.normal(27.0 - 0.2 * static_cast<double>(seed), 3.0);
    const auto got = efuf::welch_ttest(a, b);
    const auto want = oracle::gsl_welch(a, b);
    welch_dev = std::max({welch_dev, std::fabs(got.t - want.t), std::fabs(got.p - want.p)});
  }
  out.require(welch_dev <= 1e-8, "Welch off by " + fmt(welch_dev, 3));
  out.info() << "CHAIR exact, BLEU deviation " << fmt(bleu_dev, 3) << ", Welch deviation " << fmt(welch_dev, 3);
}

// ------------------------------------------------------------- criterion 8

void determinism(Outcome& out, const fs::path& work) {
  const auto conf = fs::path(EFUF_SOURCE_DIR) / "configs" / "pipeline.conf";
  std::vector<fs::path> dirs = {work / "determinism_a", work / "determinism_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    efuf::RunConfig::Overrides o;
    o.out_dir = d;
    efuf::run_all(efuf::RunConfig::load(conf, o));
  }
  int compared = 0;
  for (auto name : {efuf::artifacts::kCaptions, efuf::artifacts::kMentions, efuf::artifacts::kPositive,
                    efuf::artifacts::kNegative, efuf::artifacts::kSentence, efuf::artifacts::kSftLog,
                    efuf::artifacts::kTrainLog, efuf::artifacts::kEvalReport, efuf::artifacts::kEvalCaptions}) {
    const auto a = slurp(dirs[0] / name), b = slurp(dirs[1] / name);
    out.require(!a.empty() && a == b, std::string(name) + " differs between runs");
    ++compared;
  }
  out.info() << compared << " artifacts byte-identical across two runs";
}

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EFUF acceptance checks"};
  fs::path work = fs::temp_directory_path() / "efuf_acceptance";
  std::vector<int> only;
  std::string tuning;
  app.add_option("--work-dir", work, "Scratch directory for pipeline runs");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--efficacy-extra", tuning, "Extra config lines for criterion 6 (experiments)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<Criterion> criteria = {
      {1, "prelim Welch test", 5.0, [&](Outcome& o) { prelim_welch(o, work); }},
      {2, "relevance scoring oracle", 10.0, scoring_oracle},
      {3, "curation purity and sizes", 10.0, curation},
      {4, "loss identities", 5.0, loss_identities},
      {5, "gradient check", 30.0, gradient_check},
      {6, "unlearning efficacy", 300.0, [&](Outcome& o) { unlearning_efficacy(o, work, tuning); }},
      {7, "metric oracles", 10.0, metric_oracles},
      {8, "pipeline determinism", 600.0, [&](Outcome& o) { determinism(o, work); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.require(secs < c.budget_s, "took " + fmt(secs) + " s, budget " + fmt(c.budget_s) + " s");
    std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << " (" << c.name << "): "
              << out.detail.str() << " [" << std::fixed << std::setprecision(2) << secs << " s]"
              << std::defaultfloat << std::endl;
    failures += out.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
