// Command-line front end: efuf <generate|score|curate|train|eval|prelim>
//   --config <path> [--out <dir>] [--seed <int>]

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "efuf/error.hpp"
#include "efuf/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, Options& opts) {
  cmd->add_option("--config", opts.config, "flat key = value run configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out, "output directory (overrides out_dir)");
  cmd->add_option("--seed", opts.seed, "run seed (overrides seed)")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annotation-free fine-grained unlearning toolkit"};
  app.require_subcommand(1);
  Options opts;

  struct Entry {
    const char* name;
    const char* help;
    efuf::StageReport (*run)(const efuf::RunConfig&);
  };
  const Entry entries[] = {
      {"generate", "train the base captioner and caption the training images", efuf::cmd_generate},
      {"score", "extract object mentions and score their image relevance", efuf::cmd_score},
      {"curate", "threshold scores into positive, negative, and sentence datasets", efuf::cmd_curate},
      {"train", "fine-tune the base captioner on the curated datasets", efuf::cmd_train},
      {"eval", "compare base and fine-tuned captioners", efuf::cmd_eval},
      {"prelim", "relevance-score statistics of hallucinated vs. real objects", efuf::cmd_prelim},
  };
  for (const auto& e : entries) add_common(app.add_subcommand(e.name, e.help), opts);

  CLI11_PARSE(app, argc, argv);

  try {
    efuf::RunConfig::Overrides overrides;
    if (!opts.out.empty()) overrides.out_dir = opts.out;
    if (opts.seed >= 0) overrides.seed = static_cast<std::uint64_t>(opts.seed);
    const auto config = efuf::RunConfig::load(opts.config, overrides);
    for (const auto& e : entries) {
      if (app.got_subcommand(e.name)) {
        const auto report = e.run(config);
        std::cout << report.dump(2) << '\n';
      }
    }
  } catch (const efuf::Error& err) {
    std::cerr << "efuf: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
