// Writes a synthetic scene corpus: images/<id>.json scene files plus
// captions.jsonl, objects.jsonl, and references.jsonl.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "efuf/error.hpp"
#include "efuf/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic caption corpus with planted hallucinations"};
  efuf::SyntheticCorpusConfig cfg;
  std::string out;
  app.add_option("--out", out, "corpus directory")->required();
  app.add_option("--images", cfg.images, "number of images")->check(CLI::NonNegativeNumber);
  app.add_option("--grid", cfg.grid, "scene grid side")->check(CLI::PositiveNumber);
  app.add_option("--min-objects", cfg.min_objects, "fewest objects per scene");
  app.add_option("--max-objects", cfg.max_objects, "most objects per scene");
  app.add_option("--hallucination-rate", cfg.hallucination_rate, "share of captions with a planted object")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--co-occurrence", cfg.co_occurrence, "chance a planted object is the partner of a present one")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--prompt", cfg.prompt, "instruction stored with each caption");
  app.add_option("--seed", cfg.seed, "corpus seed");
  CLI11_PARSE(app, argc, argv);

  try {
    auto corpus = efuf::make_synthetic_corpus(cfg);
    efuf::write_synthetic_corpus(out, corpus);
    std::size_t planted = 0;
    for (const auto& img : corpus.images) planted += img.planted.size();
    std::cout << "wrote " << corpus.images.size() << " images (" << planted << " planted objects) to " << out << '\n';
  } catch (const efuf::Error& err) {
    std::cerr << "efuf_make_corpus: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
