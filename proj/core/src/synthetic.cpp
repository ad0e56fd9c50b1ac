#include "efuf/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "efuf/error.hpp"
#include "efuf/hash.hpp"
#include "efuf/io.hpp"
#include "efuf/rng.hpp"

namespace efuf {

std::set<std::string> Scene::objects() const {
  std::set<std::string> out;
  for (const auto& c : cells) {
    if (!c.empty()) out.insert(c);
  }
  return out;
}

void write_scene(const std::filesystem::path& path, const Scene& scene) {
  const nlohmann::json j{{"image_id", scene.image_id},
                         {"grid_rows", scene.grid_rows},
                         {"grid_cols", scene.grid_cols},
                         {"cells", scene.cells}};
  io::write_text(path, j.dump() + "\n");
}

Scene read_scene(const std::filesystem::path& path) {
  const auto j = io::read_json(path);
  try {
    Scene s;
    s.image_id = j.at("image_id").get<std::string>();
    s.grid_rows = j.at("grid_rows").get<int>();
    s.grid_cols = j.at("grid_cols").get<int>();
    s.cells = j.at("cells").get<std::vector<std::string>>();
    if (s.grid_rows < 1 || s.grid_cols < 1 ||
        s.cells.size() != static_cast<std::size_t>(s.grid_rows) * static_cast<std::size_t>(s.grid_cols)) {
      throw IoError(path.string() + ": scene grid does not match its cells");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed scene: " + e.what());
  }
}

namespace {

std::string location_phrase(int row, int col, int rows, int cols) {
  auto row_name = [&](int r) -> std::string {
    if (rows == 1) return "";
    if (r == 0) return "top";
    if (r == rows - 1) return "bottom";
    return "middle";
  };
  auto col_name = [&](int c) -> std::string {
    if (cols == 1) return "";
    if (c == 0) return "left";
    if (c == cols - 1) return "right";
    return "center";
  };
  const auto r = row_name(row);
  const auto c = col_name(col);
  if (r == "middle" && c == "center") return "in the middle";
  if (r.empty() && c.empty()) return "in the picture";
  if (r.empty()) return "on the " + c;
  if (c.empty() || c == "center") return "at the " + r;
  if (r == "middle") return "on the " + c;
  return "at the " + r + " " + c;
}

std::string article(std::string_view noun) {
  return std::string_view("aeiou").find(noun.front()) != std::string_view::npos ? "an" : "a";
}

std::string clause(Rng& rng, const std::string& category, const std::string& location) {
  const std::string np = article(category) + " " + category;
  switch (rng.below(3)) {
    case 0:
      return np + " " + location;
    case 1:
      return "there is " + np + " " + location;
    default:
      return "i see " + np + " " + location;
  }
}

std::string join_clauses(const std::vector<std::string>& clauses) {
  std::string out;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0) out += (i + 1 == clauses.size()) ? ", and " : ", ";
    out += clauses[i];
  }
  return out + ".";
}

// Categories pair up in list order: (0, 1), (2, 3), ...
std::string co_occurring(const std::vector<std::string>& categories, const std::string& category) {
  const auto it = std::find(categories.begin(), categories.end(), category);
  const auto k = static_cast<std::size_t>(it - categories.begin()) ^ 1U;
  return k < categories.size() ? categories[k] : std::string();
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& config) {
  if (config.images < 0 || config.grid < 1) throw ConfigError("synthetic corpus needs a positive grid");
  const int cells = config.grid * config.grid;
  if (config.min_objects < 1 || config.max_objects < config.min_objects || config.max_objects > cells ||
      static_cast<std::size_t>(config.max_objects) >= config.categories.size()) {
    throw ConfigError("synthetic corpus object counts are inconsistent with grid and categories");
  }
  Rng rng(config.seed, "synthetic.corpus");
  SyntheticCorpus corpus;
  for (int i = 0; i < config.images; ++i) {
    SyntheticImage img;
    char id[32];
    std::snprintf(id, sizeof(id), "img_%04d", i);
    img.scene.image_id = id;
    img.scene.grid_rows = config.grid;
    img.scene.grid_cols = config.grid;
    img.scene.cells.assign(static_cast<std::size_t>(cells), "");

    const int n_obj = config.min_objects + static_cast<int>(rng.below(
                                               static_cast<std::size_t>(config.max_objects - config.min_objects + 1)));
    auto cats = config.categories;
    rng.shuffle(cats);
    std::vector<std::size_t> slots(static_cast<std::size_t>(cells));
    for (std::size_t s = 0; s < slots.size(); ++s) slots[s] = s;
    rng.shuffle(slots);

    struct Placed {
      std::string category;
      std::size_t cell;
    };
    std::vector<Placed> present;
    for (int o = 0; o < n_obj; ++o) {
      img.scene.cells[slots[static_cast<std::size_t>(o)]] = cats[static_cast<std::size_t>(o)];
      present.push_back({cats[static_cast<std::size_t>(o)], slots[static_cast<std::size_t>(o)]});
    }
    auto loc = [&](std::size_t cell) {
      return location_phrase(static_cast<int>(cell) / config.grid, static_cast<int>(cell) % config.grid, config.grid,
                             config.grid);
    };

    // Reference: present objects in reading order with the plain template.
    auto ordered = present;
    std::sort(ordered.begin(), ordered.end(), [](const Placed& a, const Placed& b) { return a.cell < b.cell; });
    std::vector<std::string> ref_clauses;
    for (const auto& p : ordered) ref_clauses.push_back(article(p.category) + " " + p.category + " " + loc(p.cell));
    img.reference = join_clauses(ref_clauses);

    // Captioner output: shuffled clauses, possibly with one planted object.
    std::vector<std::string> clauses;
    auto order = present;
    rng.shuffle(order);
    for (const auto& p : order) clauses.push_back(clause(rng, p.category, loc(p.cell)));
    if (rng.uniform() < config.hallucination_rate) {
      std::string fake;
      if (rng.uniform() < config.co_occurrence) {
        std::vector<std::string> partners;
        for (const auto& p : present) {
          auto partner = co_occurring(config.categories, p.category);
          const bool absent = std::none_of(present.begin(), present.end(),
                                           [&](const Placed& q) { return q.category == partner; });
          if (!partner.empty() && absent) partners.push_back(std::move(partner));
        }
        if (!partners.empty()) fake = partners[rng.below(partners.size())];
      }
      if (fake.empty()) {
        fake = cats[static_cast<std::size_t>(n_obj) + rng.below(cats.size() - static_cast<std::size_t>(n_obj))];
      }
      const std::size_t where = rng.below(clauses.size() + 1);
      clauses.insert(clauses.begin() + static_cast<std::ptrdiff_t>(where),
                     clause(rng, fake, loc(rng.below(static_cast<std::size_t>(cells)))));
      img.planted.push_back(fake);
    }
    img.record = CaptionRecord{img.scene.image_id, ImageRef{img.scene.image_id, {}}, config.prompt,
                               join_clauses(clauses)};
    corpus.images.push_back(std::move(img));
  }
  return corpus;
}

void write_synthetic_corpus(const std::filesystem::path& dir, SyntheticCorpus& corpus) {
  std::filesystem::create_directories(dir / "images");
  std::vector<io::Json> captions, objects, references;
  for (auto& img : corpus.images) {
    const auto rel = std::filesystem::path("images") / (img.scene.image_id + ".json");
    write_scene(dir / rel, img.scene);
    img.record.image.path = dir / rel;
    captions.push_back({{"image_id", img.record.image_id},
                        {"image", rel.generic_string()},
                        {"prompt", img.record.prompt},
                        {"caption", img.record.caption}});
    const auto objs = img.scene.objects();
    objects.push_back({{"image_id", img.record.image_id},
                       {"objects", std::vector<std::string>(objs.begin(), objs.end())},
                       {"planted", img.planted}});
    references.push_back({{"image_id", img.record.image_id}, {"references", {img.reference}}});
  }
  io::write_jsonl(dir / "captions.jsonl", nullptr, captions);
  io::write_jsonl(dir / "objects.jsonl", nullptr, objects);
  io::write_jsonl(dir / "references.jsonl", nullptr, references);
}

std::vector<double> synthetic_image_feature(std::string_view image_id, int dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("feature dimension must be positive");
  Rng rng(Fnv1a().field(seed).field("image-feature").field(image_id).digest());
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<double> scene_image_feature(const Scene& scene, int dim, std::uint64_t seed, double identity_noise) {
  auto v = synthetic_image_feature(scene.image_id, dim, seed);
  for (auto& x : v) x *= identity_noise;
  for (std::size_t cell = 0; cell < scene.cells.size(); ++cell) {
    const auto& category = scene.cells[cell];
    if (category.empty()) continue;
    Rng what(Fnv1a().field(seed).field("feature.category").field(category).digest());
    Rng where(Fnv1a().field(seed).field("feature.placement").field(category).field(std::to_string(cell)).digest());
    for (auto& x : v) x += what.normal() + 0.5 * where.normal();
  }
  return v;
}

SceneEmbeddingBackend::SceneEmbeddingBackend(const Lexicon& lexicon, std::uint64_t seed)
    : SceneEmbeddingBackend(lexicon, seed, Params{}) {}

SceneEmbeddingBackend::SceneEmbeddingBackend(const Lexicon& lexicon, std::uint64_t seed, Params params)
    : lexicon_(&lexicon), seed_(seed), params_(params) {
  if (params_.dim == 0) throw ConfigError("embedding dimension must be positive");
  Rng rng(Fnv1a().field(seed_).field("scene.shared").digest());
  shared_ = random_unit_vector(rng, params_.dim);
}

std::string SceneEmbeddingBackend::id() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "scene-%llu-%zu-%g-%g-%g", static_cast<unsigned long long>(seed_), params_.dim,
                params_.shared, params_.image_noise, params_.window_noise);
  return buf;
}

std::vector<double> SceneEmbeddingBackend::concept_vector(std::string_view category) const {
  Rng rng(Fnv1a().field(seed_).field("scene.concept").field(category).digest());
  return random_unit_vector(rng, params_.dim);
}

namespace {

void normalize(std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (n2 == 0.0) throw BackendError("zero embedding");
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& x : v) x *= inv;
}

}  // namespace

std::vector<double> SceneEmbeddingBackend::embed_text(std::string_view phrase) const {
  if (phrase.empty()) throw BackendError("empty phrase");
  const auto canonical = lexicon_->canonical(phrase).value_or(to_lower(phrase));
  auto v = concept_vector(canonical);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += params_.shared * shared_[i];
  normalize(v);
  return v;
}

std::shared_ptr<const Scene> SceneEmbeddingBackend::scene(const ImageRef& image) const {
  if (image.path.empty()) throw IoError("image '" + image.id + "' has no scene file");
  std::lock_guard lock(mu_);
  auto it = scenes_.find(image.path);
  if (it != scenes_.end()) return it->second;
  auto s = std::make_shared<const Scene>(read_scene(image.path));
  scenes_.emplace(image.path, s);
  return s;
}

std::vector<double> SceneEmbeddingBackend::embed_image_region(const ImageRef& image, const WindowRect& region,
                                                              GridShape grid) const {
  const auto s = scene(image);
  if (grid.rows != s->grid_rows || grid.cols != s->grid_cols) {
    throw BackendError("window grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                       " does not match scene grid of '" + image.id + "'");
  }
  if (region.row0 < 0 || region.col0 < 0 || region.row1 > grid.rows || region.col1 > grid.cols ||
      region.row0 >= region.row1 || region.col0 >= region.col1) {
    throw BackendError("window outside the image grid");
  }
  std::vector<double> v(params_.dim, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = params_.shared * shared_[i];

  Rng img_rng(Fnv1a().field(seed_).field("scene.image-noise").field(image.id).digest());
  const auto img_noise = random_unit_vector(img_rng, params_.dim);
  Rng win_rng(Fnv1a()
                  .field(seed_)
                  .field("scene.window-noise")
                  .field(image.id)
                  .field(static_cast<std::uint64_t>(region.row0))
                  .field(static_cast<std::uint64_t>(region.col0))
                  .field(static_cast<std::uint64_t>(region.row1))
                  .field(static_cast<std::uint64_t>(region.col1))
                  .digest());
  const auto win_noise = random_unit_vector(win_rng, params_.dim);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] += params_.image_noise * img_noise[i] + params_.window_noise * win_noise[i];
  }

  const double dilution = 1.0 / std::sqrt(static_cast<double>(region.rows() * region.cols()));
  for (int r = region.row0; r < region.row1; ++r) {
    for (int c = region.col0; c < region.col1; ++c) {
      const auto& cat = s->cells[static_cast<std::size_t>(r * s->grid_cols + c)];
      if (cat.empty()) continue;
      const auto u = concept_vector(cat);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += dilution * u[i];
    }
  }
  normalize(v);
  return v;
}

}  // namespace efuf
