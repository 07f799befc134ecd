#include "sfp/augment.hpp"

#include <cstdio>

#include "sfp/io.hpp"
#include "sfp/rng.hpp"

namespace sfp {

namespace {

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

Matrix drop_rows(const Matrix& m, const std::vector<int>& gone) {
  std::vector<char> dead(static_cast<std::size_t>(m.rows()), 0);
  for (int i : gone) dead[static_cast<std::size_t>(i)] = 1;
  Matrix out(m.rows() - static_cast<Eigen::Index>(gone.size()), m.cols());
  Eigen::Index w = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    if (!dead[static_cast<std::size_t>(r)]) out.row(w++) = m.row(r);
  return out;
}

Matrix drop_cols(const Matrix& m, const std::vector<int>& gone) {
  std::vector<char> dead(static_cast<std::size_t>(m.cols()), 0);
  for (int i : gone) dead[static_cast<std::size_t>(i)] = 1;
  Matrix out(m.rows(), m.cols() - static_cast<Eigen::Index>(gone.size()));
  Eigen::Index w = 0;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    if (!dead[static_cast<std::size_t>(c)]) out.col(w++) = m.col(c);
  return out;
}

}  // namespace

ModelWeights gaussian_noise(const ModelWeights& model, double alpha, int n_f,
                            std::uint64_t seed) {
  model.validate();
  check(alpha >= 0.0, "gaussian_noise: alpha must be nonnegative");
  check(n_f >= 1 && n_f <= model.n_layers,
        "gaussian_noise: n_f out of range");
  if (alpha == 0.0) return model;
  ModelWeights out = model;
  out.model_id =
      model.model_id + "+noise-a" + fmt_num(alpha) + "-s" + std::to_string(seed);
  CounterRng rng(seed);
  for (int i = 0; i < n_f; ++i) {
    auto& l = out.layers[static_cast<std::size_t>(i)];
    for (Matrix* w : {&l.w_q, &l.w_k, &l.w_v, &l.w_o}) {
      Matrix g(w->rows(), w->cols());
      rng.fill_gaussian(g);
      *w += alpha * g;
    }
  }
  return out;
}

ModelWeights delete_rows(const ModelWeights& model, int n_r,
                         std::uint64_t seed) {
  model.validate();
  check(n_r >= 0 && n_r < model.d_model,
        "delete_rows: n_r must be in [0, d_model)");
  if (n_r == 0) return model;
  ModelWeights out = model;
  out.model_id =
      model.model_id + "+delrow-n" + std::to_string(n_r) + "-s" +
      std::to_string(seed);
  CounterRng rng(seed);
  for (auto& l : out.layers) {
    std::vector<int> gone = rng.sample_indices(model.d_model, n_r);
    l.w_q = drop_rows(l.w_q, gone);
    l.w_k = drop_rows(l.w_k, gone);
    l.w_v = drop_rows(l.w_v, gone);
    l.w_o = drop_cols(l.w_o, gone);
  }
  out.d_model -= n_r;
  // Per-layer index sets desynchronize the embedding's column space.
  out.embedding.resize(0, 0);
  out.vocab_size = 0;
  out.validate();
  return out;
}

ModelWeights delete_cols(const ModelWeights& model, int n_c,
                         std::uint64_t seed) {
  model.validate();
  check(n_c >= 0 && n_c < model.d, "delete_cols: n_c must be in [0, d)");
  if (n_c == 0) return model;
  ModelWeights out = broadcast_gqa(model);
  out.model_id =
      model.model_id + "+delcol-n" + std::to_string(n_c) + "-s" +
      std::to_string(seed);
  CounterRng rng(seed);
  for (auto& l : out.layers) {
    std::vector<int> gone = rng.sample_indices(model.d, n_c);
    l.w_q = drop_cols(l.w_q, gone);
    l.w_k = drop_cols(l.w_k, gone);
    l.w_v = drop_cols(l.w_v, gone);
    l.w_o = drop_rows(l.w_o, gone);
  }
  out.d -= n_c;
  // Whatever head partition existed is gone.
  out.n_heads = 1;
  out.n_kv_heads = 1;
  out.validate();
  return out;
}

ModelWeights random_mask(const ModelWeights& model, double rate, int n_f,
                         std::uint64_t seed) {
  model.validate();
  check(rate >= 0.0 && rate <= 1.0, "random_mask: rate must be in [0, 1]");
  check(n_f >= 1 && n_f <= model.n_layers, "random_mask: n_f out of range");
  if (rate == 0.0) return model;
  ModelWeights out = model;
  out.model_id =
      model.model_id + "+mask-r" + fmt_num(rate) + "-s" + std::to_string(seed);
  CounterRng rng(seed);
  auto field = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix f(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) f(r, c) = rng.next_unit_co();
    return f;
  };
  for (int i = 0; i < n_f; ++i) {
    auto& l = out.layers[static_cast<std::size_t>(i)];
    for (Matrix* w : {&l.w_q, &l.w_k, &l.w_v}) {
      Matrix f = field(w->rows(), w->cols());
      for (Eigen::Index r = 0; r < w->rows(); ++r)
        for (Eigen::Index c = 0; c < w->cols(); ++c)
          if (f(r, c) < rate) (*w)(r, c) = 0.0;
    }
    // The O field is drawn in the same orientation as the others and applied
    // transposed.
    Matrix f = field(l.w_o.cols(), l.w_o.rows());
    for (Eigen::Index r = 0; r < l.w_o.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w_o.cols(); ++c)
        if (f(c, r) < rate) l.w_o(r, c) = 0.0;
  }
  return out;
}

void AugmentPlan::validate(const ModelWeights& model) const {
  for (double a : noise_alphas)
    check(a >= 0.0, "augment plan: noise alpha must be nonnegative");
  for (int n : row_deletions)
    check(n >= 0 && n < model.d_model,
          "augment plan: row deletion count must be in [0, d_model)");
  for (int n : col_deletions)
    check(n >= 0 && n < model.d,
          "augment plan: column deletion count must be in [0, d)");
  for (double r : mask_rates)
    check(r >= 0.0 && r <= 1.0, "augment plan: mask rate must be in [0, 1]");
}

int AugmentPlan::cells() const {
  return static_cast<int>(noise_alphas.size() + row_deletions.size() +
                          col_deletions.size() + mask_rates.size());
}

TrainingSet build_training_set(const ModelWeights& target,
                               const std::vector<ModelWeights>& related,
                               const std::vector<ModelWeights>& unrelated,
                               const AugmentPlan& plan, int n_f, int h) {
  plan.validate(target);
  TrainingSet out;
  CounterRng master(plan.seed);

  struct Base {
    const ModelWeights* model;
    int label;
  };
  std::vector<Base> bases;
  bases.push_back({&target, 1});
  for (const auto& m : related) bases.push_back({&m, 1});
  for (const auto& m : unrelated) bases.push_back({&m, 0});

  // Cell seed: stream output ((base*4 + type)*256 + param) of plan.seed.
  auto cell_seed = [&](int base, int type, int param) {
    return master.derive(
        (static_cast<std::uint64_t>(base) * 4 + std::uint64_t(type)) * 256 +
        std::uint64_t(param));
  };

  for (std::size_t b = 0; b < bases.size(); ++b) {
    const ModelWeights& base = *bases[b].model;
    const int label = bases[b].label;

    LabeledFingerprint item;
    item.fp = extract_fingerprint(base, n_f, h);
    item.label = label;
    item.provenance = "base:" + base.model_id;
    out.items.push_back(std::move(item));

    auto add_cell = [&](const ModelWeights& aug) {
      LabeledFingerprint cell;
      try {
        cell.fp = extract_fingerprint(aug, n_f, h);
      } catch (const Error& e) {
        out.warnings.push_back("skipped " + aug.model_id + ": " + e.what());
        return;
      }
      cell.label = label;
      cell.provenance = aug.model_id;
      out.items.push_back(std::move(cell));
    };

    int bi = static_cast<int>(b);
    for (std::size_t p = 0; p < plan.noise_alphas.size(); ++p)
      add_cell(gaussian_noise(base, plan.noise_alphas[p], n_f,
                              cell_seed(bi, 0, static_cast<int>(p))));
    for (std::size_t p = 0; p < plan.row_deletions.size(); ++p)
      add_cell(delete_rows(base, plan.row_deletions[p],
                           cell_seed(bi, 1, static_cast<int>(p))));
    for (std::size_t p = 0; p < plan.col_deletions.size(); ++p)
      add_cell(delete_cols(base, plan.col_deletions[p],
                           cell_seed(bi, 2, static_cast<int>(p))));
    for (std::size_t p = 0; p < plan.mask_rates.size(); ++p)
      add_cell(random_mask(base, plan.mask_rates[p], n_f,
                           cell_seed(bi, 3, static_cast<int>(p))));
  }
  return out;
}

void save_corpus(const TrainingSet& corpus, const std::filesystem::path& dir) {
  check(!corpus.items.empty(), "save_corpus: empty corpus");
  std::filesystem::create_directories(dir);
  Json index;
  index["format_version"] = 1;
  index["count"] = corpus.items.size();
  Json entries = Json::array();
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "item%04zu.fp", i);
    save_fingerprint(corpus.items[i].fp, dir / name);
    Json e;
    e["file"] = name;
    e["label"] = corpus.items[i].label;
    e["provenance"] = corpus.items[i].provenance;
    entries.push_back(e);
  }
  index["items"] = entries;
  index["warnings"] = corpus.warnings;
  write_json_file(dir / "index.json", index);
}

TrainingSet load_corpus(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  check(std::filesystem::exists(index_path),
        "load_corpus: missing index " + index_path.string());
  Json index = read_json_file(index_path);
  const std::string where = "load_corpus " + index_path.string();
  int version = json_field(index, "format_version", where).get<int>();
  check(version == 1,
        where + ": unsupported format_version " + std::to_string(version));
  TrainingSet out;
  for (const auto& e : json_field(index, "items", where)) {
    LabeledFingerprint item;
    item.fp = load_fingerprint(dir / e.at("file").get<std::string>());
    item.label = e.at("label").get<int>();
    check(item.label == 0 || item.label == 1,
          where + ": label must be 0 or 1");
    item.provenance = e.at("provenance").get<std::string>();
    out.items.push_back(std::move(item));
  }
  if (index.contains("warnings"))
    out.warnings = index["warnings"].get<std::vector<std::string>>();
  check(!out.items.empty(), where + ": empty corpus");
  return out;
}

}  // namespace sfp
