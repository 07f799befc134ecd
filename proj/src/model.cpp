#include "sfp/model.hpp"

#include <algorithm>
#include <cmath>
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

std::string layer_file(int layer, const char* role) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "layer%03d.%s.mat", layer, role);
  return buf;
}

void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                 const std::string& what) {
  check(m.rows() == rows && m.cols() == cols,
        what + ": expected " + std::to_string(rows) + "x" +
            std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
            std::to_string(m.cols()));
}

}  // namespace

void ModelWeights::validate() const {
  check(d_model > 0 && d > 0, "model " + model_id + ": dimensions must be positive");
  check(n_heads > 0 && n_kv_heads > 0,
        "model " + model_id + ": head counts must be positive");
  check(n_heads % n_kv_heads == 0,
        "model " + model_id + ": n_kv_heads must divide n_heads");
  check(d % n_heads == 0, "model " + model_id + ": n_heads must divide d");
  check(n_layers > 0, "model " + model_id + ": need at least one layer");
  check(static_cast<int>(layers.size()) == n_layers,
        "model " + model_id + ": layer count mismatch");
  const Eigen::Index kv = kv_cols();
  for (int i = 0; i < n_layers; ++i) {
    const auto& l = layers[static_cast<std::size_t>(i)];
    const std::string at = "model " + model_id + " layer " + std::to_string(i);
    check_shape(l.w_q, d_model, d, at + " w_q");
    check_shape(l.w_k, d_model, kv, at + " w_k");
    check_shape(l.w_v, d_model, kv, at + " w_v");
    check_shape(l.w_o, d, d_model, at + " w_o");
    check(all_finite(l.w_q) && all_finite(l.w_k) && all_finite(l.w_v) &&
              all_finite(l.w_o),
          at + ": non-finite weight");
  }
  if (vocab_size > 0) {
    check_shape(embedding, vocab_size, d_model, "model " + model_id + " embedding");
    check(all_finite(embedding), "model " + model_id + ": non-finite embedding");
  } else {
    check(embedding.size() == 0,
          "model " + model_id + ": embedding present but vocab_size is 0");
  }
}

void ToyModelConfig::validate() const {
  check(d_model > 0 && d > 0 && n_layers > 0,
        "toy config: dimensions must be positive");
  check(n_heads > 0 && n_kv_heads > 0, "toy config: head counts must be positive");
  check(n_heads % n_kv_heads == 0, "toy config: n_kv_heads must divide n_heads");
  check(d % n_heads == 0, "toy config: n_heads must divide d");
  check(vocab_size >= 0, "toy config: vocab_size must be nonnegative");
  check(init_scale > 0.0, "toy config: init_scale must be positive");
}

ModelWeights generate_toy_model(const ToyModelConfig& config,
                                std::uint64_t seed) {
  config.validate();
  ModelWeights m;
  m.d_model = config.d_model;
  m.d = config.d;
  m.n_heads = config.n_heads;
  m.n_kv_heads = config.n_kv_heads;
  m.n_layers = config.n_layers;
  m.vocab_size = config.vocab_size;
  m.model_id = "toy-dm" + std::to_string(config.d_model) + "-d" +
               std::to_string(config.d) + "-h" + std::to_string(config.n_heads) +
               "-kv" + std::to_string(config.n_kv_heads) + "-L" +
               std::to_string(config.n_layers) + "-s" + std::to_string(seed);

  CounterRng rng(seed);
  const int kv = m.kv_cols();
  m.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& l : m.layers) {
    l.w_q.resize(config.d_model, config.d);
    l.w_k.resize(config.d_model, kv);
    l.w_v.resize(config.d_model, kv);
    l.w_o.resize(config.d, config.d_model);
    rng.fill_gaussian(l.w_q, config.init_scale);
    rng.fill_gaussian(l.w_k, config.init_scale);
    rng.fill_gaussian(l.w_v, config.init_scale);
    rng.fill_gaussian(l.w_o, config.init_scale);
  }
  if (config.vocab_size > 0) {
    m.embedding.resize(config.vocab_size, config.d_model);
    rng.fill_gaussian(m.embedding, config.init_scale);
  }
  m.validate();
  return m;
}

ModelWeights derive_related_model(const ModelWeights& base,
                                  double perturbation_scale,
                                  std::uint64_t seed) {
  base.validate();
  check(perturbation_scale >= 0.0,
        "derive_related_model: perturbation_scale must be nonnegative");
  ModelWeights out = base;
  out.model_id = base.model_id + "+rel-p" + fmt_num(perturbation_scale) + "-s" +
                 std::to_string(seed);
  CounterRng rng(seed);
  auto perturb = [&](Matrix& w) {
    double rms = std::sqrt(w.squaredNorm() / static_cast<double>(w.size()));
    Matrix noise(w.rows(), w.cols());
    rng.fill_gaussian(noise);
    w += perturbation_scale * rms * noise;
  };
  for (auto& l : out.layers) {
    perturb(l.w_q);
    perturb(l.w_k);
    perturb(l.w_v);
    perturb(l.w_o);
  }
  return out;
}

ModelWeights broadcast_gqa(const ModelWeights& model) {
  model.validate();
  if (model.n_kv_heads == model.n_heads) return model;
  const int g = model.n_heads / model.n_kv_heads;
  const Eigen::Index kv = model.kv_cols();
  ModelWeights out = model;
  for (auto& l : out.layers) {
    Matrix k(model.d_model, model.d), v(model.d_model, model.d);
    for (int t = 0; t < g; ++t) {
      k.middleCols(static_cast<Eigen::Index>(t) * kv, kv) = l.w_k;
      v.middleCols(static_cast<Eigen::Index>(t) * kv, kv) = l.w_v;
    }
    l.w_k = std::move(k);
    l.w_v = std::move(v);
  }
  out.n_kv_heads = out.n_heads;
  out.validate();
  return out;
}

void save_model(const ModelWeights& model, const std::filesystem::path& dir) {
  model.validate();
  std::filesystem::create_directories(dir);

  Json manifest;
  manifest["format_version"] = 1;
  manifest["model_id"] = model.model_id;
  manifest["d_model"] = model.d_model;
  manifest["d"] = model.d;
  manifest["n_heads"] = model.n_heads;
  manifest["n_kv_heads"] = model.n_kv_heads;
  manifest["n_layers"] = model.n_layers;
  manifest["vocab_size"] = model.vocab_size;
  manifest["head_layout"] = "contiguous-blocks";

  Json names = Json::array();
  for (int i = 0; i < model.n_layers; ++i) {
    const auto& l = model.layers[static_cast<std::size_t>(i)];
    const char* roles[4] = {"q", "k", "v", "o"};
    const Matrix* mats[4] = {&l.w_q, &l.w_k, &l.w_v, &l.w_o};
    for (int r = 0; r < 4; ++r) {
      std::string name = layer_file(i, roles[r]);
      write_matrix_file(dir / name, *mats[r]);
      names.push_back(name);
    }
  }
  if (model.vocab_size > 0) {
    write_matrix_file(dir / "embedding.mat", model.embedding);
    names.push_back("embedding.mat");
  }
  manifest["matrices"] = names;
  write_json_file(dir / "manifest.json", manifest);
}

ModelWeights load_model(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  check(std::filesystem::exists(manifest_path),
        "load_model: missing manifest " + manifest_path.string());
  Json manifest = read_json_file(manifest_path);
  const std::string where = "load_model " + manifest_path.string();

  int version = json_field(manifest, "format_version", where).get<int>();
  check(version == 1,
        where + ": unsupported format_version " + std::to_string(version));
  std::string layout = json_field(manifest, "head_layout", where).get<std::string>();
  check(layout == "contiguous-blocks",
        where + ": unsupported head_layout \"" + layout + "\"");

  ModelWeights m;
  m.model_id = json_field(manifest, "model_id", where).get<std::string>();
  m.d_model = json_field(manifest, "d_model", where).get<int>();
  m.d = json_field(manifest, "d", where).get<int>();
  m.n_heads = json_field(manifest, "n_heads", where).get<int>();
  m.n_kv_heads = json_field(manifest, "n_kv_heads", where).get<int>();
  m.n_layers = json_field(manifest, "n_layers", where).get<int>();
  m.vocab_size = json_field(manifest, "vocab_size", where).get<int>();

  const Json& names = json_field(manifest, "matrices", where);
  check(names.is_array(), where + ": \"matrices\" must be an array");
  const int expected =
      4 * m.n_layers + (m.vocab_size > 0 ? 1 : 0);
  check(static_cast<int>(names.size()) == expected,
        where + ": expected " + std::to_string(expected) +
            " matrix entries, got " + std::to_string(names.size()));

  m.layers.resize(static_cast<std::size_t>(std::max(m.n_layers, 0)));
  std::size_t idx = 0;
  auto next_matrix = [&]() {
    std::string name = names[idx++].get<std::string>();
    return read_matrix_file(dir / name);
  };
  for (auto& l : m.layers) {
    l.w_q = next_matrix();
    l.w_k = next_matrix();
    l.w_v = next_matrix();
    l.w_o = next_matrix();
  }
  if (m.vocab_size > 0) m.embedding = next_matrix();

  m.validate();
  return m;
}

}  // namespace sfp
