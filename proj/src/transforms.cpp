#include "sfp/transforms.hpp"

#include <cmath>

#include <Eigen/QR>

#include "sfp/io.hpp"
#include "sfp/rng.hpp"

namespace sfp {

Matrix attention_forward(const Matrix& h_in, const AttentionWeights& layer) {
  check(h_in.rows() > 0 && h_in.cols() == layer.w_q.rows(),
        "attention_forward: input must be n x d_model");
  check(layer.w_k.cols() == layer.w_q.cols() &&
            layer.w_v.cols() == layer.w_q.cols(),
        "attention_forward: grouped K/V layout, broadcast the model first");
  const double inv_sqrt_d = 1.0 / std::sqrt(double(layer.w_q.cols()));

  Matrix q = h_in * layer.w_q;
  Matrix k = h_in * layer.w_k;
  Matrix scores = (q * k.transpose()) * inv_sqrt_d;

  // Row-wise softmax, max-subtracted.
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    double m = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - m).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  return scores * (h_in * layer.w_v) * layer.w_o;
}

namespace {

struct LinearFactor {
  Matrix c, c_inv, c_inv_t;
};

// C = Q1 D Q2 with Q1, Q2 sign-fixed orthogonal factors of Gaussian draws
// and D diagonal in [0.5, 2], so kappa(C) <= 4 and the inverses assemble
// from transposes and reciprocals.  Draw order: Q1 matrix, Q2 matrix, D.
LinearFactor make_invertible(int n, CounterRng& rng) {
  auto orthogonal = [&]() {
    Matrix g(n, n);
    rng.fill_gaussian(g);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
      if (r(j, j) < 0) q.col(j) = -q.col(j);
    return q;
  };
  Matrix q1 = orthogonal();
  Matrix q2 = orthogonal();
  Vector d(n), d_inv(n);
  for (int i = 0; i < n; ++i) {
    d(i) = 0.5 + 1.5 * rng.next_unit_co();
    d_inv(i) = 1.0 / d(i);
  }
  LinearFactor f;
  f.c = q1 * d.asDiagonal() * q2;
  f.c_inv = q2.transpose() * d_inv.asDiagonal() * q1.transpose();
  f.c_inv_t = q1 * d_inv.asDiagonal() * q2;
  return f;
}

// Layer i's factor seed; layers share factors unless per_layer is set.
std::uint64_t factor_seed(std::uint64_t base_seed, bool per_layer, int layer) {
  return CounterRng(base_seed).derive(per_layer ? std::uint64_t(layer) : 0);
}

std::vector<int> checked_permutation(const AttackRecord& rec, int d_model) {
  check(static_cast<int>(rec.permutation.size()) == d_model,
        "apply_attack: permutation length " +
            std::to_string(rec.permutation.size()) + " does not match d_model " +
            std::to_string(d_model));
  std::vector<char> seen(static_cast<std::size_t>(d_model), 0);
  for (int p : rec.permutation) {
    check(p >= 0 && p < d_model, "apply_attack: permutation index out of range");
    check(!seen[static_cast<std::size_t>(p)],
          "apply_attack: permutation index repeated");
    seen[static_cast<std::size_t>(p)] = 1;
  }
  return rec.permutation;
}

// new.row(i) = old.row(perm[i])
Matrix permute_rows(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

// new.col(i) = old.col(perm[i]); this is M P^T for the same P.
Matrix permute_cols(const Matrix& m, const std::vector<int>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.cols(); ++i)
    out.col(i) = m.col(perm[static_cast<std::size_t>(i)]);
  return out;
}

const char* kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::permutation: return "permutation";
    case AttackKind::linear_map: return "linear_map";
    case AttackKind::combined: return "combined";
  }
  return "?";
}

AttackKind kind_from_name(const std::string& s, const std::string& where) {
  if (s == "permutation") return AttackKind::permutation;
  if (s == "linear_map") return AttackKind::linear_map;
  if (s == "combined") return AttackKind::combined;
  fail(where + ": unknown attack kind \"" + s + "\"");
}

}  // namespace

ModelWeights apply_attack(const ModelWeights& model, const AttackRecord& rec) {
  model.validate();
  ModelWeights out =
      (rec.has_linear && model.n_kv_heads != model.n_heads)
          ? broadcast_gqa(model)
          : model;
  out.model_id = model.model_id + "+" + kind_name(rec.kind);

  if (!rec.permutation.empty()) {
    std::vector<int> perm = checked_permutation(rec, out.d_model);
    for (auto& l : out.layers) {
      l.w_q = permute_rows(l.w_q, perm);
      l.w_k = permute_rows(l.w_k, perm);
      l.w_v = permute_rows(l.w_v, perm);
      l.w_o = permute_cols(l.w_o, perm);
    }
    if (out.vocab_size > 0) out.embedding = permute_cols(out.embedding, perm);
  }

  if (rec.has_linear) {
    for (int i = 0; i < out.n_layers; ++i) {
      auto& l = out.layers[static_cast<std::size_t>(i)];
      CounterRng rng1(factor_seed(rec.c1_seed, rec.per_layer, i));
      CounterRng rng2(factor_seed(rec.c2_seed, rec.per_layer, i));
      LinearFactor c1 = make_invertible(out.d, rng1);
      LinearFactor c2 = make_invertible(out.d, rng2);
      l.w_q = l.w_q * c1.c;
      l.w_k = l.w_k * c1.c_inv_t;
      l.w_v = l.w_v * c2.c;
      l.w_o = c2.c_inv * l.w_o;
    }
  }
  return out;
}

ModelWeights invert_attack(const ModelWeights& model, const AttackRecord& rec) {
  model.validate();
  ModelWeights out = model;
  out.model_id = model.model_id + "+undo-" + kind_name(rec.kind);

  if (rec.has_linear) {
    check(model.n_kv_heads == model.n_heads,
          "invert_attack: attacked model should carry the full K/V layout");
    for (int i = 0; i < out.n_layers; ++i) {
      auto& l = out.layers[static_cast<std::size_t>(i)];
      CounterRng rng1(factor_seed(rec.c1_seed, rec.per_layer, i));
      CounterRng rng2(factor_seed(rec.c2_seed, rec.per_layer, i));
      LinearFactor c1 = make_invertible(out.d, rng1);
      LinearFactor c2 = make_invertible(out.d, rng2);
      l.w_q = l.w_q * c1.c_inv;
      l.w_k = l.w_k * c1.c.transpose();
      l.w_v = l.w_v * c2.c_inv;
      l.w_o = c2.c * l.w_o;
    }
  }

  if (!rec.permutation.empty()) {
    std::vector<int> perm = checked_permutation(rec, out.d_model);
    std::vector<int> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
      inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    for (auto& l : out.layers) {
      l.w_q = permute_rows(l.w_q, inverse);
      l.w_k = permute_rows(l.w_k, inverse);
      l.w_v = permute_rows(l.w_v, inverse);
      l.w_o = permute_cols(l.w_o, inverse);
    }
    if (out.vocab_size > 0)
      out.embedding = permute_cols(out.embedding, inverse);
  }
  return out;
}

std::pair<ModelWeights, AttackRecord> permutation_attack(
    const ModelWeights& model, std::uint64_t seed) {
  model.validate();
  AttackRecord rec;
  rec.kind = AttackKind::permutation;
  rec.permutation.resize(static_cast<std::size_t>(model.d_model));
  for (int i = 0; i < model.d_model; ++i)
    rec.permutation[static_cast<std::size_t>(i)] = i;
  CounterRng rng(CounterRng(seed).derive(2));
  rng.shuffle(rec.permutation);
  return {apply_attack(model, rec), rec};
}

std::pair<ModelWeights, AttackRecord> linear_mapping_attack(
    const ModelWeights& model, std::uint64_t seed, bool per_layer) {
  model.validate();
  AttackRecord rec;
  rec.kind = AttackKind::linear_map;
  rec.has_linear = true;
  rec.per_layer = per_layer;
  CounterRng master(seed);
  rec.c1_seed = master.derive(0);
  rec.c2_seed = master.derive(1);
  return {apply_attack(model, rec), rec};
}

std::pair<ModelWeights, AttackRecord> combined_attack(const ModelWeights& model,
                                                      std::uint64_t seed) {
  model.validate();
  AttackRecord rec;
  rec.kind = AttackKind::combined;
  rec.has_linear = true;
  rec.per_layer = false;
  CounterRng master(seed);
  rec.c1_seed = master.derive(0);
  rec.c2_seed = master.derive(1);
  rec.permutation.resize(static_cast<std::size_t>(model.d_model));
  for (int i = 0; i < model.d_model; ++i)
    rec.permutation[static_cast<std::size_t>(i)] = i;
  CounterRng rng(master.derive(2));
  rng.shuffle(rec.permutation);
  return {apply_attack(model, rec), rec};
}

void save_attack_record(const AttackRecord& rec,
                        const std::filesystem::path& path) {
  Json j;
  j["format_version"] = 1;
  j["kind"] = kind_name(rec.kind);
  j["permutation"] = rec.permutation;
  j["has_linear"] = rec.has_linear;
  j["per_layer"] = rec.per_layer;
  j["c1_seed"] = rec.c1_seed;
  j["c2_seed"] = rec.c2_seed;
  write_json_file(path, j);
}

AttackRecord load_attack_record(const std::filesystem::path& path) {
  Json j = read_json_file(path);
  const std::string where = "load_attack_record " + path.string();
  int version = json_field(j, "format_version", where).get<int>();
  check(version == 1,
        where + ": unsupported format_version " + std::to_string(version));
  AttackRecord rec;
  rec.kind =
      kind_from_name(json_field(j, "kind", where).get<std::string>(), where);
  rec.permutation = json_field(j, "permutation", where).get<std::vector<int>>();
  rec.has_linear = json_field(j, "has_linear", where).get<bool>();
  rec.per_layer = json_field(j, "per_layer", where).get<bool>();
  rec.c1_seed = json_field(j, "c1_seed", where).get<std::uint64_t>();
  rec.c2_seed = json_field(j, "c2_seed", where).get<std::uint64_t>();
  return rec;
}

}  // namespace sfp
