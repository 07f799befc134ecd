#include "sfp/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "sfp/rng.hpp"
#include "sfp/transforms.hpp"

namespace sfp {

double attack_loss(const Fingerprint& f_m, const Fingerprint& f_t,
                   double epsilon) {
  check(epsilon > 0.0, "attack_loss: epsilon must be positive");
  return 1.0 / (fingerprint_distance(f_m, f_t) + epsilon);
}

namespace {

LayerGrads zero_grads(const AttentionWeights& l) {
  LayerGrads g;
  g.w_q = Matrix::Zero(l.w_q.rows(), l.w_q.cols());
  g.w_k = Matrix::Zero(l.w_k.rows(), l.w_k.cols());
  g.w_v = Matrix::Zero(l.w_v.rows(), l.w_v.cols());
  g.w_o = Matrix::Zero(l.w_o.rows(), l.w_o.cols());
  return g;
}

// dL/d(raw top-h values) for a row stored as s/||s||: the Jacobian of the
// normalization is (I - r r^T)/||s||.
Eigen::RowVectorXd through_normalization(const Eigen::RowVectorXd& upstream,
                                         const Eigen::RowVectorXd& raw,
                                         const std::string& at) {
  double nn = raw.norm();
  check(nn > 0.0, at + ": cannot differentiate an all-zero spectrum row");
  Eigen::RowVectorXd unit = raw / nn;
  return (upstream - (upstream.dot(unit)) * unit) / nn;
}

struct SigmaDecomp {
  Matrix u, v;  // thin factors
  Vector s;     // descending
};

SigmaDecomp sigma_decomp(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.matrixV(), svd.singularValues()};
}

void check_sigma_gaps(const Vector& s, int h, double tol,
                      const std::string& at) {
  for (int j = 0; j < h && j + 1 < s.size(); ++j)
    check(s(j) - s(j + 1) >= tol,
          at + ": singular values " + std::to_string(j) + " and " +
              std::to_string(j + 1) + " are degenerate at gap " +
              std::to_string(s(j) - s(j + 1)));
}

// Gradient matrix of sum_j coeff_j * sigma_j: U_h diag(coeff) V_h^T.
Matrix sigma_gradient(const SigmaDecomp& dec, const Eigen::RowVectorXd& coeff) {
  const int h = static_cast<int>(coeff.size());
  return dec.u.leftCols(h) * coeff.transpose().asDiagonal() *
         dec.v.leftCols(h).transpose();
}

struct LambdaDecomp {
  Eigen::VectorXcd values;   // solver order
  Eigen::MatrixXcd vectors;  // columns
  Eigen::MatrixXcd inverse;  // of vectors; rows are left eigenvectors
  std::vector<int> order;    // indices by descending magnitude
};

LambdaDecomp lambda_decomp(const Matrix& m, const std::string& at) {
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/true);
  check(solver.info() == Eigen::Success,
        at + ": eigenvalue iteration did not converge");
  LambdaDecomp dec;
  dec.values = solver.eigenvalues();
  dec.vectors = solver.eigenvectors();

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(dec.vectors);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  check(smin >= 1e-12 * smax, at + ": defective eigenbasis");
  dec.inverse = dec.vectors.partialPivLu().solve(
      Eigen::MatrixXcd::Identity(m.rows(), m.cols()));

  dec.order.resize(static_cast<std::size_t>(m.rows()));
  for (int i = 0; i < m.rows(); ++i) dec.order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(dec.order.begin(), dec.order.end(), [&](int a, int b) {
    double ma = std::abs(dec.values(a)), mb = std::abs(dec.values(b));
    if (ma != mb) return ma > mb;
    return dec.values(a).imag() > dec.values(b).imag();
  });
  return dec;
}

// A conjugate pair shares one magnitude and moves together under real
// perturbations, so it is not degenerate; any other near-tie in a slot the
// fingerprint reads is.
void check_lambda_gaps(const LambdaDecomp& dec, int h, double tol,
                       const std::string& at) {
  const int n = static_cast<int>(dec.order.size());
  for (int j = 0; j < h && j + 1 < n; ++j) {
    std::complex<double> a = dec.values(dec.order[static_cast<std::size_t>(j)]);
    std::complex<double> b =
        dec.values(dec.order[static_cast<std::size_t>(j) + 1]);
    if (std::abs(a) - std::abs(b) >= tol) continue;
    bool conjugate_pair =
        a.imag() != 0.0 &&
        std::abs(b - std::conj(a)) <= 1e-9 * (1.0 + std::abs(a));
    check(conjugate_pair,
          at + ": eigenvalue magnitudes " + std::to_string(j) + " and " +
              std::to_string(j + 1) + " are degenerate");
  }
  for (int j = 0; j < std::min(h, n); ++j)
    check(std::abs(dec.values(dec.order[static_cast<std::size_t>(j)])) > 1e-14,
          at + ": eigenvalue magnitude too small to differentiate");
}

// Gradient matrix of sum_j coeff_j * |lambda_(j)|, slots in sorted order:
// each slot contributes Re(conj(lambda) w v^T)/|lambda| with w the matching
// row of V^-1.
Matrix lambda_gradient(const LambdaDecomp& dec,
                       const Eigen::RowVectorXd& coeff) {
  const Eigen::Index n = dec.vectors.rows();
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(n, n);
  for (int j = 0; j < coeff.size(); ++j) {
    const int idx = dec.order[static_cast<std::size_t>(j)];
    const std::complex<double> lam = dec.values(idx);
    const std::complex<double> w = coeff(j) / std::abs(lam);
    acc += (w * std::conj(lam)) *
           (dec.inverse.row(idx).transpose() * dec.vectors.col(idx).transpose());
  }
  return acc.real();
}

std::vector<LayerGrads> fingerprint_gradient_fd(const ModelWeights& model,
                                                const Fingerprint& f_t,
                                                const SpectralGradConfig& cfg,
                                                const Fingerprint& f_m) {
  const int n_f = f_t.n_f;
  const int h = f_t.top_k;
  const double delta = cfg.fd_step;
  check(delta > 0.0, "fingerprint_gradient: fd_step must be positive");

  std::vector<LayerGrads> grads;
  for (int i = 0; i < n_f; ++i) {
    const AttentionWeights& base = model.layers[static_cast<std::size_t>(i)];
    LayerGrads g = zero_grads(base);

    // Only layer i's four rows move, so track the constant remainder of the
    // squared distance once.
    double rest_sq = 0.0;
    for (int b = 0; b < 4; ++b)
      for (int l = 0; l < n_f; ++l) {
        if (l == i) continue;
        Eigen::Index r = static_cast<Eigen::Index>(b) * n_f + l;
        rest_sq += (f_m.data.row(r) - f_t.data.row(r)).squaredNorm();
      }

    auto loss_of = [&](const AttentionWeights& layer) {
      Matrix block = layer_fingerprint(layer, h, /*pad=*/false, nullptr);
      double sq = rest_sq;
      for (int b = 0; b < 4; ++b) {
        Eigen::Index r = static_cast<Eigen::Index>(b) * n_f + i;
        sq += (block.row(b) - f_t.data.row(r)).squaredNorm();
      }
      return 1.0 / (std::sqrt(sq) + cfg.epsilon);
    };

    Matrix AttentionWeights::* members[4] = {
        &AttentionWeights::w_q, &AttentionWeights::w_k,
        &AttentionWeights::w_v, &AttentionWeights::w_o};
    Matrix LayerGrads::* gmembers[4] = {&LayerGrads::w_q, &LayerGrads::w_k,
                                        &LayerGrads::w_v, &LayerGrads::w_o};
    for (int m = 0; m < 4; ++m) {
      const Matrix& w = base.*(members[m]);
      Matrix& gw = g.*(gmembers[m]);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          AttentionWeights probe = base;
          (probe.*(members[m]))(r, c) = w(r, c) + delta;
          double up = loss_of(probe);
          (probe.*(members[m]))(r, c) = w(r, c) - delta;
          double down = loss_of(probe);
          gw(r, c) = (up - down) / (2.0 * delta);
        }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace

std::vector<LayerGrads> fingerprint_gradient(const ModelWeights& model,
                                             const Fingerprint& f_t,
                                             const SpectralGradConfig& cfg) {
  model.validate();
  check(model.n_kv_heads == model.n_heads,
        "fingerprint_gradient: broadcast the model to the full layout first");
  const int n_f = f_t.n_f;
  const int h = f_t.top_k;
  check(n_f >= 1 && n_f <= model.n_layers,
        "fingerprint_gradient: target n_f outside the model's depth");

  Fingerprint f_m = extract_fingerprint(model, n_f, h);
  const double dist = fingerprint_distance(f_m, f_t);

  if (dist == 0.0) {
    // Exactly on the target: the distance has a kink; defined as zero.
    std::vector<LayerGrads> grads;
    for (int i = 0; i < n_f; ++i)
      grads.push_back(zero_grads(model.layers[static_cast<std::size_t>(i)]));
    return grads;
  }

  if (cfg.finite_difference)
    return fingerprint_gradient_fd(model, f_t, cfg, f_m);

  // attack_loss = 1/(dist + eps): dL/dF = -(F_m - F_t) / ((dist+eps)^2 dist).
  const double outer = -1.0 / ((dist + cfg.epsilon) * (dist + cfg.epsilon));

  std::vector<LayerGrads> grads;
  for (int i = 0; i < n_f; ++i) {
    const AttentionWeights& layer = model.layers[static_cast<std::size_t>(i)];
    LayerGrads g = zero_grads(layer);
    InvariantMatrices inv = invariant_matrices(layer);
    const std::string at = "layer " + std::to_string(i);

    auto upstream = [&](int block) {
      Eigen::Index r = static_cast<Eigen::Index>(block) * n_f + i;
      Eigen::RowVectorXd u = (outer / dist) * (f_m.data.row(r) - f_t.data.row(r));
      return u;
    };

    {  // sQK
      SigmaDecomp dec = sigma_decomp(inv.x_sigma);
      check_sigma_gaps(dec.s, h, cfg.degeneracy_gap, at + " sQK");
      Eigen::RowVectorXd raw = dec.s.head(h).transpose();
      Eigen::RowVectorXd coeff =
          through_normalization(upstream(0), raw, at + " sQK");
      Matrix gm = sigma_gradient(dec, coeff);
      g.w_q += gm * layer.w_k;
      g.w_k += gm.transpose() * layer.w_q;
    }
    {  // lQK
      LambdaDecomp dec = lambda_decomp(inv.x_lambda, at + " lQK");
      check_lambda_gaps(dec, h, cfg.degeneracy_gap, at + " lQK");
      Eigen::RowVectorXd raw(h);
      for (int j = 0; j < h; ++j)
        raw(j) = std::abs(dec.values(dec.order[static_cast<std::size_t>(j)]));
      Eigen::RowVectorXd coeff =
          through_normalization(upstream(1), raw, at + " lQK");
      Matrix gm = lambda_gradient(dec, coeff);
      g.w_q += layer.w_k * gm.transpose();
      g.w_k += layer.w_q * gm;
    }
    {  // sVO
      SigmaDecomp dec = sigma_decomp(inv.y_sigma);
      check_sigma_gaps(dec.s, h, cfg.degeneracy_gap, at + " sVO");
      Eigen::RowVectorXd raw = dec.s.head(h).transpose();
      Eigen::RowVectorXd coeff =
          through_normalization(upstream(2), raw, at + " sVO");
      Matrix gm = sigma_gradient(dec, coeff);
      g.w_v += gm * layer.w_o.transpose();
      g.w_o += layer.w_v.transpose() * gm;
    }
    {  // lVO
      LambdaDecomp dec = lambda_decomp(inv.y_lambda, at + " lVO");
      check_lambda_gaps(dec, h, cfg.degeneracy_gap, at + " lVO");
      Eigen::RowVectorXd raw(h);
      for (int j = 0; j < h; ++j)
        raw(j) = std::abs(dec.values(dec.order[static_cast<std::size_t>(j)]));
      Eigen::RowVectorXd coeff =
          through_normalization(upstream(3), raw, at + " lVO");
      Matrix gm = lambda_gradient(dec, coeff);
      g.w_o += gm * layer.w_v.transpose();
      g.w_v += layer.w_o.transpose() * gm;
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

LayerGrads attention_mse_gradient(const Matrix& h_in,
                                  const AttentionWeights& layer,
                                  const Matrix& y_ref, double scale) {
  check(h_in.cols() == layer.w_q.rows(),
        "attention_mse_gradient: input must be n x d_model");
  const double inv_sqrt_d = 1.0 / std::sqrt(double(layer.w_q.cols()));

  Matrix q = h_in * layer.w_q;
  Matrix k = h_in * layer.w_k;
  Matrix vw = h_in * layer.w_v;
  Matrix a = (q * k.transpose()) * inv_sqrt_d;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double m = a.row(r).maxCoeff();
    a.row(r) = (a.row(r).array() - m).exp();
    a.row(r) /= a.row(r).sum();
  }
  Matrix av = a * vw;
  Matrix out = av * layer.w_o;
  check(out.rows() == y_ref.rows() && out.cols() == y_ref.cols(),
        "attention_mse_gradient: reference shape mismatch");

  Matrix dout = scale * (out - y_ref);
  LayerGrads g;
  g.w_o = av.transpose() * dout;
  Matrix dav = dout * layer.w_o.transpose();
  Matrix da = dav * vw.transpose();
  Matrix dvw = a.transpose() * dav;
  // Row-wise softmax backward: dS = A .* (dA - rowsum(dA .* A)).
  Matrix ds(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    double dot = da.row(r).dot(a.row(r));
    ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
  }
  Matrix dq = ds * k * inv_sqrt_d;
  Matrix dk = ds.transpose() * q * inv_sqrt_d;
  g.w_q = h_in.transpose() * dq;
  g.w_k = h_in.transpose() * dk;
  g.w_v = h_in.transpose() * dvw;
  return g;
}

FinetuneResult finetune_attack(const ModelWeights& model,
                               const Fingerprint& target_fp,
                               const FinetuneConfig& cfg) {
  model.validate();
  check(model.n_kv_heads == model.n_heads,
        "finetune_attack: broadcast the model to the full layout first");
  const int n_f = target_fp.n_f;
  const int h = target_fp.top_k;
  check(n_f >= 1 && n_f <= model.n_layers,
        "finetune_attack: target n_f outside the model's depth");
  check(cfg.steps >= 0, "finetune_attack: steps must be nonnegative");
  check(cfg.learning_rate >= 0.0,
        "finetune_attack: learning rate must be nonnegative");
  check(cfg.l_attack >= 0.0 && cfg.l_data >= 0.0,
        "finetune_attack: loss weights must be nonnegative");
  check(cfg.probe_count >= 1 && cfg.probe_rows >= 1,
        "finetune_attack: need at least one probe row");

  FinetuneResult result;
  result.model = model;
  result.model.model_id = model.model_id + "+finetune-k" +
                          std::to_string(cfg.steps) + "-s" +
                          std::to_string(cfg.seed);
  if (cfg.steps == 0) return result;

  // Fixed probes and the starting model's outputs anchor the data term.
  CounterRng rng(cfg.seed);
  std::vector<Matrix> probes;
  for (int p = 0; p < cfg.probe_count; ++p) {
    Matrix probe(cfg.probe_rows, model.d_model);
    rng.fill_gaussian(probe);
    probes.push_back(std::move(probe));
  }
  std::vector<std::vector<Matrix>> refs(probes.size());
  for (std::size_t p = 0; p < probes.size(); ++p)
    for (int i = 0; i < n_f; ++i)
      refs[p].push_back(attention_forward(
          probes[p], model.layers[static_cast<std::size_t>(i)]));
  const double scale = 1.0 / (double(cfg.probe_count) * n_f);

  auto data_loss_of = [&](const ModelWeights& m) {
    double acc = 0.0;
    for (std::size_t p = 0; p < probes.size(); ++p)
      for (int i = 0; i < n_f; ++i) {
        Matrix out = attention_forward(probes[p],
                                       m.layers[static_cast<std::size_t>(i)]);
        acc += 0.5 * scale * (out - refs[p][i]).squaredNorm();
      }
    return acc;
  };

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<LayerGrads> ga;
    try {
      ga = fingerprint_gradient(result.model, target_fp, cfg.grad);
    } catch (const Error& e) {
      fail("finetune_attack step " + std::to_string(step) + ": " + e.what());
    }
    for (int i = 0; i < n_f; ++i) {
      auto& l = result.model.layers[static_cast<std::size_t>(i)];
      LayerGrads total = zero_grads(l);
      total.w_q = cfg.l_attack * ga[static_cast<std::size_t>(i)].w_q;
      total.w_k = cfg.l_attack * ga[static_cast<std::size_t>(i)].w_k;
      total.w_v = cfg.l_attack * ga[static_cast<std::size_t>(i)].w_v;
      total.w_o = cfg.l_attack * ga[static_cast<std::size_t>(i)].w_o;
      if (cfg.use_data_loss && cfg.l_data > 0.0) {
        for (std::size_t p = 0; p < probes.size(); ++p) {
          LayerGrads gd =
              attention_mse_gradient(probes[p], l, refs[p][i], scale);
          total.w_q += cfg.l_data * gd.w_q;
          total.w_k += cfg.l_data * gd.w_k;
          total.w_v += cfg.l_data * gd.w_v;
          total.w_o += cfg.l_data * gd.w_o;
        }
      }
      l.w_q -= cfg.learning_rate * total.w_q;
      l.w_k -= cfg.learning_rate * total.w_k;
      l.w_v -= cfg.learning_rate * total.w_v;
      l.w_o -= cfg.learning_rate * total.w_o;
    }

    Fingerprint f_cur = extract_fingerprint(result.model, n_f, h);
    FinetuneStep entry;
    entry.step = step;
    entry.distance = fingerprint_distance(f_cur, target_fp);
    entry.attack_loss = 1.0 / (entry.distance + cfg.grad.epsilon);
    entry.data_loss = data_loss_of(result.model);
    result.trajectory.push_back(entry);
  }
  return result;
}

ModelWeights structured_prune(const ModelWeights& model, double ratio,
                              std::uint64_t seed) {
  model.validate();
  check(ratio >= 0.0 && ratio < 1.0,
        "structured_prune: ratio must be in [0, 1)");
  const int m = static_cast<int>(ratio * model.d_model);
  if (m == 0) return model;

  // One index set shared by every layer keeps the embedding consistent.
  std::vector<int> gone = CounterRng(seed).sample_indices(model.d_model, m);
  std::vector<char> dead(static_cast<std::size_t>(model.d_model), 0);
  for (int i : gone) dead[static_cast<std::size_t>(i)] = 1;

  auto keep_rows = [&](const Matrix& w) {
    Matrix out(w.rows() - m, w.cols());
    Eigen::Index r2 = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      if (!dead[static_cast<std::size_t>(r)]) out.row(r2++) = w.row(r);
    return out;
  };
  auto keep_cols = [&](const Matrix& w) {
    Matrix out(w.rows(), w.cols() - m);
    Eigen::Index c2 = 0;
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      if (!dead[static_cast<std::size_t>(c)]) out.col(c2++) = w.col(c);
    return out;
  };

  ModelWeights out = model;
  out.model_id = model.model_id + "+prune-r" + std::to_string(ratio) + "-s" +
                 std::to_string(seed);
  for (auto& l : out.layers) {
    l.w_q = keep_rows(l.w_q);
    l.w_k = keep_rows(l.w_k);
    l.w_v = keep_rows(l.w_v);
    l.w_o = keep_cols(l.w_o);
  }
  if (out.vocab_size > 0) out.embedding = keep_cols(out.embedding);
  out.d_model -= m;
  out.validate();
  return out;
}

namespace {

Vector ics_from_product(const Matrix& qk_product, const Matrix& embedding,
                        const std::vector<int>& tokens) {
  check(!tokens.empty(), "toy_ics_feature: empty token sequence");
  const int vocab = static_cast<int>(embedding.rows());
  Matrix sel(static_cast<Eigen::Index>(tokens.size()), embedding.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    check(tokens[i] >= 0 && tokens[i] < vocab,
          "toy_ics_feature: token " + std::to_string(tokens[i]) +
              " outside vocabulary of " + std::to_string(vocab));
    sel.row(static_cast<Eigen::Index>(i)) = embedding.row(tokens[i]);
  }
  Matrix inter = sel * qk_product * sel.transpose();
  Vector flat(inter.size());
  Eigen::Index w = 0;
  for (Eigen::Index r = 0; r < inter.rows(); ++r)
    for (Eigen::Index c = 0; c < inter.cols(); ++c) flat(w++) = inter(r, c);
  double nn = flat.norm();
  check(nn > 0.0, "toy_ics_feature: degenerate all-zero feature");
  return flat / nn;
}

Matrix first_layer_qk(const ModelWeights& model) {
  const ModelWeights* src = &model;
  ModelWeights full;
  if (model.n_kv_heads != model.n_heads) {
    full = broadcast_gqa(model);
    src = &full;
  }
  return src->layers[0].w_q * src->layers[0].w_k.transpose();
}

}  // namespace

Vector toy_ics_feature(const ModelWeights& model,
                       const std::vector<int>& tokens) {
  model.validate();
  check(model.vocab_size > 0, "toy_ics_feature: model has no embedding");
  return ics_from_product(first_layer_qk(model), model.embedding, tokens);
}

GaResult false_claim_ga(const ModelWeights& claimant,
                        const ModelWeights& accused, const GaConfig& cfg) {
  claimant.validate();
  accused.validate();
  check(claimant.vocab_size > 0 && accused.vocab_size > 0,
        "false_claim_ga: both models need embeddings");
  check(claimant.vocab_size == accused.vocab_size,
        "false_claim_ga: vocabulary sizes differ (" +
            std::to_string(claimant.vocab_size) + " vs " +
            std::to_string(accused.vocab_size) + ")");
  check(cfg.population >= 2, "false_claim_ga: population must be at least 2");
  check(cfg.length >= 2, "false_claim_ga: sequence length must be at least 2");
  check(cfg.generations >= 0,
        "false_claim_ga: generations must be nonnegative");
  check(cfg.mutation_rate >= 0.0 && cfg.mutation_rate <= 1.0,
        "false_claim_ga: mutation rate must be in [0, 1]");
  check(cfg.elites >= 1 && cfg.elites < cfg.population,
        "false_claim_ga: elites must be in [1, population)");

  const Matrix qk_a = first_layer_qk(claimant);
  const Matrix qk_b = first_layer_qk(accused);
  const std::uint64_t vocab = static_cast<std::uint64_t>(claimant.vocab_size);

  auto fitness_of = [&](const std::vector<int>& tokens) {
    Vector fa = ics_from_product(qk_a, claimant.embedding, tokens);
    Vector fb = ics_from_product(qk_b, accused.embedding, tokens);
    return fa.dot(fb);  // both unit norm
  };

  CounterRng rng(cfg.seed);
  std::vector<std::vector<int>> pop(static_cast<std::size_t>(cfg.population));
  for (auto& ind : pop) {
    ind.resize(static_cast<std::size_t>(cfg.length));
    for (int& gene : ind) gene = static_cast<int>(rng.next_below(vocab));
  }
  std::vector<double> fit(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = fitness_of(pop[i]);

  GaResult result;
  auto record_best = [&]() {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
      if (fit[i] > fit[best]) best = i;
    result.history.push_back(fit[best]);
    if (result.history.size() == 1 || fit[best] > result.best_fitness) {
      result.best_fitness = fit[best];
      result.best_tokens = pop[best];
    }
  };
  record_best();

  auto tournament = [&]() -> const std::vector<int>& {
    std::size_t i = static_cast<std::size_t>(rng.next_below(pop.size()));
    std::size_t j = static_cast<std::size_t>(rng.next_below(pop.size()));
    return fit[j] > fit[i] ? pop[j] : pop[i];
  };

  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<std::size_t> order(pop.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });

    std::vector<std::vector<int>> next;
    next.reserve(pop.size());
    for (int e = 0; e < cfg.elites; ++e)
      next.push_back(pop[order[static_cast<std::size_t>(e)]]);
    while (next.size() < pop.size()) {
      const std::vector<int>& p1 = tournament();
      const std::vector<int>& p2 = tournament();
      std::size_t cut =
          1 + static_cast<std::size_t>(rng.next_below(std::uint64_t(cfg.length) - 1));
      std::vector<int> child(static_cast<std::size_t>(cfg.length));
      for (std::size_t g = 0; g < child.size(); ++g)
        child[g] = g < cut ? p1[g] : p2[g];
      for (int& gene : child)
        if (rng.next_unit_co() < cfg.mutation_rate)
          gene = static_cast<int>(rng.next_below(vocab));
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = fitness_of(pop[i]);
    record_best();
  }
  return result;
}

}  // namespace sfp
