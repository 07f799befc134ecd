#pragma once

#include <cstdint>
#include <vector>

#include "sfp/fingerprint.hpp"
#include "sfp/model.hpp"

namespace sfp {

// 1 / (distance + epsilon).  An adversary descending this pushes its copy's
// fingerprint away from the target's.
double attack_loss(const Fingerprint& f_m, const Fingerprint& f_t,
                   double epsilon = 1e-9);

struct LayerGrads {
  Matrix w_q, w_k, w_v, w_o;
};

struct SpectralGradConfig {
  double epsilon = 1e-9;         // attack-loss regularizer
  double degeneracy_gap = 1e-10; // spectra closer than this are an error
  bool finite_difference = false;  // central differences instead of analytic
  double fd_step = 1e-6;
};

// d(attack_loss)/dW for every weight in the first n_f layers (n_f and h
// come from the target fingerprint).  The analytic path runs per spectral
// value: u v^T for singular values, Re(conj(lambda) w v^T)/|lambda| for
// eigenvalue magnitudes with w the matching row of V^-1, chained through
// the truncation, normalization, and Frobenius distance.  A complex
// conjugate pair shares one magnitude and is not treated as degenerate;
// any other near-tie in a used spectrum position, a defective eigenbasis,
// or a vanishing magnitude is an error (or switch to finite differences).
// A model whose fingerprint equals the target exactly sits at a kink and
// gets the zero gradient.
std::vector<LayerGrads> fingerprint_gradient(const ModelWeights& model,
                                             const Fingerprint& f_t,
                                             const SpectralGradConfig& cfg);

// Gradient of scale * 0.5 * ||attention_forward(h_in, layer) - y_ref||_F^2
// with respect to the four weight matrices.
LayerGrads attention_mse_gradient(const Matrix& h_in,
                                  const AttentionWeights& layer,
                                  const Matrix& y_ref, double scale);

struct FinetuneConfig {
  int steps = 50;
  double learning_rate = 5e-3;
  double l_attack = 0.1;  // weight on the fingerprint-escape term
  double l_data = 1.0;    // weight on the output-preservation term
  bool use_data_loss = true;
  int probe_count = 2;  // fixed inputs anchoring the data term
  int probe_rows = 6;
  std::uint64_t seed = 0;
  SpectralGradConfig grad;
};

struct FinetuneStep {
  int step = 0;
  double distance = 0.0;
  double attack_loss = 0.0;
  double data_loss = 0.0;
};

struct FinetuneResult {
  ModelWeights model;
  std::vector<FinetuneStep> trajectory;  // one entry per completed step
};

// Plain gradient descent on l_attack * attack_loss + l_data * data_loss,
// touching the first n_f layers.  The data term is the mean over probes and
// touched layers of 0.5 * ||output - original output||_F^2, anchored to the
// starting model's outputs on seeded Gaussian probes.  steps = 0 returns
// the model unchanged with an empty trajectory; learning_rate = 0 is the
// identity on weights.  Gradient failures carry the step index.
FinetuneResult finetune_attack(const ModelWeights& model,
                               const Fingerprint& target_fp,
                               const FinetuneConfig& cfg);

// Drop floor(ratio * d_model) rows of W_Q/W_K/W_V, the matching W_O
// columns, and the matching embedding columns; one index set shared by
// every layer.  ratio 0 returns the model unchanged.
ModelWeights structured_prune(const ModelWeights& model, double ratio,
                              std::uint64_t seed);

// Unit-norm flattening of E_sel W_Q^(1) W_K^(1)T E_sel^T where E_sel stacks
// the embedding rows of `tokens`.  The stand-in for an input-conditioned
// similarity feature in the false-claim experiment.
Vector toy_ics_feature(const ModelWeights& model,
                       const std::vector<int>& tokens);

struct GaConfig {
  int population = 32;
  int generations = 100;
  int length = 16;  // tokens per candidate
  double mutation_rate = 0.05;
  int elites = 2;
  std::uint64_t seed = 0;
};

struct GaResult {
  std::vector<int> best_tokens;
  double best_fitness = 0.0;
  // Entry g is the best fitness after g generations; entry 0 is the best of
  // the random initial population.  Nondecreasing (elitist selection).
  std::vector<double> history;
};

// Evolve a token sequence making two models' features agree: fitness is the
// cosine between toy_ics_feature(claimant) and toy_ics_feature(accused).
// Elitist generational GA with tournament-of-2 selection, single-point
// crossover, per-gene mutation.  Never touches weights.
GaResult false_claim_ga(const ModelWeights& claimant,
                        const ModelWeights& accused, const GaConfig& cfg);

}  // namespace sfp
