#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfp/fingerprint.hpp"
#include "sfp/model.hpp"

namespace sfp {

// Defender-side weight corruptions used to harden the verifier.  Noise and
// masking touch only the first n_f layers (the layers the fingerprint
// reads); deletions change dimensions, so they apply to every layer to keep
// the bundle shape uniform.

// W + alpha * G with G standard normal, drawn layer by layer, Q,K,V,O,
// row-major.  alpha is an absolute scale, not relative to the weights.
ModelWeights gaussian_noise(const ModelWeights& model, double alpha, int n_f,
                            std::uint64_t seed);

// Remove n_r of the d_model rows of W_Q/W_K/W_V and the matching columns of
// W_O.  A fresh index set is drawn per layer, so the embedding's column
// space desynchronizes and is dropped from the result.
ModelWeights delete_rows(const ModelWeights& model, int n_r,
                         std::uint64_t seed);

// Remove n_c of the d columns of W_Q/W_K/W_V and the matching rows of W_O,
// fresh index set per layer.  Grouped models are broadcast first (the index
// space is the full d axis); head structure is not preserved, so the result
// is single-head full-layout.  The embedding is unaffected and kept.
ModelWeights delete_cols(const ModelWeights& model, int n_c,
                         std::uint64_t seed);

// Per-entry Bernoulli masking: draw U[0,1) fields N_Q, N_K, N_V, N_O, one
// per matrix, shaped d_model x d in the full layout (native shapes for
// grouped K/V); an entry survives when its draw >= rate.  W_O, being
// d x d_model, is masked with the transposed field N_O^T.  rate 0 leaves
// the model unchanged, rate 1 zeroes the touched layers.
ModelWeights random_mask(const ModelWeights& model, double rate, int n_f,
                         std::uint64_t seed);

struct AugmentPlan {
  std::vector<double> noise_alphas;
  std::vector<int> row_deletions;
  std::vector<int> col_deletions;
  std::vector<double> mask_rates;
  std::uint64_t seed = 0;

  void validate(const ModelWeights& model) const;
  int cells() const;  // augmentations per model
};

struct LabeledFingerprint {
  Fingerprint fp;
  int label = 0;  // 1 = target-related, 0 = unrelated
  std::string provenance;
};

struct TrainingSet {
  std::vector<LabeledFingerprint> items;
  std::vector<std::string> warnings;  // skipped infeasible cells
};

// Fingerprints for every base model plus every (model, augmentation) cell,
// labels 1 for target and related, 0 for unrelated.  Order is
// deterministic: bases first (target, related..., unrelated...), then per
// base in that order: noise cells, row-deletion cells, column-deletion
// cells, masking cells, each in plan order.  Cell seeds derive from
// plan.seed and the cell's position.  Cells that leave too little spectrum
// for h are skipped with a warning.
TrainingSet build_training_set(const ModelWeights& target,
                               const std::vector<ModelWeights>& related,
                               const std::vector<ModelWeights>& unrelated,
                               const AugmentPlan& plan, int n_f, int h);

// Corpus directory: item NNNN.fp (+ .json sidecar) per fingerprint and an
// index.json with labels and provenance.
void save_corpus(const TrainingSet& corpus, const std::filesystem::path& dir);
TrainingSet load_corpus(const std::filesystem::path& dir);

}  // namespace sfp
