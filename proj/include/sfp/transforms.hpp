#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "sfp/model.hpp"

namespace sfp {

// One attention layer, single softmax over all columns:
//   out = softmax((H W_Q)(H W_K)^T / sqrt(d)) (H W_V) W_O
// H is n x d_model; softmax is row-wise with max subtraction.  Requires the
// full K/V layout.  Reference semantics for the function-preservation checks;
// kept deliberately direct.
Matrix attention_forward(const Matrix& h_in, const AttentionWeights& layer);

enum class AttackKind { permutation, linear_map, combined };

// Everything needed to replay or invert an attack bit-exactly.  The linear
// factors are regenerated from seeds rather than stored; has_linear = false
// means the identity map, which is how "C = I leaves the model unchanged"
// replay checks are expressed.
struct AttackRecord {
  AttackKind kind = AttackKind::permutation;
  std::vector<int> permutation;  // new row i takes old row permutation[i]
  bool has_linear = false;
  bool per_layer = false;  // fresh C1/C2 per layer vs shared
  std::uint64_t c1_seed = 0;
  std::uint64_t c2_seed = 0;
};

void save_attack_record(const AttackRecord& rec,
                        const std::filesystem::path& path);
AttackRecord load_attack_record(const std::filesystem::path& path);

// Row shuffle of the input space, shared by every layer:
//   W_Q' = P W_Q, W_K' = P W_K, W_V' = P W_V, W_O' = W_O P^T
// (and E' = E P^T when an embedding is present).
std::pair<ModelWeights, AttackRecord> permutation_attack(
    const ModelWeights& model, std::uint64_t seed);

// Invertible maps slipped inside the layer:
//   W_Q' = W_Q C1, W_K' = W_K C1^-T, W_V' = W_V C2, W_O' = C2^-1 W_O
// C factors are well-conditioned by construction (orthogonal x diagonal in
// [0.5, 2] x orthogonal).  Grouped-KV models are broadcast to the full
// layout first; per_layer draws fresh factors for every layer.
std::pair<ModelWeights, AttackRecord> linear_mapping_attack(
    const ModelWeights& model, std::uint64_t seed, bool per_layer = false);

// Permutation and linear maps together:
//   W_Q' = P W_Q C1, W_K' = P W_K C1^-T, W_V' = P W_V C2, W_O' = C2^-1 W_O P^T
std::pair<ModelWeights, AttackRecord> combined_attack(const ModelWeights& model,
                                                      std::uint64_t seed);

// Replay a record against any compatible model.
ModelWeights apply_attack(const ModelWeights& model, const AttackRecord& rec);

// Undo a recorded attack: apply_attack then invert_attack is the identity up
// to roundoff.
ModelWeights invert_attack(const ModelWeights& model, const AttackRecord& rec);

}  // namespace sfp
