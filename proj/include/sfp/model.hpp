#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfp/common.hpp"

namespace sfp {

// One attention layer's projection weights, full-width layout:
//   w_q: d_model x d          w_k, w_v: d_model x kv_cols
//   w_o: d x d_model
// kv_cols = d / n_heads * n_kv_heads; equals d once broadcast.
struct AttentionWeights {
  Matrix w_q, w_k, w_v, w_o;
};

struct ModelWeights {
  std::string model_id;
  int d_model = 0;
  int d = 0;
  int n_heads = 1;
  int n_kv_heads = 1;
  int n_layers = 0;
  int vocab_size = 0;  // 0: no embedding stored
  std::vector<AttentionWeights> layers;
  Matrix embedding;  // vocab_size x d_model when vocab_size > 0

  int head_dim() const { return d / n_heads; }
  int kv_cols() const { return head_dim() * n_kv_heads; }

  // Shape and finiteness invariants; throws naming the first violation.
  void validate() const;
};

struct ToyModelConfig {
  int d_model = 32;
  int d = 16;
  int n_heads = 1;
  int n_kv_heads = 1;
  int n_layers = 8;
  int vocab_size = 0;
  double init_scale = 0.05;

  void validate() const;
};

// Bundle directory: manifest.json + one matrix file per weight.
// Matrices are listed per layer in Q, K, V, O order, embedding last.
ModelWeights load_model(const std::filesystem::path& dir);
void save_model(const ModelWeights& model, const std::filesystem::path& dir);

// Gaussian init, entries scaled by init_scale.  Deterministic in (config,
// seed): one counter stream, layers in order, Q,K,V,O, rows before columns,
// embedding last.
ModelWeights generate_toy_model(const ToyModelConfig& config,
                                std::uint64_t seed);

// base + scale * rms(base matrix) * fresh Gaussian noise, per attention
// matrix; the embedding is carried over untouched.  Draw order matches
// generate_toy_model so the result is pinned by (base, scale, seed).
ModelWeights derive_related_model(const ModelWeights& base,
                                  double perturbation_scale,
                                  std::uint64_t seed);

// Expand grouped K/V to the full layout by tiling: the pre-broadcast block
// [kv_0 .. kv_{n_kv-1}] is repeated g = n_heads/n_kv_heads times side by
// side, so post-broadcast head h reads kv-head (h mod n_kv_heads).  Already
// full layout: returned unchanged.  Idempotent.
ModelWeights broadcast_gqa(const ModelWeights& model);

}  // namespace sfp
