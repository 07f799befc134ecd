#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfp/augment.hpp"
#include "sfp/fingerprint.hpp"

namespace sfp {

// NCHW tensor, row-major contiguous.  Everything is double so training is
// bit-for-bit reproducible from the config seed.
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

  std::size_t idx(int i, int j, int y, int x) const {
    return ((static_cast<std::size_t>(i) * c + j) * h + y) * w + x;
  }
  double& at(int i, int j, int y, int x) { return v[idx(i, j, y, x)]; }
  double at(int i, int j, int y, int x) const { return v[idx(i, j, y, x)]; }
  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

// Weight matrix is out_c x (in_c*k*k); within a row the kernel is packed
// x fastest, then y, then input channel.  No bias (batch norm follows).
struct Conv2dParams {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  Matrix weight;
};

struct BatchNormParams {
  Vector gamma, beta;
  Vector running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;  // running = (1-m)*running + m*batch
};

// Two 3x3 convs with batch norm, ReLU after the first and after the
// residual add; a strided 1x1 projection (with its own norm) carries the
// skip path whenever stride or width changes.
struct BasicBlock {
  int stride = 1;
  Conv2dParams conv1;
  BatchNormParams bn1;
  Conv2dParams conv2;
  BatchNormParams bn2;
  bool has_projection = false;
  Conv2dParams proj;
  BatchNormParams proj_bn;
};

// Stem conv + 5 stages of 2 residual blocks (strides 1,2,2,2,1 at stage
// entry) + global average pool + linear head + sigmoid.  The input is one
// fingerprint as a 1-channel image of shape (4*n_f) x h.
struct SimNetParams {
  int n_f = 0, h = 0;
  std::vector<int> widths;  // {stem, stage1..stage5}
  int epochs_trained = 0;
  Conv2dParams stem;
  BatchNormParams stem_bn;
  std::vector<BasicBlock> blocks;  // 10
  Matrix fc_w;                     // 1 x widths[5]
  double fc_b = 0.0;

  int input_rows() const { return 4 * n_f; }
  int input_cols() const { return h; }
};

std::vector<int> toy_widths();    // {4, 4, 8, 16, 32, 32}
std::vector<int> paper_widths();  // {64, 64, 128, 256, 512, 512}

// Conv and fc weights U(-1/sqrt(fan_in), +1/sqrt(fan_in)), offsets zero,
// norm scales one.  Draw order: stem, then per block conv1, conv2,
// projection if present, then the head.  Requires 4*n_f >= 8 and h >= 8 so
// the three stride-2 stages keep a nonempty map.
SimNetParams simnet_init(int n_f, int h, const std::vector<int>& widths,
                         std::uint64_t seed);

// Gradients, same shapes as the trainable tensors.
struct BnGrads {
  Vector gamma, beta;
};
struct BlockGrads {
  Matrix conv1_w;
  BnGrads bn1;
  Matrix conv2_w;
  BnGrads bn2;
  Matrix proj_w;
  BnGrads proj_bn;
};
struct SimNetGrads {
  Matrix stem_w;
  BnGrads stem_bn;
  std::vector<BlockGrads> blocks;
  Matrix fc_w;
  double fc_b = 0.0;
};

struct BatchLoss {
  double loss = 0.0;
  std::vector<double> scores;  // post-sigmoid, clean ordering
  SimNetGrads grads;
  Tensor4 input_grad;
};

// Training-mode forward and backward for smoothed binary cross-entropy
// against `labels`.  Batch statistics come from `input`; running statistics
// move only when update_running is set, so with it off the call is pure and
// finite-difference checkable.
BatchLoss simnet_loss(SimNetParams& params, const Tensor4& input,
                      const std::vector<double>& labels,
                      double label_smoothing, bool update_running);

// Evaluation-mode scores (running statistics, no batch coupling: scoring
// one input or a stack gives identical numbers).
double simnet_score(const SimNetParams& params, const Fingerprint& fp);
std::vector<double> simnet_scores(const SimNetParams& params,
                                  const std::vector<Fingerprint>& fps);

struct Verdict {
  double score = 0.0;
  double tau = 0.5;
  bool related = false;  // score > tau
};
Verdict simnet_verify(const SimNetParams& params, const Fingerprint& fp,
                      double tau);

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1e-4;
  double weight_decay = 1e-6;
  int lr_step = 100;      // epochs per decay
  double lr_gamma = 0.8;  // lr at epoch e is learning_rate * gamma^(e/step)
  double label_smoothing = 0.01;
  double fgsm_epsilon = 1e-5;
  int batch_size = 0;  // 0: whole corpus per step
  std::uint64_t seed = 42;
  // Adam moment constants, the conventional defaults.
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double clean_loss = 0.0;
  double adv_loss = 0.0;
  double accuracy = 0.0;  // clean scores at threshold 0.5
};

struct TrainResult {
  SimNetParams params;
  std::vector<EpochStats> history;
};

// Decoupled-weight-decay Adam over averaged clean + sign-gradient-perturbed
// losses (input perturbation epsilon from the config).  Batches are taken
// in corpus order; running norm statistics update on both passes.  Fails on
// a non-finite loss, a single-class corpus, or fingerprints that disagree
// with (n_f, h).
TrainResult simnet_train(const TrainingSet& corpus, int n_f, int h,
                         const std::vector<int>& widths,
                         const TrainConfig& cfg);

// Stack a corpus into the (N, 1, 4*n_f, h) input batch, corpus order.
Tensor4 corpus_batch(const TrainingSet& corpus, int n_f, int h);
std::vector<double> corpus_labels(const TrainingSet& corpus);

// Checkpoint directory: manifest.json (dims, widths, epochs trained, tensor
// list) + one matrix file per tensor, vectors stored as single rows.
// Round-trips bit-exactly.
void save_simnet(const SimNetParams& params, const std::filesystem::path& dir);
SimNetParams load_simnet(const std::filesystem::path& dir);

}  // namespace sfp
