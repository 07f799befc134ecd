#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sfp/model.hpp"
#include "sfp/spectra.hpp"

namespace sfp {

// The four products whose spectra survive the weight-space attacks:
//   x_sigma = W_Q W_K^T   (d_model x d_model, singular values survive
//                          joint input-space rotation/permutation)
//   y_sigma = W_V W_O     (d_model x d_model, same)
//   x_lambda = W_Q^T W_K  (d x d, eigenvalues survive invertible maps
//                          slipped between Q and K)
//   y_lambda = W_O W_V    (d x d, same for the V/O pair)
// Requires the full K/V layout; grouped models are broadcast first by the
// callers below.
struct InvariantMatrices {
  Matrix x_sigma, y_sigma, x_lambda, y_lambda;
};

InvariantMatrices invariant_matrices(const AttentionWeights& layer);

struct Fingerprint {
  Matrix data;  // 4*n_f x h, each row unit L2 norm (or all-zero, warned)
  int n_f = 0;
  int top_k = 0;  // h: values kept per spectrum
  std::string row_order = "sQK,lQK,sVO,lVO";
  std::string model_id;
  std::vector<std::string> warnings;
};

// 4 x h block for one layer, rows in order:
//   top-h singular values of x_sigma, top-h eigen magnitudes of x_lambda,
//   top-h singular values of y_sigma, top-h eigen magnitudes of y_lambda,
// each row L2-normalized after truncation.  A spectrum shorter than h is an
// error unless pad is set, in which case missing values become zeros and a
// warning is recorded.  An all-zero row stays zero and is warned about.
Matrix layer_fingerprint(const AttentionWeights& layer, int h, bool pad,
                         std::vector<std::string>* warnings);

// Rows 0..n_f-1 hold sQK for layers start..start+n_f-1, then the lQK block,
// then sVO, then lVO ("sQK,lQK,sVO,lVO").  Grouped-KV models are broadcast
// internally; the fingerprint keeps the model's own id.
Fingerprint extract_fingerprint(const ModelWeights& model, int n_f, int h,
                                bool pad = false);
Fingerprint extract_fingerprint_window(const ModelWeights& model, int start,
                                       int n_f, int h, bool pad = false);

// Frobenius distance.  Shape descriptors (n_f, top_k, row_order) must match.
double fingerprint_distance(const Fingerprint& a, const Fingerprint& b);

struct MarginReport {
  double max_related = 0.0;
  double min_unrelated = 0.0;
  double margin = 0.0;  // min_unrelated - max_related
};

MarginReport fingerprint_margin(const std::vector<double>& related_distances,
                                const std::vector<double>& unrelated_distances);

// Fingerprint file: the data matrix in the binary matrix format plus a JSON
// sidecar (<path>.json) carrying n_f, h, row_order, model_id, warnings.
void save_fingerprint(const Fingerprint& fp, const std::filesystem::path& path);
Fingerprint load_fingerprint(const std::filesystem::path& path);

// --- ablation over the fingerprint design space ---

enum class LayerWindow { first, middle, last };
enum class WeightSubset { qk, vo, both };
enum class ValueKind { singular, eigen, both };

const char* to_string(LayerWindow w);
const char* to_string(WeightSubset s);
const char* to_string(ValueKind k);

struct AblationCell {
  LayerWindow window = LayerWindow::first;
  WeightSubset subset = WeightSubset::both;
  ValueKind kind = ValueKind::both;
  int n_f = 0;
  int h = 0;
};

struct AblationResult {
  AblationCell cell;
  bool feasible = false;
  std::string note;  // why infeasible, empty otherwise
  MarginReport report;
};

struct ModelFamily {
  ModelWeights target;
  std::vector<ModelWeights> related;
  std::vector<ModelWeights> unrelated;
};

struct AblationGrid {
  std::vector<LayerWindow> windows;
  std::vector<WeightSubset> subsets;
  std::vector<ValueKind> kinds;
  std::vector<int> n_f_values;
  std::vector<int> h_values;
};

// Full cross product of the grid.  Each cell restricts fingerprints to the
// chosen rows and window, then reports the related/unrelated margin for the
// family.  Cells whose window exceeds the depth or whose h exceeds a
// spectrum are marked infeasible and the sweep continues.
std::vector<AblationResult> ablation_sweep(const ModelFamily& family,
                                           const AblationGrid& grid);

}  // namespace sfp
