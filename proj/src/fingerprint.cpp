#include "sfp/fingerprint.hpp"

#include <algorithm>
#include <cmath>

#include "sfp/io.hpp"

namespace sfp {

namespace {

constexpr const char* kRowOrder = "sQK,lQK,sVO,lVO";

// Top-h of a descending spectrum as a unit row; zeros + warning when the
// spectrum is shorter than h (pad) or identically zero.
bool truncated_row(const SpectrumVector& spectrum, int h, bool pad,
                   const std::string& label, Eigen::RowVectorXd& row,
                   std::vector<std::string>* warnings) {
  const int have = static_cast<int>(spectrum.values.size());
  if (have < h) {
    if (!pad)
      fail("layer_fingerprint: " + label + " spectrum has " +
           std::to_string(have) + " values, need h=" + std::to_string(h));
    if (warnings)
      warnings->push_back(label + ": padded " + std::to_string(h - have) +
                          " of " + std::to_string(h) + " values with zeros");
  }
  row.setZero(h);
  for (int i = 0; i < std::min(h, have); ++i)
    row(i) = spectrum.values[static_cast<std::size_t>(i)];
  double norm = row.norm();
  if (norm == 0.0) {
    if (warnings) warnings->push_back(label + ": all-zero spectrum row");
    return false;
  }
  row /= norm;
  return true;
}

std::vector<int> selected_blocks(WeightSubset subset, ValueKind kind) {
  // Blocks: 0 = sQK, 1 = lQK, 2 = sVO, 3 = lVO.
  std::vector<int> out;
  for (int b = 0; b < 4; ++b) {
    bool qk = b < 2;
    bool singular = (b % 2) == 0;
    if (subset == WeightSubset::qk && !qk) continue;
    if (subset == WeightSubset::vo && qk) continue;
    if (kind == ValueKind::singular && !singular) continue;
    if (kind == ValueKind::eigen && singular) continue;
    out.push_back(b);
  }
  return out;
}

double restricted_distance(const Fingerprint& a, const Fingerprint& b,
                           const std::vector<int>& blocks) {
  double acc = 0.0;
  for (int blk : blocks)
    for (int i = 0; i < a.n_f; ++i) {
      Eigen::Index r = static_cast<Eigen::Index>(blk) * a.n_f + i;
      acc += (a.data.row(r) - b.data.row(r)).squaredNorm();
    }
  return std::sqrt(acc);
}

}  // namespace

InvariantMatrices invariant_matrices(const AttentionWeights& layer) {
  check(layer.w_k.cols() == layer.w_q.cols(),
        "invariant_matrices: grouped K/V layout, broadcast the model first");
  check(layer.w_v.cols() == layer.w_q.cols(),
        "invariant_matrices: grouped K/V layout, broadcast the model first");
  InvariantMatrices out;
  out.x_sigma = layer.w_q * layer.w_k.transpose();
  out.y_sigma = layer.w_v * layer.w_o;
  out.x_lambda = layer.w_q.transpose() * layer.w_k;
  out.y_lambda = layer.w_o * layer.w_v;
  return out;
}

Matrix layer_fingerprint(const AttentionWeights& layer, int h, bool pad,
                         std::vector<std::string>* warnings) {
  check(h >= 1, "layer_fingerprint: h must be at least 1");
  InvariantMatrices inv = invariant_matrices(layer);
  Matrix block(4, h);
  Eigen::RowVectorXd row;
  truncated_row(singular_values(inv.x_sigma), h, pad, "sQK", row, warnings);
  block.row(0) = row;
  truncated_row(eigen_magnitudes(inv.x_lambda), h, pad, "lQK", row, warnings);
  block.row(1) = row;
  truncated_row(singular_values(inv.y_sigma), h, pad, "sVO", row, warnings);
  block.row(2) = row;
  truncated_row(eigen_magnitudes(inv.y_lambda), h, pad, "lVO", row, warnings);
  block.row(3) = row;
  return block;
}

Fingerprint extract_fingerprint_window(const ModelWeights& model, int start,
                                       int n_f, int h, bool pad) {
  model.validate();
  check(n_f >= 1, "extract_fingerprint: n_f must be at least 1");
  check(h >= 1, "extract_fingerprint: h must be at least 1");
  check(start >= 0 && start + n_f <= model.n_layers,
        "extract_fingerprint: window [" + std::to_string(start) + ", " +
            std::to_string(start + n_f) + ") exceeds depth " +
            std::to_string(model.n_layers));

  const ModelWeights* source = &model;
  ModelWeights broadcast;
  if (model.n_kv_heads != model.n_heads) {
    broadcast = broadcast_gqa(model);
    source = &broadcast;
  }

  Fingerprint fp;
  fp.n_f = n_f;
  fp.top_k = h;
  fp.row_order = kRowOrder;
  fp.model_id = model.model_id;
  fp.data.resize(static_cast<Eigen::Index>(4) * n_f, h);
  for (int i = 0; i < n_f; ++i) {
    std::string at = "layer " + std::to_string(start + i);
    std::vector<std::string> local;
    Matrix block = layer_fingerprint(
        source->layers[static_cast<std::size_t>(start + i)], h, pad, &local);
    for (int b = 0; b < 4; ++b)
      fp.data.row(static_cast<Eigen::Index>(b) * n_f + i) = block.row(b);
    for (const auto& w : local) fp.warnings.push_back(at + ": " + w);
  }
  return fp;
}

Fingerprint extract_fingerprint(const ModelWeights& model, int n_f, int h,
                                bool pad) {
  return extract_fingerprint_window(model, 0, n_f, h, pad);
}

double fingerprint_distance(const Fingerprint& a, const Fingerprint& b) {
  check(a.n_f == b.n_f && a.top_k == b.top_k,
        "fingerprint_distance: shape mismatch (n_f " + std::to_string(a.n_f) +
            " vs " + std::to_string(b.n_f) + ", h " + std::to_string(a.top_k) +
            " vs " + std::to_string(b.top_k) + ")");
  check(a.row_order == b.row_order,
        "fingerprint_distance: row order mismatch");
  return (a.data - b.data).norm();
}

MarginReport fingerprint_margin(const std::vector<double>& related_distances,
                                const std::vector<double>& unrelated_distances) {
  check(!related_distances.empty(),
        "fingerprint_margin: no related distances");
  check(!unrelated_distances.empty(),
        "fingerprint_margin: no unrelated distances");
  MarginReport r;
  r.max_related =
      *std::max_element(related_distances.begin(), related_distances.end());
  r.min_unrelated = *std::min_element(unrelated_distances.begin(),
                                      unrelated_distances.end());
  r.margin = r.min_unrelated - r.max_related;
  return r;
}

void save_fingerprint(const Fingerprint& fp, const std::filesystem::path& path) {
  check(fp.data.rows() == static_cast<Eigen::Index>(4) * fp.n_f &&
            fp.data.cols() == fp.top_k,
        "save_fingerprint: data shape disagrees with descriptors");
  write_matrix_file(path, fp.data);
  Json side;
  side["format_version"] = 1;
  side["model_id"] = fp.model_id;
  side["n_f"] = fp.n_f;
  side["h"] = fp.top_k;
  side["row_order"] = fp.row_order;
  side["created_by"] = "sfp";
  side["warnings"] = fp.warnings;
  write_json_file(path.string() + ".json", side);
}

Fingerprint load_fingerprint(const std::filesystem::path& path) {
  Fingerprint fp;
  fp.data = read_matrix_file(path);
  const std::filesystem::path side_path = path.string() + ".json";
  check(std::filesystem::exists(side_path),
        "load_fingerprint: missing sidecar " + side_path.string());
  Json side = read_json_file(side_path);
  const std::string where = "load_fingerprint " + side_path.string();
  int version = json_field(side, "format_version", where).get<int>();
  check(version == 1,
        where + ": unsupported format_version " + std::to_string(version));
  fp.model_id = json_field(side, "model_id", where).get<std::string>();
  fp.n_f = json_field(side, "n_f", where).get<int>();
  fp.top_k = json_field(side, "h", where).get<int>();
  fp.row_order = json_field(side, "row_order", where).get<std::string>();
  check(fp.row_order == kRowOrder,
        where + ": unknown row_order \"" + fp.row_order + "\"");
  if (side.contains("warnings"))
    fp.warnings = side["warnings"].get<std::vector<std::string>>();
  check(fp.data.rows() == static_cast<Eigen::Index>(4) * fp.n_f &&
            fp.data.cols() == fp.top_k,
        where + ": data shape disagrees with sidecar descriptors");
  return fp;
}

const char* to_string(LayerWindow w) {
  switch (w) {
    case LayerWindow::first: return "first";
    case LayerWindow::middle: return "middle";
    case LayerWindow::last: return "last";
  }
  return "?";
}

const char* to_string(WeightSubset s) {
  switch (s) {
    case WeightSubset::qk: return "qk";
    case WeightSubset::vo: return "vo";
    case WeightSubset::both: return "both";
  }
  return "?";
}

const char* to_string(ValueKind k) {
  switch (k) {
    case ValueKind::singular: return "singular";
    case ValueKind::eigen: return "eigen";
    case ValueKind::both: return "both";
  }
  return "?";
}

namespace {

int window_start(LayerWindow w, int n_layers, int n_f) {
  switch (w) {
    case LayerWindow::first: return 0;
    case LayerWindow::middle: return (n_layers - n_f) / 2;
    case LayerWindow::last: return n_layers - n_f;
  }
  return 0;
}

}  // namespace

std::vector<AblationResult> ablation_sweep(const ModelFamily& family,
                                           const AblationGrid& grid) {
  check(!family.related.empty(), "ablation_sweep: family has no related models");
  check(!family.unrelated.empty(),
        "ablation_sweep: family has no unrelated models");
  check(!grid.windows.empty() && !grid.subsets.empty() && !grid.kinds.empty() &&
            !grid.n_f_values.empty() && !grid.h_values.empty(),
        "ablation_sweep: empty grid axis");

  std::vector<AblationResult> results;
  for (LayerWindow w : grid.windows)
    for (WeightSubset s : grid.subsets)
      for (ValueKind k : grid.kinds)
        for (int n_f : grid.n_f_values)
          for (int h : grid.h_values) {
            AblationResult res;
            res.cell = {w, s, k, n_f, h};
            try {
              auto window_fp = [&](const ModelWeights& m) {
                check(n_f <= m.n_layers,
                      "window of " + std::to_string(n_f) +
                          " layers exceeds depth " +
                          std::to_string(m.n_layers) + " of " + m.model_id);
                return extract_fingerprint_window(
                    m, window_start(w, m.n_layers, n_f), n_f, h);
              };
              Fingerprint target = window_fp(family.target);
              std::vector<int> blocks = selected_blocks(s, k);
              std::vector<double> rel, unrel;
              for (const auto& m : family.related)
                rel.push_back(
                    restricted_distance(target, window_fp(m), blocks));
              for (const auto& m : family.unrelated)
                unrel.push_back(
                    restricted_distance(target, window_fp(m), blocks));
              res.report = fingerprint_margin(rel, unrel);
              res.feasible = true;
            } catch (const Error& e) {
              res.feasible = false;
              res.note = e.what();
            }
            results.push_back(std::move(res));
          }
  return results;
}

}  // namespace sfp
