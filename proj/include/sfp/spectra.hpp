#pragma once

#include <complex>
#include <vector>

#include "sfp/common.hpp"

namespace sfp {

enum class SpectrumKind { singular, eigen_magnitude };

struct SpectrumVector {
  std::vector<double> values;  // sorted descending; ties keep solver order
  SpectrumKind kind = SpectrumKind::singular;
};

// Full singular value spectrum, descending, nonnegative.
SpectrumVector singular_values(const Matrix& m);

// Eigenvalue magnitudes |lambda_i| of a square real matrix, descending.
// Complex pairs contribute their shared magnitude twice.
SpectrumVector eigen_magnitudes(const Matrix& n);

// Eigenvalues themselves, sorted by descending magnitude (ties: positive
// imaginary part first).  Diagnostic companion to eigen_magnitudes.
std::vector<std::complex<double>> complex_eigenvalues(const Matrix& n);

// Largest singular value.  Equals singular_values(m).values[0] exactly.
double spectral_norm(const Matrix& m);

struct EigenbasisCondition {
  bool defective = false;  // smallest singular value of V below 1e-12 * largest
  double kappa = 0.0;      // sigma_max(V) / sigma_min(V); inf when defective
};

// Conditioning of the eigenvector matrix of a square real matrix; feeds the
// Bauer-Fike bound.
EigenbasisCondition eigenbasis_condition(const Matrix& n);

}  // namespace sfp
