#include "sfp/spectra.hpp"

#include <algorithm>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace sfp {

namespace {

void check_input(const Matrix& m, const char* op, bool square) {
  check(m.rows() > 0 && m.cols() > 0, std::string(op) + ": empty matrix");
  check(all_finite(m), std::string(op) + ": non-finite entry");
  if (square)
    check(m.rows() == m.cols(), std::string(op) + ": matrix must be square");
}

Eigen::VectorXcd solved_eigenvalues(const Matrix& n, const char* op) {
  // Eigen's Schur iteration is capped (40 sweeps per row); on failure info()
  // reports NoConvergence instead of returning garbage.
  Eigen::EigenSolver<Matrix> solver(n, /*computeEigenvectors=*/false);
  check(solver.info() == Eigen::Success,
        std::string(op) + ": eigenvalue iteration did not converge");
  return solver.eigenvalues();
}

}  // namespace

SpectrumVector singular_values(const Matrix& m) {
  check_input(m, "singular_values", /*square=*/false);
  Vector sv;
  // Jacobi is the accurate choice at fingerprinting sizes; divide-and-conquer
  // takes over for anything big.
  if (std::max(m.rows(), m.cols()) <= 128) {
    Eigen::JacobiSVD<Matrix> svd(m);
    sv = svd.singularValues();
  } else {
    Eigen::BDCSVD<Matrix> svd(m);
    sv = svd.singularValues();
  }
  SpectrumVector out;
  out.kind = SpectrumKind::singular;
  out.values.assign(sv.data(), sv.data() + sv.size());
  std::stable_sort(out.values.begin(), out.values.end(),
                   [](double a, double b) { return a > b; });
  return out;
}

double spectral_norm(const Matrix& m) { return singular_values(m).values[0]; }

std::vector<std::complex<double>> complex_eigenvalues(const Matrix& n) {
  check_input(n, "complex_eigenvalues", /*square=*/true);
  Eigen::VectorXcd ev = solved_eigenvalues(n, "complex_eigenvalues");
  std::vector<std::complex<double>> out(ev.data(), ev.data() + ev.size());
  std::stable_sort(out.begin(), out.end(),
                   [](const std::complex<double>& a,
                      const std::complex<double>& b) {
                     double ma = std::abs(a), mb = std::abs(b);
                     if (ma != mb) return ma > mb;
                     return a.imag() > b.imag();
                   });
  return out;
}

SpectrumVector eigen_magnitudes(const Matrix& n) {
  check_input(n, "eigen_magnitudes", /*square=*/true);
  Eigen::VectorXcd ev = solved_eigenvalues(n, "eigen_magnitudes");
  SpectrumVector out;
  out.kind = SpectrumKind::eigen_magnitude;
  out.values.resize(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    out.values[static_cast<std::size_t>(i)] = std::abs(ev[i]);
  std::stable_sort(out.values.begin(), out.values.end(),
                   [](double a, double b) { return a > b; });
  return out;
}

EigenbasisCondition eigenbasis_condition(const Matrix& n) {
  check_input(n, "eigenbasis_condition", /*square=*/true);
  Eigen::EigenSolver<Matrix> solver(n, /*computeEigenvectors=*/true);
  check(solver.info() == Eigen::Success,
        "eigenbasis_condition: eigenvalue iteration did not converge");
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(solver.eigenvectors());
  double smax = svd.singularValues()(0);
  double smin = svd.singularValues()(svd.singularValues().size() - 1);
  EigenbasisCondition out;
  out.defective = smin < 1e-12 * smax;
  out.kappa = out.defective ? std::numeric_limits<double>::infinity()
                            : smax / smin;
  return out;
}

}  // namespace sfp
