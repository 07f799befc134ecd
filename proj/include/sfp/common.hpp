#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sfp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Single exception type for the whole library; the C boundary turns these
// into status codes and keeps the message in a thread-local slot.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

bool all_finite(const Matrix& m);

// FNV-1a over raw bytes; cheap content hash for reports and change detection.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t hash_matrix(const Matrix& m);  // row-major traversal
std::string hex64(std::uint64_t v);

}  // namespace sfp
