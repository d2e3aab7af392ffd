#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace pirl_lab {

using Vec = Eigen::VectorXd;

// Gradients share the ragged [query][answer] layout of policy logits:
// one dense row per query, rows may differ in length.
using Gradient = std::vector<Vec>;

inline Gradient zeros_like(const Gradient& shape) {
  Gradient out;
  out.reserve(shape.size());
  for (const auto& row : shape) out.push_back(Vec::Zero(row.size()));
  return out;
}

inline void check_same_shape(const Gradient& a, const Gradient& b) {
  if (a.size() != b.size()) throw std::invalid_argument("gradient shape mismatch");
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].size() != b[r].size()) throw std::invalid_argument("gradient row shape mismatch");
  }
}

inline double dot(const Gradient& a, const Gradient& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) s += a[r].dot(b[r]);
  return s;
}

inline double squared_norm(const Gradient& g) {
  double s = 0.0;
  for (const auto& row : g) s += row.squaredNorm();
  return s;
}

inline double norm(const Gradient& g) { return std::sqrt(squared_norm(g)); }

// y += alpha * x
inline void axpy(double alpha, const Gradient& x, Gradient& y) {
  check_same_shape(x, y);
  for (std::size_t r = 0; r < x.size(); ++r) y[r] += alpha * x[r];
}

inline Gradient scaled(double alpha, const Gradient& x) {
  Gradient out = x;
  for (auto& row : out) row *= alpha;
  return out;
}

}  // namespace pirl_lab
