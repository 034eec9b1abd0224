#pragma once

#include <cmath>

#include "ictxot/linalg.hpp"
#include "ictxot/rng.hpp"

namespace ictxot::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Stream& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline SymMatrix random_symmetric(std::size_t d, Stream& rng) {
  return SymMatrix::symmetrize(random_matrix(d, d, rng));
}

inline SymMatrix random_psd(std::size_t d, Stream& rng) {
  const Matrix b = random_matrix(d, d, rng);
  return SymMatrix::symmetrize(matmul_nt(b, b));
}

inline double rel_frob(const Matrix& a, const Matrix& b) {
  const double denom = std::max(frob_norm(b), 1e-300);
  return frob_norm(a - b) / denom;
}

}  // namespace ictxot::testing
