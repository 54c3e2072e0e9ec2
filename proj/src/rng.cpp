#include "factorlasso/rng.hpp"

namespace factorlasso {

Vector normal_vector(Rng& rng, int len) {
  Vector v(len);
  for (int i = 0; i < len; ++i) v[i] = rng.normal();
  return v;
}

Matrix normal_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

}  // namespace factorlasso
