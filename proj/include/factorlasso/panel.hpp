#pragma once

#include <string>

#include "factorlasso/types.hpp"

namespace factorlasso {

// Balanced panel. y and d are n x T (row = unit, column = period). Covariates
// are stacked period-major: row t*n + i of x holds X_it, so a column-major
// n x T matrix and a stacked length-nT vector share the same memory layout.
struct PanelDataset {
  int n = 0, T = 0, p = 0;
  Matrix y, d;  // n x T
  Matrix x;     // (n*T) x p

  double xv(int i, int t, int j) const {
    return x(static_cast<Eigen::Index>(t) * n + i, j);
  }
  // Throws on dimension mismatch, non-finite values, n < 2.
  void validate() const;
};

struct DemeanedPanel {
  int n = 0, T = 0, p = 0;
  Matrix y_tilde, d_tilde;  // n x T
  Matrix x_tilde;           // (n*T) x p
  bool cross_section = false;  // T == 1: unit means removed only
};

// Two-way within transform: z - row means - column means + grand mean.
Matrix within_transform(const Matrix& z);

// Applies the within transform to y, d and every covariate column. With
// T == 1 falls back to cross-sectional demeaning.
DemeanedPanel demean_panel(const PanelDataset& data);

struct CsvSchema {
  std::string id = "id";
  std::string time = "time";
  std::string y = "y";
  std::string d = "d";
  std::string x_prefix = "x";
};

// Long-format CSV with a header. Unit/period labels are mapped to contiguous
// indices in order of first appearance; the panel must be balanced.
PanelDataset load_csv(const std::string& path, const CsvSchema& schema = {});

}  // namespace factorlasso
