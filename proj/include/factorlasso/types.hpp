#pragma once

#include <Eigen/Dense>
#include <vector>

namespace factorlasso {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexSet = std::vector<int>;  // sorted, no duplicates

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

}  // namespace factorlasso
