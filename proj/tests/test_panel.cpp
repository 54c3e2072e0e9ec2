#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <string>

#include "factorlasso/error.hpp"
#include "factorlasso/panel.hpp"
#include "factorlasso/rng.hpp"

using namespace factorlasso;

namespace {

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& body) {
    static int counter = 0;
    path = "test_panel_" + std::to_string(counter++) + ".csv";
    std::ofstream out(path);
    out << body;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::usage;  // sentinel: "did not throw"
}

}  // namespace

TEST_CASE("within transform annihilates constants and additive effects") {
  Matrix z = Matrix::Constant(4, 3, 2.5);
  CHECK(within_transform(z).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  Rng rng(11);
  const Matrix base = normal_matrix(rng, 5, 4);
  const Vector g = normal_vector(rng, 5);
  const Vector nu = normal_vector(rng, 4);
  const Matrix shifted =
      base + g * Matrix::Ones(1, 4) + Matrix::Ones(5, 1) * nu.transpose();
  CHECK((within_transform(shifted) - within_transform(base))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
}

TEST_CASE("within transform on a 2x2 panel") {
  Matrix z(2, 2);
  z << 1, 2, 3, 5;
  const Matrix w = within_transform(z);
  CHECK(w(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(w(0, 1) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(w(1, 0) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(w(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("within transform idempotent and linear") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix z1 = normal_matrix(rng, 6, 5);
    const Matrix z2 = normal_matrix(rng, 6, 5);
    const Matrix w1 = within_transform(z1);
    CHECK((within_transform(w1) - w1).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix lhs = within_transform(1.7 * z1 - 0.4 * z2);
    const Matrix rhs = 1.7 * w1 - 0.4 * within_transform(z2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("within transform rejects bad input") {
  Matrix nan_mat = Matrix::Zero(2, 2);
  nan_mat(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of([&] { within_transform(nan_mat); }) == ErrorCode::invalid_data);
  Matrix one_row = Matrix::Zero(1, 3);
  CHECK(code_of([&] { within_transform(one_row); }) == ErrorCode::dimension);
}

TEST_CASE("demean_panel zeros constants and centers everything") {
  PanelDataset data;
  data.n = 3;
  data.T = 4;
  data.p = 2;
  data.y = Matrix::Constant(3, 4, 7.0);
  data.d = Matrix::Constant(3, 4, -1.0);
  data.x = Matrix::Constant(12, 2, 0.5);
  const DemeanedPanel dm = demean_panel(data);
  CHECK(dm.y_tilde.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(dm.d_tilde.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(dm.x_tilde.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK_FALSE(dm.cross_section);

  Rng rng(5);
  data.y = normal_matrix(rng, 3, 4);
  data.d = normal_matrix(rng, 3, 4);
  data.x = normal_matrix(rng, 12, 2);
  const DemeanedPanel dm2 = demean_panel(data);
  CHECK(dm2.y_tilde.rowwise().mean().cwiseAbs().maxCoeff() < 1e-10);
  CHECK(dm2.y_tilde.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
  for (int j = 0; j < 2; ++j) {
    const Eigen::Map<const Matrix> panel(dm2.x_tilde.col(j).data(), 3, 4);
    CHECK(panel.rowwise().mean().cwiseAbs().maxCoeff() < 1e-10);
    CHECK(panel.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("demean_panel cross-section mode at T=1") {
  PanelDataset data;
  data.n = 3;
  data.T = 1;
  data.p = 1;
  data.y = Matrix(3, 1);
  data.y << 1, 2, 3;
  data.d = Matrix::Zero(3, 1);
  data.x = Matrix::Zero(3, 1);
  const DemeanedPanel dm = demean_panel(data);
  CHECK(dm.cross_section);
  CHECK(dm.y_tilde(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(dm.y_tilde(1, 0) == doctest::Approx(0.0));
  CHECK(dm.y_tilde(2, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("load_csv reads a small balanced panel") {
  TempCsv file(
      "id,time,y,d,x1\n"
      "a,1,1.0,0.1,5\n"
      "a,2,2.0,0.2,6\n"
      "b,1,3.0,0.3,7\n"
      "b,2,4.0,0.4,8\n");
  const PanelDataset data = load_csv(file.path);
  CHECK(data.n == 2);
  CHECK(data.T == 2);
  CHECK(data.p == 1);
  CHECK(data.y(0, 0) == 1.0);
  CHECK(data.y(1, 1) == 4.0);
  CHECK(data.d(1, 0) == 0.3);
  CHECK(data.xv(0, 1, 0) == 6.0);
}

TEST_CASE("load_csv keeps covariate order x1..x5") {
  TempCsv file(
      "id,time,y,d,x1,x2,x3,x4,x5\n"
      "a,1,0,0,1,2,3,4,5\n"
      "b,1,0,0,6,7,8,9,10\n");
  const PanelDataset data = load_csv(file.path);
  CHECK(data.p == 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(data.xv(0, 0, j) == 1.0 + j);
    CHECK(data.xv(1, 0, j) == 6.0 + j);
  }
}

TEST_CASE("load_csv error paths") {
  TempCsv unbalanced(
      "id,time,y,d,x1\n"
      "a,1,1,0,1\n"
      "a,2,1,0,1\n"
      "b,1,1,0,1\n");
  CHECK(code_of([&] { load_csv(unbalanced.path); }) ==
        ErrorCode::unbalanced_panel);

  TempCsv duplicate(
      "id,time,y,d,x1\n"
      "a,1,1,0,1\n"
      "a,1,2,0,1\n"
      "b,1,1,0,1\n"
      "b,2,1,0,1\n");
  CHECK(code_of([&] { load_csv(duplicate.path); }) == ErrorCode::duplicate_cell);

  TempCsv garbled(
      "id,time,y,d,x1\n"
      "a,1,1,0,1\n"
      "b,1,oops,0,1\n");
  try {
    load_csv(garbled.path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("y") != std::string::npos);
  }

  TempCsv no_header("1,2,3\n");
  CHECK(code_of([&] { load_csv(no_header.path); }) != ErrorCode::usage);

  CHECK(code_of([] { load_csv("does_not_exist.csv"); }) == ErrorCode::io);
}

TEST_CASE("validate rejects tiny or non-finite panels") {
  PanelDataset data;
  data.n = 1;
  data.T = 2;
  data.p = 1;
  data.y = Matrix::Zero(1, 2);
  data.d = Matrix::Zero(1, 2);
  data.x = Matrix::Zero(2, 1);
  CHECK(code_of([&] { data.validate(); }) == ErrorCode::dimension);

  data.n = 2;
  data.y = Matrix::Zero(2, 2);
  data.d = Matrix::Zero(2, 2);
  data.x = Matrix::Zero(4, 1);
  data.x(3, 0) = std::numeric_limits<double>::infinity();
  CHECK(code_of([&] { data.validate(); }) == ErrorCode::invalid_data);
}
