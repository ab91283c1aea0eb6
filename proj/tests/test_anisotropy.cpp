#include <doctest.h>

#include "kmv/anisotropy.hpp"
#include "kmv/error.hpp"

using namespace kmv;

TEST_CASE("kinetic drift infers a two-block chain") {
  auto m = KolmogorovModel::Make(kinetic_drift(2), 2);
  CHECK(m.blocks.dims == std::vector<int>{2, 2});
  CHECK(m.blocks.r == 1);
  CHECK(m.blocks.Q == 2 + 3 * 2);
  CHECK(m.hypoelliptic);
  CHECK(m.blocks.weight_of(0) == 1);
  CHECK(m.blocks.weight_of(3) == 3);
}

TEST_CASE("scalar chain of length 3") {
  auto m = KolmogorovModel::Make(chain_drift(3), 1);
  CHECK(m.blocks.dims == std::vector<int>{1, 1, 1});
  CHECK(m.blocks.Q == 1 + 3 + 5);
  CHECK(check_hormander(m));
}

TEST_CASE("malformed drifts are rejected") {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(KolmogorovModel::Make(B, 1), Error);  // x decoupled from v
  Eigen::MatrixXd C = chain_drift(3);
  C(2, 0) = 1.0;  // skips a level
  CHECK_THROWS_AS(KolmogorovModel::Make(C, 1), Error);
  auto degenerate = KolmogorovModel::MakeUnchecked(B, 1);
  CHECK_FALSE(check_hormander(degenerate));
}

TEST_CASE("dilation is homogeneous for the anisotropic norm") {
  auto m = KolmogorovModel::Make(chain_drift(3), 1);
  Eigen::VectorXd z(3);
  z << 0.3, -1.7, 0.05;
  for (double lam : {0.25, 2.0, 7.5})
    CHECK(aniso_norm(dilate(lam, z, m.blocks), m.blocks) == doctest::Approx(lam * aniso_norm(z, m.blocks)).epsilon(1e-12));
}

TEST_CASE("matrix exponential: nilpotent polynomial agrees with Pade") {
  Eigen::MatrixXd B = chain_drift(4);
  Eigen::MatrixXd E = matrix_exp(B, 0.7);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Identity(4, 4);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(4, 4);
  for (int k = 1; k < 4; ++k) {
    term = term * B * 0.7 / k;
    ref += term;
  }
  CHECK((E - ref).norm() < 1e-14);
  Eigen::MatrixXd A(2, 2);
  A << -1.0, 0.5, 0.2, -0.3;
  Eigen::MatrixXd EA = matrix_exp(A, 1.3);
  // e^{tA} e^{-tA} = I
  CHECK((EA * matrix_exp(A, -1.3) - Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-13);
}
