#pragma once

#include <vector>

#include <Eigen/Dense>

namespace kmv {

/// Chain of block dimensions d_0 >= d_1 >= ... >= d_r >= 1.
struct BlockStructure {
  std::vector<int> dims;
  int N = 0;
  int d = 0;
  int r = 0;
  /// cum[i] = d_0 + ... + d_i, so block i occupies [cum[i] - dims[i], cum[i]).
  std::vector<int> cum;
  int Q = 0;

  static BlockStructure FromDims(std::vector<int> dims);

  int begin(int i) const { return cum[i] - dims[i]; }
  int end(int i) const { return cum[i]; }
  /// Block index of coordinate k.
  int block_of(int k) const;
  /// Dilation exponent 2i+1 of coordinate k.
  int weight_of(int k) const { return 2 * block_of(k) + 1; }
};

/// Linear Kolmogorov model dZ = B Z dt + sigma dW with sigma = [I_d; 0].
struct KolmogorovModel {
  BlockStructure blocks;
  Eigen::MatrixXd B;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd A;
  bool hypoelliptic = false;

  /// Infers the chain from the bottom N-d rows of B; throws if B is not of
  /// the required block form.
  static KolmogorovModel Make(const Eigen::MatrixXd& B, int d);

  /// Builds without block inference (used for degenerate test models).
  static KolmogorovModel MakeUnchecked(const Eigen::MatrixXd& B, int d);

  int N() const { return static_cast<int>(B.rows()); }
  int d() const { return static_cast<int>(sigma.cols()); }
  Eigen::MatrixXd B0() const { return B.topRows(d()); }
  Eigen::MatrixXd B1() const { return B.bottomRows(N() - d()); }
  double trace() const { return B.trace(); }
};

BlockStructure infer_blocks(const Eigen::MatrixXd& B1, int d);

bool check_hormander(const KolmogorovModel& model);
bool check_hormander(const Eigen::MatrixXd& B, const Eigen::MatrixXd& sigma);

double aniso_norm(const Eigen::VectorXd& z, const BlockStructure& blocks);

Eigen::VectorXd dilate(double lambda, const Eigen::VectorXd& z,
                       const BlockStructure& blocks);

/// e^{tB}; exact polynomial when B is nilpotent, Pade scaling-and-squaring
/// otherwise.
Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& B, double t);

/// Numerical rank with tolerance 1e-10 * largest singular value.
int numerical_rank(const Eigen::MatrixXd& M);

/// Kinetic drift [[0,0],[I,0]] in dimension 2d.
Eigen::MatrixXd kinetic_drift(int d);
/// Scalar chain v -> x_1 -> ... -> x_{n-1} in dimension n.
Eigen::MatrixXd chain_drift(int n);

}  // namespace kmv
