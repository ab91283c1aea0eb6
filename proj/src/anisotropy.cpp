#include "kmv/anisotropy.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "kmv/error.hpp"

namespace kmv {

BlockStructure BlockStructure::FromDims(std::vector<int> dims) {
  KMV_DEMAND(!dims.empty(), "block chain must be non-empty");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    KMV_DEMAND(dims[i] >= 1, "block dimensions must be positive");
    if (i > 0) KMV_DEMAND(dims[i] <= dims[i - 1], "block dimensions must be non-increasing");
  }
  BlockStructure out;
  out.dims = std::move(dims);
  out.r = static_cast<int>(out.dims.size()) - 1;
  out.d = out.dims[0];
  out.cum.resize(out.dims.size());
  std::partial_sum(out.dims.begin(), out.dims.end(), out.cum.begin());
  out.N = out.cum.back();
  out.Q = 0;
  for (int i = 0; i <= out.r; ++i) out.Q += out.dims[i] * (2 * i + 1);
  return out;
}

int BlockStructure::block_of(int k) const {
  for (int i = 0; i <= r; ++i) {
    if (k < cum[i]) return i;
  }
  throw Error(ErrorKind::kInvalidArgument, "coordinate index out of range");
}

int numerical_rank(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double tol = 1e-10 * s(0);
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) {
    if (s(i) > tol) ++rank;
  }
  return rank;
}

BlockStructure infer_blocks(const Eigen::MatrixXd& B1, int d) {
  const int rows = static_cast<int>(B1.rows());
  const int N = static_cast<int>(B1.cols());
  KMV_DEMAND(d >= 1, "d must be at least 1");
  KMV_DEMAND(N > d, "N must exceed d");
  KMV_DEMAND(rows == N - d, "B1 must have N-d rows");

  // Zero test consistent with the rank tolerance, scaled by the matrix size.
  const double scale = std::max(1.0, B1.cwiseAbs().maxCoeff());
  const double zero_tol = 1e-12 * scale;

  std::vector<int> dims{d};
  int row0 = 0;      // first unassigned row of B1
  int col_begin = 0;  // column range of the previous block
  while (row0 < rows) {
    const int prev = dims.back();
    const int remaining = rows - row0;
    bool pattern_ok_any = false;
    int chosen = 0;
    for (int di = std::min(prev, remaining); di >= 1; --di) {
      // Rows below the candidate block must vanish on every column block up
      // to and including the previous one.
      const int below = remaining - di;
      bool pattern_ok = true;
      if (below > 0) {
        const double m = B1.block(row0 + di, 0, below, col_begin + prev).cwiseAbs().maxCoeff();
        pattern_ok = m <= zero_tol;
      }
      if (!pattern_ok) continue;
      pattern_ok_any = true;
      if (numerical_rank(B1.block(row0, col_begin, di, prev)) == di) {
        chosen = di;
        break;
      }
    }
    if (!pattern_ok_any) {
      KMV_THROW(kNotBlockTriangular,
                "rows " + std::to_string(row0 + d) + ".." + std::to_string(N - 1) +
                    " of B have entries below the sub-diagonal block band");
    }
    if (chosen == 0) {
      KMV_THROW(kRankDeficientBlock, "sub-diagonal block " + std::to_string(dims.size()) +
                                         " has rank below its row dimension");
    }
    // Entries of the candidate rows to the left of the previous block must be
    // zero as well (block row i may only touch column blocks >= i-1).
    if (col_begin > 0) {
      const double m = B1.block(row0, 0, chosen, col_begin).cwiseAbs().maxCoeff();
      if (m > zero_tol) {
        KMV_THROW(kNotBlockTriangular, "block row " + std::to_string(dims.size()) +
                                           " has entries left of its sub-diagonal block");
      }
    }
    dims.push_back(chosen);
    col_begin += prev;
    row0 += chosen;
  }
  return BlockStructure::FromDims(dims);
}

bool check_hormander(const Eigen::MatrixXd& B, const Eigen::MatrixXd& sigma) {
  const int N = static_cast<int>(B.rows());
  const int d = static_cast<int>(sigma.cols());
  Eigen::MatrixXd K(N, N * d);
  Eigen::MatrixXd P = sigma;
  for (int k = 0; k < N; ++k) {
    K.middleCols(k * d, d) = P;
    P = B * P;
  }
  return numerical_rank(K) == N;
}

bool check_hormander(const KolmogorovModel& model) {
  return check_hormander(model.B, model.sigma);
}

KolmogorovModel KolmogorovModel::MakeUnchecked(const Eigen::MatrixXd& B, int d) {
  KMV_DEMAND(B.rows() == B.cols(), "B must be square");
  KMV_DEMAND(d >= 1 && d <= B.rows(), "d must lie in [1, N]");
  KolmogorovModel m;
  const int N = static_cast<int>(B.rows());
  m.B = B;
  m.sigma = Eigen::MatrixXd::Zero(N, d);
  m.sigma.topRows(d).setIdentity();
  m.A = m.sigma * m.sigma.transpose();
  m.hypoelliptic = check_hormander(B, m.sigma);
  if (d == N) {
    m.blocks = BlockStructure::FromDims({d});
  } else {
    try {
      m.blocks = infer_blocks(B.bottomRows(N - d), d);
    } catch (const Error&) {
      m.blocks = BlockStructure{};  // no admissible chain; geometry undefined
    }
  }
  return m;
}

KolmogorovModel KolmogorovModel::Make(const Eigen::MatrixXd& B, int d) {
  KMV_DEMAND(B.rows() == B.cols(), "B must be square");
  const int N = static_cast<int>(B.rows());
  KMV_DEMAND(d >= 1 && d <= N, "d must lie in [1, N]");
  KolmogorovModel m = MakeUnchecked(B, d);
  if (d < N) m.blocks = infer_blocks(B.bottomRows(N - d), d);
  return m;
}

double aniso_norm(const Eigen::VectorXd& z, const BlockStructure& blocks) {
  KMV_DEMAND(z.size() == blocks.N, "point dimension mismatch");
  double s = 0.0;
  for (int i = 0; i <= blocks.r; ++i) {
    const double n = z.segment(blocks.begin(i), blocks.dims[i]).norm();
    s += std::pow(n, 1.0 / (2 * i + 1));
  }
  return s;
}

Eigen::VectorXd dilate(double lambda, const Eigen::VectorXd& z, const BlockStructure& blocks) {
  KMV_DEMAND(lambda > 0, "dilation factor must be positive");
  KMV_DEMAND(z.size() == blocks.N, "point dimension mismatch");
  Eigen::VectorXd out = z;
  for (int i = 0; i <= blocks.r; ++i) {
    out.segment(blocks.begin(i), blocks.dims[i]) *= std::pow(lambda, 2 * i + 1);
  }
  return out;
}

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& B, double t) {
  KMV_DEMAND(B.rows() == B.cols(), "matrix_exp needs a square matrix");
  const int N = static_cast<int>(B.rows());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(N, N);
  if (t == 0.0 || N == 0) return I;
  const double bnorm = std::max(1.0, B.cwiseAbs().maxCoeff());
  Eigen::MatrixXd P = I;
  for (int k = 1; k <= N; ++k) {
    P = P * B;
    if (P.cwiseAbs().maxCoeff() <= 1e-14 * std::pow(bnorm, k)) {
      // B^k = 0: sum the finite series in Horner form.
      Eigen::MatrixXd S = I;
      for (int j = k - 1; j >= 1; --j) S = I + (t / j) * B * S;
      return S;
    }
  }
  return Eigen::MatrixXd(t * B).exp();
}

Eigen::MatrixXd kinetic_drift(int d) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  B.block(d, 0, d, d).setIdentity();
  return B;
}

Eigen::MatrixXd chain_drift(int n) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) B(i, i - 1) = 1.0;
  return B;
}

}  // namespace kmv
