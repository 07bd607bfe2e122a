#include "orca/marima.hpp"

#include <cmath>

namespace orca {

Matrix difference(const Matrix& series, int d) {
  Matrix out = series;
  for (int k = 0; k < d; ++k) {
    if (out.rows() < 2) return Matrix(0, series.cols());
    out = (out.bottomRows(out.rows() - 1) - out.topRows(out.rows() - 1)).eval();
  }
  return out;
}

VarDesign var_design(const std::vector<Matrix>& series, int p, int d) {
  if (p < 1 || d < 0) throw Error(ErrorCode::InvalidArgument, "VAR needs p >= 1 and d >= 0");
  if (series.empty()) throw Error(ErrorCode::InsufficientData, "no series for VAR design");
  const Eigen::Index dim = series.front().cols();
  Eigen::Index rows = 0;
  std::vector<Matrix> diffed;
  diffed.reserve(series.size());
  for (const auto& s : series) {
    if (s.cols() != dim) throw Error(ErrorCode::InvalidArgument, "series dimensions differ");
    diffed.push_back(difference(s, d));
    rows += std::max<Eigen::Index>(0, diffed.back().rows() - p);
  }
  VarDesign out{Matrix(rows, p * dim), Matrix(rows, dim)};
  Eigen::Index r = 0;
  for (const auto& w : diffed) {
    for (Eigen::Index t = p; t < w.rows(); ++t, ++r) {
      for (int lag = 1; lag <= p; ++lag) out.regressors.block(r, (lag - 1) * dim, 1, dim) = w.row(t - lag);
      out.targets.row(r) = w.row(t);
    }
  }
  return out;
}

Matrix fit_var(const VarDesign& design) {
  const Eigen::Index k = design.regressors.cols();
  if (design.regressors.rows() == 0) throw Error(ErrorCode::InsufficientData, "empty VAR design");
  const Matrix normal = design.regressors.transpose() * design.regressors;
  const Matrix rhs = design.regressors.transpose() * design.targets;

  Eigen::LDLT<Matrix> ldlt(normal);
  const Vector dvals = ldlt.vectorD().cwiseAbs();
  const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                        dvals.minCoeff() <= 1e-12 * std::max(1.0, dvals.maxCoeff());
  Matrix coef;
  if (!singular) {
    coef = ldlt.solve(rhs);
  } else {
    Eigen::LDLT<Matrix> ridge(normal + 1e-6 * Matrix::Identity(k, k));
    if (ridge.info() != Eigen::Success) throw Error(ErrorCode::SingularDesign, "ridge-regularized VAR fit failed");
    coef = ridge.solve(rhs);
  }
  if (!coef.allFinite()) throw Error(ErrorCode::SingularDesign, "VAR coefficients not finite");
  return coef;
}

MarimaModel::MarimaModel(int p, int d, Matrix coefficients, int seq_len)
    : p_(p), d_(d), coef_(std::move(coefficients)), seq_len_(seq_len) {
  if (coef_.rows() != static_cast<Eigen::Index>(p_) * coef_.cols())
    throw Error(ErrorCode::InvalidArgument, "VAR coefficient shape mismatch");
}

Matrix MarimaModel::residuals(const Matrix& series) const {
  const Matrix w = difference(series, d_);
  const Eigen::Index dim = coef_.cols();
  const Eigen::Index n = w.rows() - p_;
  if (n <= 0) return Matrix(0, dim);
  Matrix res(n, dim);
  for (Eigen::Index t = p_; t < w.rows(); ++t) {
    Eigen::RowVectorXd pred = Eigen::RowVectorXd::Zero(dim);
    for (int lag = 1; lag <= p_; ++lag)
      pred.noalias() += w.row(t - lag) * coef_.middleRows((lag - 1) * dim, dim);
    res.row(t - p_) = w.row(t) - pred;
  }
  return res;
}

double MarimaModel::raw_error(const Sample& normalized) const {
  const Matrix res = residuals(std::get<SequenceSample>(normalized).series);
  if (res.rows() == 0) return 0.0;
  return res.rowwise().norm().mean();
}

Vector MarimaModel::parameters() const {
  return Eigen::Map<const Vector>(coef_.data(), coef_.size());
}

std::vector<std::int64_t> MarimaModel::structure() const {
  return {p_, d_, coef_.cols(), seq_len_};
}

Eigen::Index MarimaModel::activation_footprint() const {
  // differenced copy plus residual matrix
  return 2 * static_cast<Eigen::Index>(seq_len_) * coef_.cols();
}

MarimaModel MarimaModel::from_parameters(const std::vector<std::int64_t>& structure, const Vector& params) {
  if (structure.size() != 4 || structure[0] < 1 || structure[1] < 0 || structure[2] < 1)
    throw Error(ErrorCode::CorruptStore, "bad MARIMA structure descriptor");
  const Eigen::Index p = structure[0], dim = structure[2];
  if (params.size() != p * dim * dim) throw Error(ErrorCode::CorruptStore, "MARIMA parameter length mismatch");
  Matrix coef = Eigen::Map<const Matrix>(params.data(), p * dim, dim);
  return MarimaModel(static_cast<int>(p), static_cast<int>(structure[1]), std::move(coef),
                     static_cast<int>(structure[3]));
}

}  // namespace orca
