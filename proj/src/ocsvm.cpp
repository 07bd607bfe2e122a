#include "orca/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace orca {

namespace {
constexpr double kTau = 1e-12;
}

OcsvmSolution solve_ocsvm(const Matrix& x, double nu, double gamma, const OcsvmSolverOptions& options) {
  const Eigen::Index n = x.rows();
  if (n < 1) throw Error(ErrorCode::InsufficientData, "one-class SVM needs samples");
  if (!(nu > 0.0 && nu <= 1.0)) throw Error(ErrorCode::InvalidArgument, "nu must lie in (0, 1]");
  if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "rbf gamma must be positive");

  // Kernel matrix from squared norms.
  const Vector sq = x.rowwise().squaredNorm();
  Matrix q = -2.0 * x * x.transpose();
  q.colwise() += sq;
  q.rowwise() += sq.transpose();
  q = (-gamma * q.array()).exp().matrix();
  q.diagonal().setOnes();

  // Work on the libsvm scale: 0 <= a_i <= 1, sum a = nu n.
  const double total = nu * static_cast<double>(n);
  Vector alpha = Vector::Zero(n);
  const auto n_full = static_cast<Eigen::Index>(std::floor(total));
  for (Eigen::Index i = 0; i < std::min(n_full, n); ++i) alpha[i] = 1.0;
  if (n_full < n) alpha[n_full] = total - static_cast<double>(n_full);

  Vector grad = q * alpha;
  const long cap = options.max_iterations > 0 ? options.max_iterations
                                              : std::max<long>(10'000'000L, 100L * static_cast<long>(n));
  long iter = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (; iter < cap; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (alpha[t] < 1.0 && -grad[t] >= gmax) {
        gmax = -grad[t];
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (alpha[t] <= 0.0) continue;
      gmax2 = std::max(gmax2, grad[t]);
      if (i < 0) continue;
      const double diff = gmax + grad[t];
      if (diff > 0.0) {
        double quad = q(i, i) + q(t, t) - 2.0 * q(i, t);
        if (quad <= 0.0) quad = kTau;
        const double obj = -diff * diff / quad;
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    gap = gmax + gmax2;
    if (gap < options.tolerance || i < 0 || j < 0) break;

    double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
    if (quad <= 0.0) quad = kTau;
    const double old_i = alpha[i], old_j = alpha[j];
    const double delta = (grad[i] - grad[j]) / quad;
    const double sum = old_i + old_j;
    double ai = old_i - delta, aj = old_j + delta;
    if (sum > 1.0) {
      if (ai > 1.0) { ai = 1.0; aj = sum - 1.0; }
    } else {
      if (aj < 0.0) { aj = 0.0; ai = sum; }
    }
    if (sum > 1.0) {
      if (aj > 1.0) { aj = 1.0; ai = sum - 1.0; }
    } else {
      if (ai < 0.0) { ai = 0.0; aj = sum; }
    }
    alpha[i] = ai;
    alpha[j] = aj;
    grad += q.col(i) * (ai - old_i) + q.col(j) * (aj - old_j);
  }
  if (iter >= cap && gap > options.fail_tolerance)
    throw Error(ErrorCode::NonConvergence, "SMO hit iteration cap with KKT gap " + std::to_string(gap));

  // rho from free support vectors, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  int n_free = 0;
  for (Eigen::Index t = 0; t < n; ++t) {
    if (alpha[t] >= 1.0) {
      lb = std::max(lb, grad[t]);
    } else if (alpha[t] <= 0.0) {
      ub = std::min(ub, grad[t]);
    } else {
      ++n_free;
      sum_free += grad[t];
    }
  }
  const double rho = n_free > 0 ? sum_free / n_free : 0.5 * (ub + lb);

  OcsvmSolution sol;
  Eigen::Index n_sv = (alpha.array() > 0.0).count();
  sol.support.resize(n_sv, x.cols());
  sol.coef.resize(n_sv);
  for (Eigen::Index t = 0, k = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      sol.support.row(k) = x.row(t);
      sol.coef[k] = alpha[t] / total;
      ++k;
    }
  }
  sol.rho = rho / total;
  sol.gamma = gamma;
  sol.iterations = iter;
  sol.kkt_gap = gap;
  return sol;
}

double OcsvmModel::raw_error(const Sample& normalized) const {
  const auto& v = std::get<TelemetrySample>(normalized).values;
  return std::max(0.0, sol_.rho - ocsvm_decision(sol_, v));
}

Vector OcsvmModel::parameters() const {
  const Eigen::Index n = sol_.support.rows(), d = sol_.support.cols();
  Vector p(2 + n + n * d);
  p[0] = sol_.gamma;
  p[1] = sol_.rho;
  p.segment(2, n) = sol_.coef;
  for (Eigen::Index i = 0; i < n; ++i) p.segment(2 + n + i * d, d) = sol_.support.row(i).transpose();
  return p;
}

std::vector<std::int64_t> OcsvmModel::structure() const {
  return {sol_.support.rows(), sol_.support.cols()};
}

Eigen::Index OcsvmModel::activation_footprint() const {
  // one kernel row plus the input and difference vectors
  return sol_.support.rows() + 2 * sol_.support.cols();
}

OcsvmModel OcsvmModel::from_parameters(const std::vector<std::int64_t>& structure, const Vector& params) {
  if (structure.size() != 2 || structure[0] < 1 || structure[1] < 1)
    throw Error(ErrorCode::CorruptStore, "bad OC-SVM structure descriptor");
  const Eigen::Index n = structure[0], d = structure[1];
  if (params.size() != 2 + n + n * d) throw Error(ErrorCode::CorruptStore, "OC-SVM parameter length mismatch");
  OcsvmSolution sol;
  sol.gamma = params[0];
  sol.rho = params[1];
  sol.coef = params.segment(2, n);
  sol.support.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) sol.support.row(i) = params.segment(2 + n + i * d, d).transpose();
  return OcsvmModel(std::move(sol));
}

}  // namespace orca
