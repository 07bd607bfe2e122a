#ifndef ORCA_OCSVM_HPP
#define ORCA_OCSVM_HPP

#include "orca/model_spec.hpp"

namespace orca {

/// RBF kernel exp(-gamma * |a - b|^2).
template <typename DerivedA, typename DerivedB>
double rbf_kernel(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                  double gamma) {
  return std::exp(-gamma * (a - b).squaredNorm());
}

/// Solution of the one-class dual
///   min 1/2 a'Ka  s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1
/// restricted to its support vectors. decision(x) = sum coef_i K(sv_i, x);
/// points with decision(x) < rho fall outside the estimated support.
struct OcsvmSolution {
  Matrix support;  // n_sv x dim, one support vector per row
  Vector coef;
  double rho = 0.0;
  double gamma = 1.0;
  long iterations = 0;
  double kkt_gap = 0.0;
};

struct OcsvmSolverOptions {
  double tolerance = 1e-9;
  long max_iterations = 0;  // 0 -> max(10'000'000, 100 n)
  /// Gap above which an iteration cap is reported as NonConvergence.
  double fail_tolerance = 1e-3;
};

/// SMO with second-order working-set selection. Rows of `x` are samples.
OcsvmSolution solve_ocsvm(const Matrix& x, double nu, double gamma,
                          const OcsvmSolverOptions& options = {});

template <typename Derived>
double ocsvm_decision(const OcsvmSolution& sol, const Eigen::MatrixBase<Derived>& x) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < sol.support.rows(); ++i)
    sum += sol.coef[i] * rbf_kernel(sol.support.row(i).transpose(), x, sol.gamma);
  return sum;
}

class OcsvmModel final : public FamilyModel {
 public:
  explicit OcsvmModel(OcsvmSolution solution) : sol_(std::move(solution)) {}
  static OcsvmModel from_parameters(const std::vector<std::int64_t>& structure, const Vector& params);

  const OcsvmSolution& solution() const { return sol_; }

  ModelFamily family() const override { return ModelFamily::OCSVM; }
  /// max(0, rho - decision(x))
  double raw_error(const Sample& normalized) const override;
  Vector parameters() const override;
  std::vector<std::int64_t> structure() const override;
  Eigen::Index activation_footprint() const override;

 private:
  OcsvmSolution sol_;
};

}  // namespace orca

#endif  // ORCA_OCSVM_HPP
