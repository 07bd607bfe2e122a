#ifndef ORCA_MARIMA_HPP
#define ORCA_MARIMA_HPP

#include "orca/model_spec.hpp"

#include <vector>

namespace orca {

/// Applies the difference operator `d` times along rows.
Matrix difference(const Matrix& series, int d);

/// Stacked regression rows of a VAR(p): each row of `regressors` is
/// [y_{t-1}', ..., y_{t-p}'] and the matching row of `targets` is y_t'.
struct VarDesign {
  Matrix regressors;
  Matrix targets;
};

/// Builds the design over every series after `d`-fold differencing.
VarDesign var_design(const std::vector<Matrix>& series, int p, int d);

/// Least squares coefficients B (p*dim x dim) with targets ~ regressors * B.
/// Falls back to a 1e-6 ridge when the normal matrix is singular.
Matrix fit_var(const VarDesign& design);

class MarimaModel final : public FamilyModel {
 public:
  /// `seq_len` is the scoring window length, kept for cost accounting.
  MarimaModel(int p, int d, Matrix coefficients, int seq_len);
  static MarimaModel from_parameters(const std::vector<std::int64_t>& structure, const Vector& params);

  int order() const { return p_; }
  int differences() const { return d_; }
  int dim() const { return static_cast<int>(coef_.cols()); }
  const Matrix& coefficients() const { return coef_; }

  /// One-step-ahead residuals of a (normalized) series, one row per
  /// predicted step.
  Matrix residuals(const Matrix& series) const;

  ModelFamily family() const override { return ModelFamily::MARIMA; }
  /// Mean Euclidean norm of the one-step residuals over the window.
  double raw_error(const Sample& normalized) const override;
  Vector parameters() const override;
  std::vector<std::int64_t> structure() const override;
  Eigen::Index activation_footprint() const override;

 private:
  int p_;
  int d_;
  Matrix coef_;
  int seq_len_;
};

}  // namespace orca

#endif  // ORCA_MARIMA_HPP
