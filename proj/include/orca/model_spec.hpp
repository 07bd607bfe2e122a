#ifndef ORCA_MODEL_SPEC_HPP
#define ORCA_MODEL_SPEC_HPP

#include "orca/core.hpp"
#include "orca/telemetry.hpp"

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

namespace orca {

enum class ModelFamily : std::uint8_t { OCSVM = 0, MARIMA = 1, GANED = 2, LSTMED = 3 };

inline constexpr int kFamilyCount = 4;

std::string_view to_string(ModelFamily family);
/// Throws UnknownFamily.
ModelFamily parse_family(std::string_view text);

struct OcsvmHyper {
  double nu = 0.1;
  /// Non-positive selects 1 / dim at training time.
  double rbf_gamma = 0.0;
};

/// q is fixed to zero: the model is a differenced vector autoregression.
struct MarimaHyper {
  int p = 2;
  int d = 0;
  int q = 0;
};

struct GanEdHyper {
  std::vector<int> layers{64, 32};
  int latent_dim = 16;
  int epochs = 100;
  double lr = 0.01;
  int batch = 32;
  double lambda_rec = 1.0;
  /// Weight of the reconstruction residual in the anomaly score.
  double alpha = 0.9;
};

struct LstmEdHyper {
  std::vector<int> layers{64, 32};
  int epochs = 50;
  double lr = 0.05;
  int batch = 16;
};

/// Alternative index equals the ModelFamily tag.
using Hyperparams = std::variant<OcsvmHyper, MarimaHyper, GanEdHyper, LstmEdHyper>;

struct ModelSpec {
  Hyperparams hyper;

  ModelFamily family() const { return static_cast<ModelFamily>(hyper.index()); }
  static ModelSpec defaults(ModelFamily family);
  /// Throws InvalidArgument on out-of-range hyperparameters.
  void validate() const;
};

inline constexpr int kDefaultDimThreshold = 20;
inline constexpr double kDefaultAlarmThreshold = 0.9;

/// Routes a behavior target by its two data attributes:
/// low-dim vectors -> OC-SVM, low-dim series -> MARIMA,
/// high-dim vectors -> GAN-ED, high-dim series -> LSTM-ED.
ModelFamily select_family(bool time_series, int dim, int dim_threshold = kDefaultDimThreshold);

struct AnomalyScore {
  double value = 0.0;
  double raw = 0.0;
  bool alarming = false;
};

/// Per-epoch training trace. `loss` is the total minimized objective
/// (generator side for GAN-ED); `holdout_reconstruction` is measured on the
/// calibration split after each epoch.
struct TrainingReport {
  std::vector<double> loss;
  std::vector<double> discriminator_loss;
  std::vector<double> holdout_reconstruction;
};

/// Family-specific trained scorer. Implementations are immutable once built.
class FamilyModel {
 public:
  virtual ~FamilyModel() = default;

  virtual ModelFamily family() const = 0;
  /// Raw, non-negative error of one normalized sample.
  virtual double raw_error(const Sample& normalized) const = 0;
  virtual Vector parameters() const = 0;
  /// Integers needed to rebuild the model from parameters().
  virtual std::vector<std::int64_t> structure() const = 0;
  /// Peak number of doubles live during one scoring pass, parameters excluded.
  virtual Eigen::Index activation_footprint() const = 0;
};

}  // namespace orca

#endif  // ORCA_MODEL_SPEC_HPP
