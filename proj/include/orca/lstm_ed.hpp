#ifndef ORCA_LSTM_ED_HPP
#define ORCA_LSTM_ED_HPP

#include "orca/model_spec.hpp"
#include "orca/nn.hpp"

namespace orca {

/// Sequence batch: one (dim x batch) matrix per time step.
using SequenceBatch = std::vector<Matrix>;

/// Converts seq_len x dim series into a time-major batch.
SequenceBatch to_batch(const std::vector<const Matrix*>& series);

/// LSTM encoder-decoder reconstructor. The encoder is a stack of LSTM layers
/// over the input; the decoder is a matching stack with no external input,
/// initialized layer by layer from the encoder's final (h, c) and followed by
/// a linear read-out. Decoder step t reconstructs input step T-1-t.
class LstmEdNetwork {
 public:
  LstmEdNetwork(int dim, std::vector<int> layers);

  int dim() const { return dim_; }
  const std::vector<int>& layers() const { return widths_; }
  Eigen::Index parameter_count() const { return total_; }

  Vector init(std::mt19937_64& rng) const;

  /// Mean squared reconstruction error over steps, features and batch.
  /// Adds the gradient into `grad` when non-null.
  double loss(const Vector& params, const SequenceBatch& x, Vector* grad) const;

  /// Reconstruction of one seq_len x dim series, in input order.
  Matrix reconstruct(const Vector& params, const Matrix& series) const;

  /// Per-window mean squared reconstruction error.
  double window_error(const Vector& params, const Matrix& series) const;

 private:
  struct Forward;
  Forward run(const Vector& params, const SequenceBatch& x, bool keep_tape) const;

  int dim_;
  std::vector<int> widths_;
  std::vector<nn::Lstm> encoder_;
  std::vector<nn::Lstm> decoder_;
  nn::Mlp readout_;
  std::vector<Eigen::Index> enc_off_;
  std::vector<Eigen::Index> dec_off_;
  Eigen::Index out_off_ = 0;
  Eigen::Index total_ = 0;
};

struct LstmEdFit {
  Vector params;
  TrainingReport report;
};

LstmEdFit fit_lstm_ed(const LstmEdNetwork& net, const std::vector<Matrix>& train,
                      const std::vector<Matrix>& holdout, const LstmEdHyper& hyper, std::uint64_t seed);

class LstmEdModel final : public FamilyModel {
 public:
  LstmEdModel(LstmEdNetwork net, Vector params, int seq_len);
  static LstmEdModel from_parameters(const std::vector<std::int64_t>& structure, const Vector& params);

  const LstmEdNetwork& network() const { return net_; }

  ModelFamily family() const override { return ModelFamily::LSTMED; }
  double raw_error(const Sample& normalized) const override;
  Vector parameters() const override { return params_; }
  std::vector<std::int64_t> structure() const override;
  Eigen::Index activation_footprint() const override;

 private:
  LstmEdNetwork net_;
  Vector params_;
  int seq_len_;
};

}  // namespace orca

#endif  // ORCA_LSTM_ED_HPP
