#include "orca/lstm_ed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace orca {

namespace {
constexpr double kGradClip = 5.0;
}

SequenceBatch to_batch(const std::vector<const Matrix*>& series) {
  if (series.empty()) return {};
  const Eigen::Index steps = series.front()->rows(), dim = series.front()->cols();
  const auto nb = static_cast<Eigen::Index>(series.size());
  SequenceBatch out(static_cast<std::size_t>(steps), Matrix(dim, nb));
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Matrix& s = *series[static_cast<std::size_t>(b)];
    if (s.rows() != steps || s.cols() != dim) throw Error(ErrorCode::InvalidArgument, "ragged sequence batch");
    for (Eigen::Index t = 0; t < steps; ++t) out[static_cast<std::size_t>(t)].col(b) = s.row(t).transpose();
  }
  return out;
}

LstmEdNetwork::LstmEdNetwork(int dim, std::vector<int> layers) : dim_(dim), widths_(std::move(layers)) {
  if (dim < 1 || widths_.empty()) throw Error(ErrorCode::InvalidArgument, "LSTM-ED needs dim >= 1 and layers");
  int in = dim;
  for (int w : widths_) {
    encoder_.emplace_back(in, w);
    enc_off_.push_back(total_);
    total_ += encoder_.back().parameter_count();
    in = w;
  }
  in = 0;
  for (int w : widths_) {
    decoder_.emplace_back(in, w);
    dec_off_.push_back(total_);
    total_ += decoder_.back().parameter_count();
    in = w;
  }
  readout_ = nn::Mlp({widths_.back(), dim}, nn::Activation::Linear, nn::Activation::Linear);
  out_off_ = total_;
  total_ += readout_.parameter_count();
}

Vector LstmEdNetwork::init(std::mt19937_64& rng) const {
  Vector p(total_);
  for (std::size_t l = 0; l < encoder_.size(); ++l)
    encoder_[l].init(p.segment(enc_off_[l], encoder_[l].parameter_count()), rng);
  for (std::size_t l = 0; l < decoder_.size(); ++l)
    decoder_[l].init(p.segment(dec_off_[l], decoder_[l].parameter_count()), rng);
  readout_.init(p.segment(out_off_, readout_.parameter_count()), rng);
  return p;
}

struct LstmEdNetwork::Forward {
  std::vector<nn::Lstm::Tape> enc_tapes;
  std::vector<nn::Lstm::Tape> dec_tapes;
  nn::Mlp::Tape readout_tape;
  Matrix prediction;  // dim x (steps * batch), step-major blocks
  Matrix target;
};

LstmEdNetwork::Forward LstmEdNetwork::run(const Vector& params, const SequenceBatch& x, bool keep_tape) const {
  const auto steps = static_cast<int>(x.size());
  const Eigen::Index nb = x.front().cols();
  Forward f;
  f.enc_tapes.resize(encoder_.size());
  f.dec_tapes.resize(decoder_.size());

  std::vector<Matrix> h_final(encoder_.size()), c_final(encoder_.size());
  std::vector<Matrix> seq = x;
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    const Matrix zero = Matrix::Zero(encoder_[l].hidden_size(), nb);
    const auto p = params.segment(enc_off_[l], encoder_[l].parameter_count());
    seq = encoder_[l].forward(p, seq, steps, zero, zero, keep_tape ? &f.enc_tapes[l] : nullptr, &c_final[l]);
    h_final[l] = seq.back();
  }
  seq.clear();
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const auto p = params.segment(dec_off_[l], decoder_[l].parameter_count());
    seq = decoder_[l].forward(p, seq, steps, h_final[l], c_final[l], keep_tape ? &f.dec_tapes[l] : nullptr);
  }
  Matrix top(widths_.back(), steps * nb);
  for (int t = 0; t < steps; ++t) top.middleCols(t * nb, nb) = seq[static_cast<std::size_t>(t)];
  f.prediction = readout_.forward(params.segment(out_off_, readout_.parameter_count()), top,
                                  keep_tape ? &f.readout_tape : nullptr);
  f.target.resize(dim_, steps * nb);
  for (int t = 0; t < steps; ++t) f.target.middleCols(t * nb, nb) = x[static_cast<std::size_t>(steps - 1 - t)];
  return f;
}

double LstmEdNetwork::loss(const Vector& params, const SequenceBatch& x, Vector* grad) const {
  if (x.empty()) return 0.0;
  const auto steps = static_cast<int>(x.size());
  const Eigen::Index nb = x.front().cols();
  Forward f = run(params, x, grad != nullptr);
  const Matrix diff = f.prediction - f.target;
  const double denom = static_cast<double>(diff.size());
  const double value = diff.squaredNorm() / denom;
  if (!grad) return value;

  const Matrix g_top = readout_.backward(params.segment(out_off_, readout_.parameter_count()), f.readout_tape,
                                         (2.0 / denom) * diff, grad->segment(out_off_, readout_.parameter_count()));
  std::vector<Matrix> g_seq(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) g_seq[static_cast<std::size_t>(t)] = g_top.middleCols(t * nb, nb);

  std::vector<Matrix> g_h0(decoder_.size()), g_c0(decoder_.size());
  for (std::size_t l = decoder_.size(); l-- > 0;) {
    const auto p = params.segment(dec_off_[l], decoder_[l].parameter_count());
    auto g = decoder_[l].backward(p, f.dec_tapes[l], g_seq, Matrix(), Matrix(),
                                  grad->segment(dec_off_[l], decoder_[l].parameter_count()));
    g_h0[l] = std::move(g.h0);
    g_c0[l] = std::move(g.c0);
    g_seq = std::move(g.inputs);
  }
  g_seq.clear();
  for (std::size_t l = encoder_.size(); l-- > 0;) {
    const auto p = params.segment(enc_off_[l], encoder_[l].parameter_count());
    auto g = encoder_[l].backward(p, f.enc_tapes[l], g_seq, g_h0[l], g_c0[l],
                                  grad->segment(enc_off_[l], encoder_[l].parameter_count()));
    g_seq = std::move(g.inputs);
  }
  return value;
}

Matrix LstmEdNetwork::reconstruct(const Vector& params, const Matrix& series) const {
  const SequenceBatch x = to_batch({&series});
  const Forward f = run(params, x, false);
  const Eigen::Index steps = series.rows();
  Matrix out(steps, dim_);
  for (Eigen::Index t = 0; t < steps; ++t) out.row(steps - 1 - t) = f.prediction.col(t).transpose();
  return out;
}

double LstmEdNetwork::window_error(const Vector& params, const Matrix& series) const {
  return (reconstruct(params, series) - series).squaredNorm() / static_cast<double>(series.size());
}

LstmEdFit fit_lstm_ed(const LstmEdNetwork& net, const std::vector<Matrix>& train,
                      const std::vector<Matrix>& holdout, const LstmEdHyper& hyper, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LstmEdFit fit{net.init(rng), {}};
  nn::SgdMomentum opt(net.parameter_count(), hyper.lr);
  const auto n = train.size();
  const std::size_t batch = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(hyper.batch), n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::vector<Matrix>& monitor = holdout.empty() ? train : holdout;

  Vector grad(net.parameter_count());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      std::vector<const Matrix*> members;
      for (std::size_t b = start; b < std::min(n, start + batch); ++b) members.push_back(&train[order[b]]);
      grad.setZero();
      sum += net.loss(fit.params, to_batch(members), &grad);
      nn::clip_norm(grad, kGradClip);
      opt.step(fit.params, grad);
      ++batches;
    }
    double rec = 0.0;
    for (const auto& s : monitor) rec += net.window_error(fit.params, s);
    rec /= static_cast<double>(monitor.size());
    fit.report.loss.push_back(sum / batches);
    fit.report.holdout_reconstruction.push_back(rec);
    if (!std::isfinite(sum) || !std::isfinite(rec) || !fit.params.allFinite())
      throw Error(ErrorCode::DivergedTraining, "LSTM-ED loss became non-finite at epoch " + std::to_string(epoch));
  }
  return fit;
}

LstmEdModel::LstmEdModel(LstmEdNetwork net, Vector params, int seq_len)
    : net_(std::move(net)), params_(std::move(params)), seq_len_(seq_len) {
  if (params_.size() != net_.parameter_count())
    throw Error(ErrorCode::InvalidArgument, "LSTM-ED parameter length mismatch");
}

double LstmEdModel::raw_error(const Sample& normalized) const {
  return net_.window_error(params_, std::get<SequenceSample>(normalized).series);
}

std::vector<std::int64_t> LstmEdModel::structure() const {
  std::vector<std::int64_t> s{net_.dim(), seq_len_};
  for (int w : net_.layers()) s.push_back(w);
  return s;
}

Eigen::Index LstmEdModel::activation_footprint() const {
  Eigen::Index widest = 0, states = 0;
  for (int w : net_.layers()) {
    widest = std::max<Eigen::Index>(widest, w);
    states += 2 * w;
  }
  // input and reconstruction sequences, encoder and decoder states, one gate block
  return 2 * static_cast<Eigen::Index>(seq_len_) * net_.dim() + 2 * states + 4 * widest;
}

LstmEdModel LstmEdModel::from_parameters(const std::vector<std::int64_t>& structure, const Vector& params) {
  if (structure.size() < 3 || structure[0] < 1 || structure[1] < 2)
    throw Error(ErrorCode::CorruptStore, "bad LSTM-ED structure descriptor");
  std::vector<int> layers;
  for (std::size_t i = 2; i < structure.size(); ++i) {
    if (structure[i] < 1) throw Error(ErrorCode::CorruptStore, "bad LSTM-ED layer width");
    layers.push_back(static_cast<int>(structure[i]));
  }
  LstmEdNetwork net(static_cast<int>(structure[0]), layers);
  if (params.size() != net.parameter_count()) throw Error(ErrorCode::CorruptStore, "LSTM-ED parameter length mismatch");
  return LstmEdModel(std::move(net), params, static_cast<int>(structure[1]));
}

}  // namespace orca
