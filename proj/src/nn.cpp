#include "orca/nn.hpp"

#include <algorithm>
#include <cmath>

namespace orca::nn {

void glorot_uniform(Eigen::Ref<Matrix> w, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(std::max(1, fan_in + fan_out)));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
}

namespace {

void activate(Matrix& m, Activation a) {
  switch (a) {
    case Activation::Linear: break;
    case Activation::Tanh: m = m.array().tanh(); break;
    case Activation::Sigmoid: m = (1.0 + (-m.array()).exp()).inverse(); break;
  }
}

// Multiplies `g` by the activation derivative expressed through outputs `y`.
void activation_backward(Matrix& g, const Matrix& y, Activation a) {
  switch (a) {
    case Activation::Linear: break;
    case Activation::Tanh: g.array() *= 1.0 - y.array().square(); break;
    case Activation::Sigmoid: g.array() *= y.array() * (1.0 - y.array()); break;
  }
}

}  // namespace

// ---- Mlp ------------------------------------------------------------------------

Mlp::Mlp(std::vector<int> sizes, Activation hidden, Activation output)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw Error(ErrorCode::InvalidArgument, "mlp needs at least two layer sizes");
  for (int s : sizes_)
    if (s < 1) throw Error(ErrorCode::InvalidArgument, "mlp layer sizes must be positive");
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < layer_count(); ++l) n += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  return n;
}

Eigen::Index Mlp::max_width() const { return *std::max_element(sizes_.begin(), sizes_.end()); }

void Mlp::init(GradRef params, std::mt19937_64& rng) const {
  Eigen::Index off = 0;
  for (int l = 0; l < layer_count(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<Matrix> w(params.data() + off, out, in);
    glorot_uniform(w, in, out, rng);
    off += static_cast<Eigen::Index>(out) * in;
    params.segment(off, out).setZero();
    off += out;
  }
}

Matrix Mlp::forward(ParamRef params, const Matrix& x, Tape* tape) const {
  if (x.rows() != input_size()) throw Error(ErrorCode::InvalidArgument, "mlp input size mismatch");
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(x);
  }
  Matrix a = x;
  Eigen::Index off = 0;
  for (int l = 0; l < layer_count(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    Eigen::Map<const Matrix> w(params.data() + off, out, in);
    off += static_cast<Eigen::Index>(out) * in;
    Eigen::Map<const Vector> b(params.data() + off, out);
    off += out;
    Matrix z = w * a;
    z.colwise() += b;
    activate(z, activation_of(l));
    a = std::move(z);
    if (tape) tape->activations.push_back(a);
  }
  return a;
}

Matrix Mlp::backward(ParamRef params, const Tape& tape, const Matrix& grad_out, GradRef grad) const {
  std::vector<Eigen::Index> offsets(static_cast<std::size_t>(layer_count()));
  Eigen::Index off = 0;
  for (int l = 0; l < layer_count(); ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  Matrix g = grad_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    activation_backward(g, tape.activations[l + 1], activation_of(l));
    Eigen::Map<const Matrix> w(params.data() + offsets[l], out, in);
    Eigen::Map<Matrix> gw(grad.data() + offsets[l], out, in);
    gw.noalias() += g * tape.activations[l].transpose();
    grad.segment(offsets[l] + static_cast<Eigen::Index>(out) * in, out) += g.rowwise().sum();
    g = w.transpose() * g;
  }
  return g;
}

// ---- Lstm -----------------------------------------------------------------------

Lstm::Lstm(int input_size, int hidden_size) : input_(input_size), hidden_(hidden_size) {
  if (input_size < 0 || hidden_size < 1) throw Error(ErrorCode::InvalidArgument, "bad lstm sizes");
}

Eigen::Index Lstm::parameter_count() const {
  const Eigen::Index g = 4 * static_cast<Eigen::Index>(hidden_);
  return g * input_ + g * hidden_ + g;
}

void Lstm::init(GradRef params, std::mt19937_64& rng) const {
  const Eigen::Index g = 4 * static_cast<Eigen::Index>(hidden_);
  Eigen::Map<Matrix> wx(params.data(), g, input_);
  Eigen::Map<Matrix> wh(params.data() + g * input_, g, hidden_);
  if (input_ > 0) glorot_uniform(wx, input_, hidden_, rng);
  glorot_uniform(wh, hidden_, hidden_, rng);
  params.segment(g * input_ + g * hidden_, g).setZero();
}

std::vector<Matrix> Lstm::forward(ParamRef params, const std::vector<Matrix>& inputs, int steps,
                                  const Matrix& h0, const Matrix& c0, Tape* tape,
                                  Matrix* c_last) const {
  const Eigen::Index h = hidden_, g = 4 * h;
  Eigen::Map<const Matrix> wx(params.data(), g, input_);
  Eigen::Map<const Matrix> wh(params.data() + g * input_, g, h);
  Eigen::Map<const Vector> b(params.data() + g * input_ + g * h, g);
  if (input_ > 0 && static_cast<int>(inputs.size()) != steps)
    throw Error(ErrorCode::InvalidArgument, "lstm input length mismatch");

  if (tape) {
    tape->inputs = input_ > 0 ? inputs : std::vector<Matrix>{};
    tape->gates.clear();
    tape->cells.clear();
    tape->hidden.clear();
    tape->h0 = h0;
    tape->c0 = c0;
  }
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(steps));
  Matrix hp = h0, cp = c0;
  Matrix a;
  for (int t = 0; t < steps; ++t) {
    a.noalias() = wh * hp;
    if (input_ > 0) a.noalias() += wx * inputs[t];
    a.colwise() += b;
    a.topRows(2 * h) = (1.0 + (-a.topRows(2 * h).array()).exp()).inverse();
    a.middleRows(2 * h, h) = a.middleRows(2 * h, h).array().tanh();
    a.bottomRows(h) = (1.0 + (-a.bottomRows(h).array()).exp()).inverse();
    Matrix c = a.middleRows(h, h).cwiseProduct(cp) + a.topRows(h).cwiseProduct(a.middleRows(2 * h, h));
    Matrix hn = a.bottomRows(h).cwiseProduct(c.array().tanh().matrix());
    if (tape) {
      tape->gates.push_back(a);
      tape->cells.push_back(c);
      tape->hidden.push_back(hn);
    }
    out.push_back(hn);
    hp = std::move(hn);
    cp = std::move(c);
  }
  if (c_last) *c_last = cp;
  return out;
}

Lstm::Gradients Lstm::backward(ParamRef params, const Tape& tape,
                               const std::vector<Matrix>& grad_hidden, const Matrix& grad_h_last,
                               const Matrix& grad_c_last, GradRef grad) const {
  const Eigen::Index h = hidden_, g4 = 4 * h;
  const auto steps = static_cast<int>(tape.hidden.size());
  Eigen::Map<const Matrix> wx(params.data(), g4, input_);
  Eigen::Map<const Matrix> wh(params.data() + g4 * input_, g4, h);
  Eigen::Map<Matrix> gwx(grad.data(), g4, input_);
  Eigen::Map<Matrix> gwh(grad.data() + g4 * input_, g4, h);
  auto gb = grad.segment(g4 * input_ + g4 * h, g4);

  const Eigen::Index batch = tape.h0.cols();
  Matrix dh = grad_h_last.size() ? grad_h_last : Matrix::Zero(h, batch);
  Matrix dc = grad_c_last.size() ? grad_c_last : Matrix::Zero(h, batch);
  Gradients out;
  out.inputs.resize(input_ > 0 ? static_cast<std::size_t>(steps) : 0);
  Matrix da(g4, batch);
  for (int t = steps - 1; t >= 0; --t) {
    if (t < static_cast<int>(grad_hidden.size()) && grad_hidden[t].size()) dh += grad_hidden[t];
    const Matrix& gates = tape.gates[t];
    const auto i = gates.topRows(h).array();
    const auto f = gates.middleRows(h, h).array();
    const auto gg = gates.middleRows(2 * h, h).array();
    const auto o = gates.bottomRows(h).array();
    const Matrix& cp = t > 0 ? tape.cells[t - 1] : tape.c0;
    const Matrix& hp = t > 0 ? tape.hidden[t - 1] : tape.h0;
    const Eigen::ArrayXXd tc = tape.cells[t].array().tanh();

    dc.array() += dh.array() * o * (1.0 - tc.square());
    da.bottomRows(h) = (dh.array() * tc * o * (1.0 - o)).matrix();
    da.topRows(h) = (dc.array() * gg * i * (1.0 - i)).matrix();
    da.middleRows(h, h) = (dc.array() * cp.array() * f * (1.0 - f)).matrix();
    da.middleRows(2 * h, h) = (dc.array() * i * (1.0 - gg.square())).matrix();
    dc = (dc.array() * f).matrix();

    if (input_ > 0) {
      gwx.noalias() += da * tape.inputs[t].transpose();
      out.inputs[t] = wx.transpose() * da;
    }
    gwh.noalias() += da * hp.transpose();
    gb += da.rowwise().sum();
    dh.noalias() = wh.transpose() * da;
  }
  out.h0 = std::move(dh);
  out.c0 = std::move(dc);
  return out;
}

// ---- optimizer --------------------------------------------------------------------

void SgdMomentum::step(GradRef params, const Vector& grad) {
  velocity_ = momentum_ * velocity_ - lr_ * grad;
  params += velocity_;
}

void clip_norm(GradRef grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0) grad *= max_norm / n;
}

}  // namespace orca::nn
