#ifndef ORCA_NN_HPP
#define ORCA_NN_HPP

#include "orca/core.hpp"

#include <random>
#include <vector>

// Small dense and recurrent building blocks. A layer is a layout over a
// caller-owned flat parameter vector, so a whole network flattens to one
// Vector for serialization, momentum updates and finite-difference checks.
// Batches are stored column-wise: one sample per column.

namespace orca::nn {

using ParamRef = Eigen::Ref<const Vector>;
using GradRef = Eigen::Ref<Vector>;

enum class Activation { Linear, Tanh, Sigmoid };

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Eigen::Ref<Matrix> w, int fan_in, int fan_out, std::mt19937_64& rng);

class Mlp {
 public:
  /// Post-activation values per layer; activations[0] is the input.
  struct Tape {
    std::vector<Matrix> activations;
  };

  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation hidden, Activation output);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index parameter_count() const;

  /// Weights uniform Glorot, biases zero.
  void init(GradRef params, std::mt19937_64& rng) const;

  Matrix forward(ParamRef params, const Matrix& x, Tape* tape = nullptr) const;

  /// Adds parameter gradients into `grad` and returns d(loss)/d(input).
  Matrix backward(ParamRef params, const Tape& tape, const Matrix& grad_out, GradRef grad) const;

  /// Largest per-sample activation count across layers (input included).
  Eigen::Index max_width() const;

 private:
  Activation activation_of(int layer) const { return layer + 1 == layer_count() ? output_ : hidden_; }

  std::vector<int> sizes_{1, 1};
  Activation hidden_ = Activation::Tanh;
  Activation output_ = Activation::Linear;
};

/// Standard LSTM cell with input, forget, cell and output gates. Parameters
/// are W_x (4h x in), W_h (4h x h), b (4h) with gate blocks in i, f, g, o order.
/// An input size of zero gives an autonomous recurrence driven only by state.
class Lstm {
 public:
  struct Tape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> gates;  // 4h x B post-activation
    std::vector<Matrix> cells;  // c_t
    std::vector<Matrix> hidden; // h_t
    Matrix h0;
    Matrix c0;
  };

  struct Gradients {
    std::vector<Matrix> inputs;
    Matrix h0;
    Matrix c0;
  };

  Lstm() = default;
  Lstm(int input_size, int hidden_size);

  int input_size() const { return input_; }
  int hidden_size() const { return hidden_; }
  Eigen::Index parameter_count() const;

  void init(GradRef params, std::mt19937_64& rng) const;

  /// Runs `steps` time steps; `inputs` may be empty when input_size() == 0.
  /// Final cell state is tape->cells.back() (or returned through c_last).
  std::vector<Matrix> forward(ParamRef params, const std::vector<Matrix>& inputs, int steps,
                              const Matrix& h0, const Matrix& c0, Tape* tape = nullptr,
                              Matrix* c_last = nullptr) const;

  /// `grad_hidden[t]` is d(loss)/d(h_t) from outside the recurrence (may be an
  /// empty matrix for zero). `grad_h_last`/`grad_c_last` enter at the final step.
  Gradients backward(ParamRef params, const Tape& tape, const std::vector<Matrix>& grad_hidden,
                     const Matrix& grad_h_last, const Matrix& grad_c_last, GradRef grad) const;

 private:
  int input_ = 0;
  int hidden_ = 1;
};

/// SGD with classical momentum: v <- mu v - lr g; theta <- theta + v.
class SgdMomentum {
 public:
  SgdMomentum(Eigen::Index size, double lr, double momentum = 0.9)
      : lr_(lr), momentum_(momentum), velocity_(Vector::Zero(size)) {}

  void step(GradRef params, const Vector& grad);

 private:
  double lr_;
  double momentum_;
  Vector velocity_;
};

/// Rescales `grad` in place so that its norm is at most `max_norm`.
void clip_norm(GradRef grad, double max_norm);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace orca::nn

#endif  // ORCA_NN_HPP
