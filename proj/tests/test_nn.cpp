#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "orca/gan_ed.hpp"
#include "orca/lstm_ed.hpp"
#include "orca/nn.hpp"
#include "test_util.hpp"

using namespace orca;
using orca::testing::check_gradient;
using orca::testing::SplitMix64;

namespace {

int pick(SplitMix64& r, int lo, int hi) { return lo + static_cast<int>(r.next() % static_cast<std::uint64_t>(hi - lo + 1)); }

std::vector<int> random_widths(SplitMix64& r, int count) {
  std::vector<int> w;
  for (int i = 0; i < count; ++i) w.push_back(pick(r, 2, 8));
  return w;
}

}  // namespace

TEST_CASE("glorot init stays inside its bound and biases start at zero") {
  nn::Mlp mlp({5, 7, 3}, nn::Activation::Tanh, nn::Activation::Linear);
  std::mt19937_64 rng(3);
  Vector p(mlp.parameter_count());
  mlp.init(p, rng);
  const double bound = std::sqrt(6.0 / 12.0);
  for (Eigen::Index i = 0; i < 35; ++i) CHECK(std::abs(p[i]) <= bound);
  CHECK(p.segment(35, 7).isZero());
}

TEST_CASE("mlp gradient matches finite differences") {
  SplitMix64 r(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> sizes{pick(r, 1, 6)};
    for (int w : random_widths(r, pick(r, 1, 3))) sizes.push_back(w);
    sizes.push_back(pick(r, 1, 4));
    nn::Mlp mlp(sizes, nn::Activation::Tanh, trial % 2 ? nn::Activation::Sigmoid : nn::Activation::Linear);
    std::mt19937_64 rng(trial);
    Vector p(mlp.parameter_count());
    mlp.init(p, rng);
    p += 0.1 * r.gaussian_matrix(p.size(), 1);
    const Matrix x = r.gaussian_matrix(sizes.front(), 4);
    const Matrix target = r.gaussian_matrix(sizes.back(), 4);
    auto f = [&](const Vector& q) { return 0.5 * (mlp.forward(q, x) - target).squaredNorm(); };
    nn::Mlp::Tape tape;
    const Matrix out = mlp.forward(p, x, &tape);
    Vector g = Vector::Zero(p.size());
    mlp.backward(p, tape, out - target, g);
    CHECK(check_gradient(f, p, g, 0, p.size()).max_rel < 1e-4);
  }
}

TEST_CASE("lstm cell with zero weights and zero input keeps a zero state") {
  nn::Lstm cell(3, 4);
  const Vector p = Vector::Zero(cell.parameter_count());
  const Matrix zero = Matrix::Zero(4, 1);
  Matrix c_last;
  const auto h = cell.forward(p, {Matrix::Zero(3, 1)}, 1, zero, zero, nullptr, &c_last);
  CHECK(h.front().isZero());
  CHECK(c_last.isZero());
}

TEST_CASE("lstm layer gradient covers inputs, initial state and weights") {
  SplitMix64 r(5);
  for (int trial = 0; trial < 6; ++trial) {
    const int in = trial == 0 ? 0 : pick(r, 1, 5), hid = pick(r, 1, 6), steps = pick(r, 2, 5), nb = 3;
    nn::Lstm cell(in, hid);
    Vector p = 0.5 * r.gaussian_matrix(cell.parameter_count(), 1);
    std::vector<Matrix> xs;
    if (in > 0)
      for (int t = 0; t < steps; ++t) xs.push_back(r.gaussian_matrix(in, nb));
    const Matrix h0 = 0.5 * r.gaussian_matrix(hid, nb), c0 = 0.5 * r.gaussian_matrix(hid, nb);
    std::vector<Matrix> w;
    for (int t = 0; t < steps; ++t) w.push_back(r.gaussian_matrix(hid, nb));
    const Matrix wc = r.gaussian_matrix(hid, nb);
    auto f = [&](const Vector& q) {
      Matrix c_last;
      const auto hs = cell.forward(q, xs, steps, h0, c0, nullptr, &c_last);
      double s = (wc.array() * c_last.array()).sum();
      for (int t = 0; t < steps; ++t) s += (w[t].array() * hs[t].array()).sum();
      return s;
    };
    nn::Lstm::Tape tape;
    cell.forward(p, xs, steps, h0, c0, &tape);
    Vector g = Vector::Zero(p.size());
    const auto grads = cell.backward(p, tape, w, Matrix(), wc, g);
    CHECK(check_gradient(f, p, g, 0, p.size()).max_rel < 1e-4);
    // input gradient of the first step, first entry
    if (in > 0) {
      const double h = 1e-5;
      auto shifted = xs;
      shifted[0](0, 0) += h;
      auto xs_keep = xs;
      xs = shifted;
      const double up = f(p);
      xs[0](0, 0) -= 2 * h;
      const double down = f(p);
      xs = xs_keep;
      CHECK(grads.inputs[0](0, 0) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("gan-ed encoder parameter count for the benchmark shape") {
  GanEdNetwork net(80, {64, 32}, 16);
  CHECK(net.encoder().parameter_count() == 7792);
  CHECK(net.generator().parameter_count() == 16 * 32 + 32 + 32 * 64 + 64 + 64 * 80 + 80);
}

TEST_CASE("gan-ed discriminator and generator gradients") {
  SplitMix64 r(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = pick(r, 2, 6), latent = pick(r, 1, 4);
    GanEdNetwork net(dim, random_widths(r, pick(r, 1, 2)), latent);
    std::mt19937_64 rng(trial);
    Vector p = net.init(rng);
    p += 0.1 * r.gaussian_matrix(p.size(), 1);
    const Matrix x = r.gaussian_matrix(dim, 5), z = r.gaussian_matrix(latent, 5);
    const double lambda = 0.5 + r.uniform();

    Vector gd = Vector::Zero(p.size());
    net.discriminator_loss(p, x, z, &gd);
    auto fd = [&](const Vector& q) { return net.discriminator_loss(q, x, z, nullptr); };
    const auto d = check_gradient(fd, p, gd, net.discriminator_offset(), p.size());
    CHECK(d.max_rel < 1e-4);
    CHECK(gd.head(net.discriminator_offset()).isZero());

    Vector gg = Vector::Zero(p.size());
    net.generator_loss(p, x, z, lambda, &gg);
    auto fg = [&](const Vector& q) { return net.generator_loss(q, x, z, lambda, nullptr); };
    const auto g = check_gradient(fg, p, gg, 0, net.discriminator_offset());
    CHECK(g.max_rel < 1e-4);
    CHECK(gg.tail(p.size() - net.discriminator_offset()).isZero());
  }
}

TEST_CASE("lstm-ed reconstruction loss gradient") {
  SplitMix64 r(33);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = pick(r, 1, 4), steps = pick(r, 2, 5);
    LstmEdNetwork net(dim, random_widths(r, pick(r, 1, 2)));
    std::mt19937_64 rng(trial);
    Vector p = net.init(rng);
    p += 0.1 * r.gaussian_matrix(p.size(), 1);
    std::vector<Matrix> series;
    for (int b = 0; b < 3; ++b) series.push_back(r.gaussian_matrix(steps, dim));
    const SequenceBatch batch = to_batch({&series[0], &series[1], &series[2]});
    Vector g = Vector::Zero(p.size());
    net.loss(p, batch, &g);
    auto f = [&](const Vector& q) { return net.loss(q, batch, nullptr); };
    CHECK(check_gradient(f, p, g, 0, p.size()).max_rel < 1e-4);
  }
}

TEST_CASE("sgd momentum update rule") {
  nn::SgdMomentum opt(2, 0.1, 0.9);
  Vector p = Vector::Zero(2);
  Vector g(2);
  g << 1.0, -2.0;
  opt.step(p, g);
  CHECK(p[0] == doctest::Approx(-0.1));
  opt.step(p, g);
  CHECK(p[0] == doctest::Approx(-0.1 - 0.19));
}

TEST_CASE("clip_norm rescales only long vectors") {
  Vector g(2);
  g << 3.0, 4.0;
  nn::clip_norm(g, 10.0);
  CHECK(g.norm() == doctest::Approx(5.0));
  nn::clip_norm(g, 1.0);
  CHECK(g.norm() == doctest::Approx(1.0));
}

TEST_CASE("softplus is stable at large magnitudes") {
  CHECK(nn::softplus(1000.0) == doctest::Approx(1000.0));
  CHECK(nn::softplus(-1000.0) == doctest::Approx(0.0));
  CHECK(nn::softplus(0.0) == doctest::Approx(std::log(2.0)));
}
