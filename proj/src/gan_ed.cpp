#include "orca/gan_ed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace orca {

namespace {

std::vector<int> with_ends(int first, const std::vector<int>& middle, int last) {
  std::vector<int> out;
  out.reserve(middle.size() + 2);
  out.push_back(first);
  out.insert(out.end(), middle.begin(), middle.end());
  out.push_back(last);
  return out;
}

constexpr double kGradClip = 5.0;

}  // namespace

GanEdNetwork::GanEdNetwork(int dim, std::vector<int> layers, int latent_dim)
    : encoder_(with_ends(dim, layers, latent_dim), nn::Activation::Tanh, nn::Activation::Linear),
      generator_(with_ends(latent_dim, std::vector<int>(layers.rbegin(), layers.rend()), dim),
                 nn::Activation::Tanh, nn::Activation::Linear),
      discriminator_(with_ends(dim, layers, 1), nn::Activation::Tanh, nn::Activation::Linear),
      disc_offset_(encoder_.parameter_count() + generator_.parameter_count()) {}

Vector GanEdNetwork::init(std::mt19937_64& rng) const {
  Vector p(parameter_count());
  encoder_.init(p.segment(0, encoder_.parameter_count()), rng);
  generator_.init(p.segment(generator_offset(), generator_.parameter_count()), rng);
  discriminator_.init(p.segment(disc_offset_, discriminator_.parameter_count()), rng);
  return p;
}

Matrix GanEdNetwork::reconstruct(const Vector& params, const Matrix& x) const {
  return generator_.forward(gen(params), encoder_.forward(enc(params), x));
}

double GanEdNetwork::discriminator_loss(const Vector& params, const Matrix& x, const Matrix& z,
                                        Vector* grad) const {
  const double nb_real = static_cast<double>(x.cols());
  const double nb_fake = static_cast<double>(z.cols());
  const Matrix fake = generator_.forward(gen(params), z);
  nn::Mlp::Tape tr, tf;
  const Matrix sr = discriminator_.forward(disc(params), x, grad ? &tr : nullptr);
  const Matrix sf = discriminator_.forward(disc(params), fake, grad ? &tf : nullptr);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < sr.cols(); ++b) loss += nn::softplus(-sr(0, b)) / nb_real;
  for (Eigen::Index b = 0; b < sf.cols(); ++b) loss += nn::softplus(sf(0, b)) / nb_fake;
  if (grad) {
    auto gd = grad->segment(disc_offset_, discriminator_.parameter_count());
    Matrix gr = sr.unaryExpr([&](double s) { return (nn::sigmoid(s) - 1.0) / nb_real; });
    Matrix gf = sf.unaryExpr([&](double s) { return nn::sigmoid(s) / nb_fake; });
    discriminator_.backward(disc(params), tr, gr, gd);
    discriminator_.backward(disc(params), tf, gf, gd);
  }
  return loss;
}

double GanEdNetwork::generator_loss(const Vector& params, const Matrix& x, const Matrix& z,
                                    double lambda_rec, Vector* grad) const {
  const double nb_fake = static_cast<double>(z.cols());
  const double nb_real = static_cast<double>(x.cols());
  nn::Mlp::Tape tg, td, te, tr;
  const Matrix fake = generator_.forward(gen(params), z, grad ? &tg : nullptr);
  const Matrix sf = discriminator_.forward(disc(params), fake, grad ? &td : nullptr);
  const Matrix latent = encoder_.forward(enc(params), x, grad ? &te : nullptr);
  const Matrix recon = generator_.forward(gen(params), latent, grad ? &tr : nullptr);
  const Matrix diff = recon - x;

  double adv = 0.0;
  for (Eigen::Index b = 0; b < sf.cols(); ++b) adv += nn::softplus(-sf(0, b)) / nb_fake;
  const double rec = diff.squaredNorm() / nb_real;
  if (grad) {
    Vector scratch = Vector::Zero(discriminator_.parameter_count());
    auto gg = grad->segment(generator_offset(), generator_.parameter_count());
    auto ge = grad->segment(0, encoder_.parameter_count());
    Matrix gs = sf.unaryExpr([&](double s) { return (nn::sigmoid(s) - 1.0) / nb_fake; });
    const Matrix g_fake = discriminator_.backward(disc(params), td, gs, scratch);
    generator_.backward(gen(params), tg, g_fake, gg);
    const Matrix g_recon = (2.0 * lambda_rec / nb_real) * diff;
    const Matrix g_latent = generator_.backward(gen(params), tr, g_recon, gg);
    encoder_.backward(enc(params), te, g_latent, ge);
  }
  return adv + lambda_rec * rec;
}

double GanEdNetwork::reconstruction_error(const Vector& params, const Matrix& x) const {
  if (x.cols() == 0) return 0.0;
  return (reconstruct(params, x) - x).squaredNorm() / static_cast<double>(x.cols());
}

Vector GanEdNetwork::anomaly_error(const Vector& params, const Matrix& x, double alpha) const {
  const Matrix recon = reconstruct(params, x);
  nn::Mlp::Tape ta, tb;
  discriminator_.forward(disc(params), x, &ta);
  discriminator_.forward(disc(params), recon, &tb);
  const auto pen = static_cast<std::size_t>(discriminator_.layer_count() - 1);
  const Matrix& fa = ta.activations[pen];
  const Matrix& fb = tb.activations[pen];
  return alpha * (recon - x).colwise().squaredNorm().transpose() +
         (1.0 - alpha) * (fa - fb).colwise().squaredNorm().transpose();
}

GanEdFit fit_gan_ed(const GanEdNetwork& net, const Matrix& train, const Matrix& holdout,
                    const GanEdHyper& hyper, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GanEdFit fit{net.init(rng), {}};
  Vector& params = fit.params;
  const Eigen::Index n_ge = net.discriminator_offset();
  const Eigen::Index n_d = net.parameter_count() - n_ge;
  nn::SgdMomentum opt_d(n_d, hyper.lr);
  nn::SgdMomentum opt_ge(n_ge, hyper.lr);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Eigen::Index n = train.cols();
  const Eigen::Index batch = std::max<Eigen::Index>(1, std::min<Eigen::Index>(hyper.batch, n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Matrix& monitor = holdout.cols() > 0 ? holdout : train;

  Vector grad(net.parameter_count());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_g = 0.0, sum_d = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index nb = std::min(batch, n - start);
      Matrix xb(train.rows(), nb);
      for (Eigen::Index b = 0; b < nb; ++b) xb.col(b) = train.col(order[static_cast<std::size_t>(start + b)]);
      Matrix z(net.latent_dim(), nb);
      for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = normal(rng);

      grad.setZero();
      sum_d += net.discriminator_loss(params, xb, z, &grad);
      Vector gd = grad.segment(n_ge, n_d);
      nn::clip_norm(gd, kGradClip);
      opt_d.step(params.segment(n_ge, n_d), gd);

      grad.setZero();
      sum_g += net.generator_loss(params, xb, z, hyper.lambda_rec, &grad);
      Vector gge = grad.head(n_ge);
      nn::clip_norm(gge, kGradClip);
      opt_ge.step(params.head(n_ge), gge);
      ++batches;
    }
    const double rec = net.reconstruction_error(params, monitor);
    fit.report.loss.push_back(sum_g / batches);
    fit.report.discriminator_loss.push_back(sum_d / batches);
    fit.report.holdout_reconstruction.push_back(rec);
    if (!std::isfinite(sum_g) || !std::isfinite(sum_d) || !std::isfinite(rec) || !params.allFinite())
      throw Error(ErrorCode::DivergedTraining, "GAN-ED loss became non-finite at epoch " + std::to_string(epoch));
  }
  return fit;
}

GanEdModel::GanEdModel(GanEdNetwork net, Vector params, double alpha)
    : net_(std::move(net)), params_(std::move(params)), alpha_(alpha) {
  if (params_.size() != net_.parameter_count())
    throw Error(ErrorCode::InvalidArgument, "GAN-ED parameter length mismatch");
}

double GanEdModel::raw_error(const Sample& normalized) const {
  const auto& v = std::get<TelemetrySample>(normalized).values;
  return net_.anomaly_error(params_, v, alpha_)[0];
}

Vector GanEdModel::parameters() const {
  Vector p(params_.size() + 1);
  p.head(params_.size()) = params_;
  p[params_.size()] = alpha_;
  return p;
}

std::vector<std::int64_t> GanEdModel::structure() const {
  // dim, latent, then hidden widths of the encoder
  std::vector<std::int64_t> s{net_.dim(), net_.latent_dim()};
  const auto& sizes = net_.encoder().sizes();
  for (std::size_t i = 1; i + 1 < sizes.size(); ++i) s.push_back(sizes[i]);
  return s;
}

Eigen::Index GanEdModel::activation_footprint() const {
  // Encoder, generator and two discriminator passes are each held at peak
  // for one sample.
  Eigen::Index total = 0;
  for (const nn::Mlp* m : {&net_.encoder(), &net_.generator(), &net_.discriminator(), &net_.discriminator()}) {
    for (int s : m->sizes()) total += s;
  }
  return total;
}

GanEdModel GanEdModel::from_parameters(const std::vector<std::int64_t>& structure, const Vector& params) {
  if (structure.size() < 2 || structure[0] < 1 || structure[1] < 1)
    throw Error(ErrorCode::CorruptStore, "bad GAN-ED structure descriptor");
  std::vector<int> layers;
  for (std::size_t i = 2; i < structure.size(); ++i) {
    if (structure[i] < 1) throw Error(ErrorCode::CorruptStore, "bad GAN-ED layer width");
    layers.push_back(static_cast<int>(structure[i]));
  }
  GanEdNetwork net(static_cast<int>(structure[0]), layers, static_cast<int>(structure[1]));
  if (params.size() != net.parameter_count() + 1) throw Error(ErrorCode::CorruptStore, "GAN-ED parameter length mismatch");
  const double alpha = params[params.size() - 1];
  return GanEdModel(std::move(net), params.head(params.size() - 1), alpha);
}

}  // namespace orca
