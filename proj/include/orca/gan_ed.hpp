#ifndef ORCA_GAN_ED_HPP
#define ORCA_GAN_ED_HPP

#include "orca/model_spec.hpp"
#include "orca/nn.hpp"

namespace orca {

/// GAN with an added encoder. Encoder dim -> layers -> latent, generator
/// latent -> reversed layers -> dim, discriminator dim -> layers -> 1 logit.
/// Hidden units use tanh; encoder latent and generator output are linear.
/// All three networks share one flat parameter vector laid out E | G | D.
class GanEdNetwork {
 public:
  GanEdNetwork(int dim, std::vector<int> layers, int latent_dim);

  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& generator() const { return generator_; }
  const nn::Mlp& discriminator() const { return discriminator_; }

  Eigen::Index parameter_count() const { return disc_offset_ + discriminator_.parameter_count(); }
  Eigen::Index encoder_offset() const { return 0; }
  Eigen::Index generator_offset() const { return encoder_.parameter_count(); }
  Eigen::Index discriminator_offset() const { return disc_offset_; }

  int dim() const { return encoder_.input_size(); }
  int latent_dim() const { return encoder_.output_size(); }

  Vector init(std::mt19937_64& rng) const;

  /// G(E(x)) for a batch of columns.
  Matrix reconstruct(const Vector& params, const Matrix& x) const;

  /// mean softplus(-D(x)) + mean softplus(D(G(z))). Adds its gradient to
  /// the discriminator block of `grad` when non-null.
  double discriminator_loss(const Vector& params, const Matrix& x, const Matrix& z, Vector* grad) const;

  /// Non-saturating adversarial term mean softplus(-D(G(z))) plus
  /// lambda_rec * mean |x - G(E(x))|^2. Adds its gradient to the encoder and
  /// generator blocks of `grad` when non-null.
  double generator_loss(const Vector& params, const Matrix& x, const Matrix& z, double lambda_rec,
                        Vector* grad) const;

  /// Mean squared-norm reconstruction error over columns.
  double reconstruction_error(const Vector& params, const Matrix& x) const;

  /// alpha |x - x_hat|^2 + (1 - alpha) |f_D(x) - f_D(x_hat)|^2 with f_D the
  /// discriminator's penultimate activation; one value per column.
  Vector anomaly_error(const Vector& params, const Matrix& x, double alpha) const;

 private:
  auto enc(const Vector& p) const { return p.segment(0, encoder_.parameter_count()); }
  auto gen(const Vector& p) const { return p.segment(generator_offset(), generator_.parameter_count()); }
  auto disc(const Vector& p) const { return p.segment(disc_offset_, discriminator_.parameter_count()); }

  nn::Mlp encoder_;
  nn::Mlp generator_;
  nn::Mlp discriminator_;
  Eigen::Index disc_offset_;
};

struct GanEdFit {
  Vector params;
  TrainingReport report;
};

/// SGD with momentum, alternating one discriminator step and one
/// encoder/generator step per minibatch. Columns of `train`/`holdout` are
/// samples. Throws DivergedTraining on a non-finite loss.
GanEdFit fit_gan_ed(const GanEdNetwork& net, const Matrix& train, const Matrix& holdout,
                    const GanEdHyper& hyper, std::uint64_t seed);

class GanEdModel final : public FamilyModel {
 public:
  GanEdModel(GanEdNetwork net, Vector params, double alpha);
  static GanEdModel from_parameters(const std::vector<std::int64_t>& structure, const Vector& params);

  const GanEdNetwork& network() const { return net_; }
  double alpha() const { return alpha_; }

  ModelFamily family() const override { return ModelFamily::GANED; }
  double raw_error(const Sample& normalized) const override;
  /// Network parameters followed by alpha.
  Vector parameters() const override;
  std::vector<std::int64_t> structure() const override;
  Eigen::Index activation_footprint() const override;

 private:
  GanEdNetwork net_;
  Vector params_;
  double alpha_;
};

}  // namespace orca

#endif  // ORCA_GAN_ED_HPP
