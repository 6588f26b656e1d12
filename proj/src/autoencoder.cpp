#include "mmamba/autoencoder.hpp"

#include <algorithm>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mmamba {

namespace {

constexpr Index kPositionFeatures = 24;

}  // namespace

Tensor frames_tensor(const Frames& f) {
  return Tensor({f.rows(), f.cols()}, Values(Eigen::Map<const Values>(f.data(), f.size())));
}

Frames tensor_frames(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("expected [frames, channels]");
  return Eigen::Map<const Frames>(t.values().data(), t.dim(0), t.dim(1));
}

Tensor frame_position_features(Index frames) {
  Values out(frames * kPositionFeatures);
  const Index half = kPositionFeatures / 2;
  for (Index t = 0; t < frames; ++t) {
    for (Index i = 0; i < half; ++i) {
      // 0.25 Hz steps up to 3 Hz, covering every gait frequency in the generator.
      const double hz = 0.25 * static_cast<double>(i + 1);
      const double w = 2.0 * std::numbers::pi * hz * static_cast<double>(t) / kFps;
      out(t * kPositionFeatures + i) = std::sin(w);
      out(t * kPositionFeatures + half + i) = std::cos(w);
    }
  }
  return Tensor({frames, kPositionFeatures}, std::move(out));
}

Eigen::MatrixXd fourier_basis(Index frames, Index count) {
  Eigen::MatrixXd b(frames, count);
  for (Index t = 0; t < frames; ++t) {
    for (Index k = 0; k < count; ++k) {
      const double hz = 3.0 * static_cast<double>(k / 2) / static_cast<double>(count / 2);
      const double w = 2.0 * std::numbers::pi * hz * static_cast<double>(t) / kFps;
      b(t, k) = k % 2 == 0 ? std::cos(w) : std::sin(w);
    }
  }
  return b;
}

Autoencoder Autoencoder::make(const AutoencoderConfig& config, const Init& root) {
  if (config.basis < 2 || config.basis % 2 != 0) throw std::invalid_argument("basis must be a positive even count");
  const Init init = root.sub("vae");
  const Index h = config.hidden, dh = config.decoder_hidden;
  const Index code = config.latent_tokens * config.latent_dim, coefs = config.basis * kChannels;
  Autoencoder ae;
  ae.config = config;
  ae.frame_in = Linear::make(init, "frame_in", kChannels + kPositionFeatures, h);
  ae.frame_mid = Linear::make(init, "frame_mid", h, h);
  ae.queries = init.custom("queries", randn({config.latent_tokens, h}, init.rng()), false);
  ae.pool = Attention::make(init, "pool", h, config.heads);
  ae.token_mid = Linear::make(init, "token_mid", h, h);
  ae.mu_head = Linear::make(init, "mu", h, config.latent_dim, true, true);
  ae.logvar_head = Linear::make(init, "logvar", h, config.latent_dim, true, true);
  // Narrow initial posterior so sampling noise does not swamp a unit-scale code.
  ae.logvar_head.bias.mutable_values().setConstant(-8.0);
  ae.coef_in = Linear::make(init, "coef_in", coefs, code);
  ae.coef_out = Linear::make(init, "coef_out", code, coefs);
  ae.ctx_in = Linear::make(init, "ctx_in", code, dh);
  ae.readout = Linear::make(init, "readout", dh, coefs, true, true);
  ae.offset = Linear::make(init, "offset", dh, kChannels, true, true);

  // Query table starts as the encoder's Fourier basis.
  const Eigen::MatrixXd table = fourier_basis(config.max_frames, config.basis);
  Values flat(table.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), table.rows(), table.cols()) = table;
  ae.frame_queries =
      init.custom("frame_queries", Tensor({config.max_frames, config.basis}, std::move(flat)), false);
  return ae;
}

Tensor Autoencoder::coefficients(const Tensor& frames) const {
  const Index L = frames.dim(0), k = config.basis;
  const Eigen::MatrixXd b = fourier_basis(L, k);
  const Eigen::MatrixXd gram = b.transpose() * b + config.ridge * Eigen::MatrixXd::Identity(k, k);
  const Eigen::MatrixXd proj = gram.ldlt().solve(b.transpose());
  Values flat(proj.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), k, L) = proj;
  return matmul(Tensor({k, L}, std::move(flat)), frames);
}

Posterior Autoencoder::encode(const Tensor& frames) const {
  if (frames.rank() != 2 || frames.dim(1) != kChannels) {
    throw std::invalid_argument("encode expects [frames, 30], got " + shape_string(frames.shape()));
  }
  const Index L = frames.dim(0);
  if (L < 1 || L > config.max_frames) {
    throw std::invalid_argument("clip length " + std::to_string(L) + " outside [1, " +
                                std::to_string(config.max_frames) + "]");
  }
  const Index h = config.hidden, tokens = config.latent_tokens;
  const Tensor c = coefficients(frames);
  Tensor code = reshape(coef_in(reshape(c, {1, c.size()})), {tokens, config.latent_dim});
  Tensor e = silu(frame_in(concat({frames, frame_position_features(L)}, 1)));
  e = silu(frame_mid(e));
  Tensor pooled = reshape(pool(reshape(queries, {tokens, 1, h}), reshape(e, {L, 1, h})), {tokens, h});
  Tensor feat = silu(token_mid(pooled));
  return {code + mu_head(feat), logvar_head(feat)};
}

Tensor Autoencoder::decode(const Tensor& z, Index frames) const {
  if (z.shape() != Shape{config.latent_tokens, config.latent_dim}) {
    throw std::invalid_argument("decode expects [" + std::to_string(config.latent_tokens) + "," +
                                std::to_string(config.latent_dim) + "], got " + shape_string(z.shape()));
  }
  if (frames < 1 || frames > config.max_frames) {
    throw std::invalid_argument("clip length " + std::to_string(frames) + " outside [1, " +
                                std::to_string(config.max_frames) + "]");
  }
  const Tensor flat = reshape(z, {1, z.size()});
  const Tensor ctx = silu(ctx_in(flat));
  Tensor mix = reshape(coef_out(flat) + readout(ctx), {config.basis, kChannels});
  return matmul(narrow(frame_queries, 0, 0, frames), mix) + offset(ctx);
}

void initialize_from_data(Autoencoder& ae, const std::vector<Frames>& normalized) {
  if (normalized.empty()) throw std::invalid_argument("data initialization needs clips");
  const Index n = static_cast<Index>(normalized.size());
  const Index dims = ae.config.basis * kChannels;
  const Index code = ae.config.latent_tokens * ae.config.latent_dim;
  Eigen::MatrixXd rows(n, dims);
  {
    NoGradGuard no_grad;
    for (Index i = 0; i < n; ++i) {
      const Tensor c = ae.coefficients(frames_tensor(normalized[static_cast<std::size_t>(i)]));
      rows.row(i) = Eigen::Map<const Eigen::RowVectorXd>(c.values().data(), dims);
    }
  }
  const Eigen::RowVectorXd center = rows.colwise().mean();
  rows.rowwise() -= center;

  // Principal directions as columns of `dirs`, largest variance first.
  Eigen::MatrixXd dirs;
  Eigen::VectorXd var;
  if (n <= dims) {
    // Gram route: cheaper when there are fewer clips than coefficients.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rows * rows.transpose());
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    const Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
    dirs = rows.transpose() * u;
    for (Index i = 0; i < n; ++i) dirs.col(i) /= std::sqrt(std::max(ev(i), 1e-300));
    var = ev;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rows.transpose() * rows);
    var = es.eigenvalues().reverse();
    dirs = es.eigenvectors().rowwise().reverse();
  }
  var /= static_cast<double>(std::max<Index>(n - 1, 1));

  Values& w_in = ae.coef_in.weight.mutable_values();
  Values& b_in = ae.coef_in.bias.mutable_values();
  Values& w_out = ae.coef_out.weight.mutable_values();
  Values& b_out = ae.coef_out.bias.mutable_values();
  w_in.setZero();
  b_in.setZero();
  w_out.setZero();
  // Whitened code: unit variance per latent entry on the training clips.
  const double floor = 1e-10 * std::max(var(0), 1e-300);
  for (Index j = 0; j < std::min(code, static_cast<Index>(var.size())); ++j) {
    if (var(j) <= floor) break;
    const double sd = std::sqrt(var(j));
    for (Index d = 0; d < dims; ++d) {
      w_in(d * code + j) = dirs(d, j) / sd;
      w_out(j * dims + d) = dirs(d, j) * sd;
    }
    b_in(j) = -dirs.col(j).dot(center.transpose()) / sd;
  }
  for (Index d = 0; d < dims; ++d) b_out(d) = center(d);
}

AutoencoderLoss autoencoder_loss(const Autoencoder& ae, const Frames& normalized, double kl_weight,
                                 Rng* sample_rng) {
  Tensor x = frames_tensor(normalized);
  Posterior q = ae.encode(x);
  Tensor z = q.mu;
  if (sample_rng) z = q.mu + exp(q.logvar * 0.5) * randn(q.mu.shape(), *sample_rng);
  Tensor diff = ae.decode(z, normalized.rows()) - x;
  Tensor recon = mean(diff * diff);
  // Summed over latent entries.
  Tensor kl = sum(q.mu * q.mu + exp(q.logvar) - q.logvar) * 0.5 + Tensor::scalar(-0.5 * static_cast<double>(q.mu.size()));
  AutoencoderLoss out;
  out.reconstruction = recon.item();
  out.kl = kl.item();
  out.total = kl_weight == 0.0 ? recon : recon + kl * kl_weight;
  return out;
}

std::vector<double> train_autoencoder(Autoencoder& ae, ParamSet& params, const MotionDataset& data,
                                      const ChannelNorm& norm, const AutoencoderTrainOptions& options,
                                      const std::function<void(int, double)>& on_epoch) {
  if (data.items.empty()) throw std::invalid_argument("autoencoder training needs a non-empty dataset");
  std::vector<Frames> normalized;
  for (const auto& m : data.items) normalized.push_back(norm.normalize(m.data));

  // Only the autoencoder's own parameters are optimized.
  ParamSet own;
  for (const auto& p : params.items()) {
    if (p.name.rfind("vae.", 0) == 0) own.items().push_back(p);
  }
  if (options.data_init) initialize_from_data(ae, normalized);
  AdamWConfig opt_config;
  opt_config.lr = options.lr;
  AdamW opt(own, opt_config);
  Rng rng(options.seed);
  std::vector<std::size_t> order(normalized.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    // Cosine decay to a tenth of the base rate over the run.
    const double progress = options.epochs > 1 ? static_cast<double>(epoch) / (options.epochs - 1) : 0.0;
    opt.set_lr(options.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress))));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch));
      Tape tape;
      Tensor batch_loss = Tensor::scalar(0.0);
      for (std::size_t i = start; i < stop; ++i) {
        auto l = autoencoder_loss(ae, normalized[order[i]], options.kl_weight, &rng);
        batch_loss = batch_loss + l.total;
        total += l.total.item();
      }
      tape.backward(batch_loss * (1.0 / static_cast<double>(stop - start)));
      opt.step();
    }
    epoch_losses.push_back(total / static_cast<double>(order.size()));
    if (on_epoch) on_epoch(epoch, epoch_losses.back());
  }
  return epoch_losses;
}

double reconstruction_mse(const Autoencoder& ae, const MotionDataset& data, const ChannelNorm& norm) {
  if (data.items.empty()) throw std::invalid_argument("empty evaluation set");
  NoGradGuard no_grad;
  double total = 0.0;
  double count = 0.0;
  for (const auto& m : data.items) {
    const Frames x = norm.normalize(m.data);
    const Frames y = tensor_frames(ae.decode(ae.encode(frames_tensor(x)).mu, m.frames()));
    total += (y - x).square().sum();
    count += static_cast<double>(x.size());
  }
  return total / count;
}

}  // namespace mmamba
