#include "mmamba/pipeline.hpp"

#include "mmamba/csv.hpp"
#include "mmamba/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mmamba {

namespace {

constexpr Index kLatentTokens = 2;
constexpr Index kConditionDim = 64;
constexpr Index kSampleChunk = 64;
constexpr Index kLongMinFrames = 160;
constexpr long kLongMinCount = 100;

const char* const kJointNames[kJoints] = {"root", "hand_l", "hand_r", "foot_l", "foot_r"};
const char* const kFeatureNames[5] = {"mean_y", "std_x", "std_y", "std_z", "speed"};

std::string checkpoint_path(const RunConfig& c) { return c.out + "/checkpoint.mmck"; }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
}

std::string rng_text(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

/// latents[i] is [tokens, d]; the result is [tokens, B, d].
Tensor gather_batch(const std::vector<Values>& latents, std::span<const std::size_t> idx, Index d) {
  const Index batch = static_cast<Index>(idx.size());
  Values out(kLatentTokens * batch * d);
  for (Index b = 0; b < batch; ++b) {
    const Values& z = latents[idx[static_cast<std::size_t>(b)]];
    for (Index t = 0; t < kLatentTokens; ++t) out.segment((t * batch + b) * d, d) = z.segment(t * d, d);
  }
  return Tensor({kLatentTokens, batch, d}, std::move(out));
}

CsvTable feature_table(const MotionDataset& ds) {
  CsvTable t;
  t.header = {"index", "class", "frames"};
  for (Index j = 0; j < kJoints; ++j) {
    for (const char* f : kFeatureNames) t.header.push_back(std::string(kJointNames[j]) + "_" + f);
  }
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& m = ds.items[i];
    std::vector<std::string> row = {std::to_string(i), std::to_string(m.label), std::to_string(m.frames())};
    const Eigen::VectorXd f = motion_features(m);
    for (Index k = 0; k < f.size(); ++k) row.push_back(csv_number(f(k)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

std::uint64_t role_seed(std::uint64_t seed, DataRole role) {
  // splitmix64 finalizer over (seed, role).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(role) + 0x100);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

DenoiserConfig denoiser_config(const RunConfig& c) {
  if (c.depth < 1) throw UsageError("depth must be at least 1");
  if (c.latent_dim < 1) throw UsageError("latent_dim must be positive");
  if (c.train_timesteps < 2) throw UsageError("train_timesteps must be at least 2");
  DenoiserConfig d;
  d.depth = c.depth;
  d.tokens = kLatentTokens;
  d.channels = c.latent_dim;
  d.condition_dim = kConditionDim;
  d.heads = c.latent_dim % 4 == 0 ? 4 : 1;
  d.train_steps = c.train_timesteps;
  return d;
}

std::unique_ptr<Model> Model::make(const RunConfig& config) {
  auto m = std::make_unique<Model>();
  m->config = config;
  const DenoiserConfig dcfg = denoiser_config(config);
  Rng rng(config.seed);
  Init init(m->params, rng);
  AutoencoderConfig acfg;
  acfg.latent_tokens = kLatentTokens;
  acfg.latent_dim = config.latent_dim;
  m->vae = Autoencoder::make(acfg, init);
  m->cond = ConditionTable::make(init, kClasses, kConditionDim);
  m->denoiser = Denoiser::make(dcfg, init);
  m->schedule = build_schedule(config.train_timesteps);
  m->norm.mean = Eigen::ArrayXd::Zero(kChannels);
  m->norm.scale = Eigen::ArrayXd::Ones(kChannels);
  return m;
}

ParamSet Model::diffusion_params() const {
  ParamSet out;
  for (const auto& p : params.items()) {
    if (p.name.rfind("vae.", 0) != 0) out.items().push_back(p);
  }
  return out;
}

NoisePredictor Model::predictor() const {
  return [this](const Tensor& z, std::span<const int> t, const Tensor& c) { return denoiser(z, t, c); };
}

Values Model::encode(const MotionSequence& m) const {
  NoGradGuard no_grad;
  const Posterior q = vae.encode(frames_tensor(norm.normalize(m.data)));
  return q.mu.values() * latent_scale;
}

MotionSequence Model::decode(std::span<const double> latent, Index frames, int label) const {
  NoGradGuard no_grad;
  const Index d = config.latent_dim;
  if (static_cast<Index>(latent.size()) != kLatentTokens * d) throw std::invalid_argument("latent size mismatch");
  Values z = Eigen::Map<const Values>(latent.data(), static_cast<Index>(latent.size())) / latent_scale;
  MotionSequence m;
  m.label = label;
  m.data = norm.denormalize(tensor_frames(vae.decode(Tensor({kLatentTokens, d}, std::move(z)), frames)));
  recompute_velocities(m.data);
  return m;
}

Checkpoint make_checkpoint(const Model& model, const AdamW* opt, const ParamSet* opt_params, const Rng* rng) {
  Checkpoint ck;
  ck.step = opt ? opt->steps() : 0;
  ck.rng_state = rng ? rng_text(*rng) : "";
  ck.vae_trained = model.vae_trained;
  ck.config_text = model.config.to_text();
  for (const auto& p : model.params.items()) ck.tensors.push_back({p.name, p.tensor.shape(), p.tensor.values(), {}, {}});
  if (opt && opt_params) {
    const auto& m = opt->first_moments();
    const auto& v = opt->second_moments();
    for (std::size_t i = 0; i < opt_params->items().size(); ++i) {
      for (auto& t : ck.tensors) {
        if (t.name == opt_params->items()[i].name) {
          t.m = m[i];
          t.v = v[i];
        }
      }
    }
  }
  ck.tensors.push_back({"norm.mean", {kChannels}, model.norm.mean, {}, {}});
  ck.tensors.push_back({"norm.scale", {kChannels}, model.norm.scale, {}, {}});
  ck.tensors.push_back({"latent.scale", {1}, Values::Constant(1, model.latent_scale), {}, {}});
  return ck;
}

void restore_model(Model& model, const Checkpoint& ck) {
  const std::size_t expected = model.params.items().size() + 3;
  if (ck.tensors.size() != expected) {
    throw CheckpointError("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                          std::to_string(expected) + " (depth or latent_dim differ?)");
  }
  for (auto& p : model.params.items()) {
    const CheckpointTensor& t = ck.find(p.name);
    if (t.shape != p.tensor.shape()) {
      throw CheckpointError("shape mismatch for " + p.name + ": checkpoint " + shape_string(t.shape) + ", model " +
                            shape_string(p.tensor.shape()));
    }
  }
  for (auto& p : model.params.items()) p.tensor.mutable_values() = ck.find(p.name).values;
  model.norm.mean = ck.find("norm.mean").values;
  model.norm.scale = ck.find("norm.scale").values;
  model.latent_scale = ck.find("latent.scale").values(0);
  model.vae_trained = ck.vae_trained;
}

void restore_optimizer(AdamW& opt, const ParamSet& opt_params, const Checkpoint& ck) {
  for (std::size_t i = 0; i < opt_params.items().size(); ++i) {
    const CheckpointTensor& t = ck.find(opt_params.items()[i].name);
    if (t.m.size() == 0) throw CheckpointError("checkpoint has no optimizer state for " + t.name);
    opt.first_moments()[i] = t.m;
    opt.second_moments()[i] = t.v;
  }
  opt.set_steps(ck.step);
}

void train_model_autoencoder(Model& model, const MotionDataset& data, std::ostream& log) {
  model.norm = ChannelNorm::fit(data);
  AutoencoderTrainOptions opt;
  opt.epochs = static_cast<int>(model.config.epochs);
  opt.lr = model.config.vae_lr;
  opt.kl_weight = model.config.kl_weight;
  opt.seed = role_seed(model.config.seed, DataRole::train);
  train_autoencoder(model.vae, model.params, data, model.norm, opt,
                    [&log](int epoch, double loss) { log << "vae epoch " << epoch + 1 << " loss " << loss << "\n"; });
  // Unit RMS latents on the training clips.
  model.latent_scale = 1.0;
  double sq = 0.0, n = 0.0;
  for (const auto& m : data.items) {
    const Values z = model.encode(m);
    sq += z.square().sum();
    n += static_cast<double>(z.size());
  }
  model.latent_scale = 1.0 / std::sqrt(std::max(sq / n, 1e-300));
  model.vae_trained = true;
}

TrainReport run_train(const RunConfig& config, std::ostream& log) {
  if (config.batch < 1 || config.steps < 0 || config.val_every < 1 || config.train_clips < 1 ||
      config.val_clips < 1) {
    throw UsageError("batch, val_every, train_clips and val_clips must be positive; steps nonnegative");
  }
  ensure_dir(config.out);
  log << "# effective config\n" << config.to_text() << std::flush;
  {
    std::ofstream echo(config.out + "/config.txt", std::ios::binary);
    echo << config.to_text();
    if (!echo) throw std::runtime_error("cannot write " + config.out + "/config.txt");
  }

  auto model = Model::make(config);
  ParamSet trainable = model->diffusion_params();
  AdamWConfig ocfg;
  ocfg.lr = config.lr;
  AdamW opt(trainable, ocfg);
  Rng rng(role_seed(config.seed, DataRole::noise));
  TrainReport report;

  const std::string ckpt = checkpoint_path(config);
  if (config.resume && std::filesystem::exists(ckpt)) {
    const Checkpoint ck = load_checkpoint(ckpt);
    restore_model(*model, ck);
    restore_optimizer(opt, trainable, ck);
    if (!ck.rng_state.empty()) {
      std::istringstream s(ck.rng_state);
      s >> rng;
    }
    report.start_step = static_cast<long>(ck.step);
    const CsvTable losses = load_csv(config.out + "/loss.csv");
    for (std::size_t i = 0; i < losses.rows.size(); ++i) {
      if (losses.number(i, "step") <= static_cast<double>(report.start_step)) {
        report.losses.push_back(losses.number(i, "loss"));
      }
    }
    const CsvTable val = load_csv(config.out + "/val.csv");
    for (std::size_t i = 0; i < val.rows.size(); ++i) {
      const long step = static_cast<long>(val.number(i, "step"));
      if (step <= report.start_step) report.validation.emplace_back(step, val.number(i, "val_loss"));
    }
    log << "resumed at step " << report.start_step << "\n";
  }

  const MotionDataset train = generate_dataset(config.train_clips, role_seed(config.seed, DataRole::train));
  const MotionDataset val = generate_dataset(config.val_clips, role_seed(config.seed, DataRole::validation));
  if (!model->vae_trained) train_model_autoencoder(*model, train, log);
  report.vae_mse = reconstruction_mse(model->vae, val, model->norm);
  log << "vae held-out mse " << report.vae_mse << "\n";

  const Index d = config.latent_dim;
  std::vector<Values> latents, val_latents;
  std::vector<int> train_labels = labels(train), val_labels = labels(val);
  for (const auto& m : train.items) latents.push_back(model->encode(m));
  for (const auto& m : val.items) val_latents.push_back(model->encode(m));

  // Fixed validation noise and timesteps, so the curve tracks parameters only.
  Rng val_rng(role_seed(config.seed, DataRole::validation) + 1);
  std::uniform_int_distribution<int> pick_t(0, static_cast<int>(config.train_timesteps) - 1);
  std::vector<int> val_t;
  for (std::size_t i = 0; i < val_latents.size(); ++i) val_t.push_back(pick_t(val_rng));
  const Tensor val_eps = randn({kLatentTokens, static_cast<Index>(val_latents.size()), d}, val_rng);
  const NoisePredictor model_fn = model->predictor();
  auto validation_loss = [&] {
    NoGradGuard no_grad;
    std::vector<std::size_t> idx(val_latents.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Tensor z0 = gather_batch(val_latents, idx, d);
    return training_loss(model_fn, model->schedule, z0, val_t, val_eps, model->cond(val_labels)).item();
  };

  if (report.start_step == 0) report.validation.emplace_back(0, validation_loss());
  std::uniform_int_distribution<std::size_t> pick_item(0, latents.size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const auto batch = static_cast<std::size_t>(config.batch);
  for (long step = report.start_step; step < config.steps; ++step) {
    std::vector<std::size_t> idx(batch);
    std::vector<int> t(batch), ids(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      idx[b] = pick_item(rng);
      t[b] = pick_t(rng);
      ids[b] = coin(rng) < config.cond_dropout ? ConditionTable::kNull : train_labels[idx[b]];
    }
    const Tensor eps = randn({kLatentTokens, config.batch, d}, rng);
    Tape tape;
    const Tensor loss = training_loss(model_fn, model->schedule, gather_batch(latents, idx, d), t, eps, model->cond(ids));
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("non-finite diffusion loss at step " + std::to_string(step + 1));
    tape.backward(loss);
    opt.step();
    report.losses.push_back(value);
    if ((step + 1) % config.val_every == 0 || step + 1 == config.steps) {
      report.validation.emplace_back(step + 1, validation_loss());
      log << "step " << step + 1 << " loss " << value << " val " << report.validation.back().second << "\n"
          << std::flush;
    }
  }
  report.final_step = static_cast<long>(opt.steps());

  save_checkpoint(ckpt, make_checkpoint(*model, &opt, &trainable, &rng));
  CsvTable loss_csv{{"step", "loss"}, {}};
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    loss_csv.rows.push_back({std::to_string(i + 1), csv_number(report.losses[i])});
  }
  save_csv(config.out + "/loss.csv", loss_csv);
  CsvTable val_csv{{"step", "val_loss"}, {}};
  for (const auto& [step, v] : report.validation) val_csv.rows.push_back({std::to_string(step), csv_number(v)});
  save_csv(config.out + "/val.csv", val_csv);
  return report;
}

Tensor sample_latents(const Model& model, std::span<const int> classes, Rng& rng) {
  const Index batch = static_cast<Index>(classes.size());
  const std::vector<int> nulls(classes.size(), ConditionTable::kNull);
  NoGradGuard no_grad;
  const NoisePredictor fn = guided(model.predictor(), model.cond(nulls), model.config.guidance);
  SampleOptions opts;
  opts.steps = static_cast<int>(model.config.sample_steps);
  opts.clip_x0 = model.config.clip_x0;
  return sample_loop(model.schedule, fn, {kLatentTokens, batch, model.config.latent_dim}, model.cond(classes), opts,
                     rng);
}

MotionDataset generate_motion(const Model& model, std::span<const int> classes, std::span<const Index> frames,
                              std::uint64_t seed) {
  if (classes.size() != frames.size()) throw std::invalid_argument("one length per requested class");
  const Index d = model.config.latent_dim;
  Rng rng(seed);
  MotionDataset out;
  for (std::size_t start = 0; start < classes.size(); start += kSampleChunk) {
    const std::size_t n = std::min<std::size_t>(kSampleChunk, classes.size() - start);
    const Tensor z = sample_latents(model, classes.subspan(start, n), rng);
    const auto& v = z.values();
    const Index batch = static_cast<Index>(n);
    for (Index b = 0; b < batch; ++b) {
      Values code(kLatentTokens * d);
      for (Index t = 0; t < kLatentTokens; ++t) code.segment(t * d, d) = v.segment((t * batch + b) * d, d);
      out.items.push_back(model.decode(std::span<const double>(code.data(), static_cast<std::size_t>(code.size())),
                                       frames[start + static_cast<std::size_t>(b)], classes[start + static_cast<std::size_t>(b)]));
    }
  }
  return out;
}

std::unique_ptr<Model> load_trained(const RunConfig& config) {
  auto model = Model::make(config);
  restore_model(*model, load_checkpoint(checkpoint_path(config)));
  return model;
}

MotionDataset run_sample(const RunConfig& config, std::ostream& log) {
  if (config.count < 0) throw UsageError("count must be nonnegative");
  if (config.class_id < -1 || config.class_id >= kClasses) throw UsageError("class_id must be -1 or in [0, 8)");
  if (config.frames != 0 && (config.frames < kMinFrames || config.frames > kMaxFrames)) {
    throw UsageError("frames must be 0 or in [16, 196]");
  }
  if (config.sample_steps < 1) throw UsageError("sample_steps must be positive");
  log << "# effective config\n" << config.to_text() << std::flush;
  auto model = load_trained(config);
  Rng rng(role_seed(config.seed, DataRole::sample));
  std::uniform_int_distribution<Index> pick_len(kMinFrames, kMaxFrames);
  std::vector<int> classes;
  std::vector<Index> frames;
  for (long i = 0; i < config.count; ++i) {
    classes.push_back(config.class_id >= 0 ? static_cast<int>(config.class_id) : static_cast<int>(i % kClasses));
    frames.push_back(config.frames > 0 ? config.frames : pick_len(rng));
  }
  MotionDataset samples = generate_motion(*model, classes, frames, rng());
  save_dataset(config.out + "/samples.mmds", samples);
  save_csv(config.out + "/samples.csv", feature_table(samples));
  log << "wrote " << samples.items.size() << " samples to " << config.out << "/samples.mmds\n";
  return samples;
}

EvalReport evaluate(const Model& model, const RunConfig& config) {
  if (config.eval_clips < 2) throw std::runtime_error("evaluation set is empty (eval_clips < 2)");
  if (config.long_clips < kLongMinCount) {
    throw std::runtime_error("long-only split needs at least 100 sequences, got " + std::to_string(config.long_clips));
  }
  const std::uint64_t sample_seed = role_seed(config.seed, DataRole::sample) + 1;
  auto generated_like = [&](const MotionDataset& real, std::uint64_t seed) {
    std::vector<int> classes = labels(real);
    std::vector<Index> frames;
    for (const auto& m : real.items) frames.push_back(m.frames());
    return generate_motion(model, classes, frames, seed);
  };
  const MotionDataset real = generate_dataset(config.eval_clips, role_seed(config.seed, DataRole::eval));
  const MotionDataset real_long =
      generate_dataset(config.long_clips, role_seed(config.seed, DataRole::eval_long), kLongMinFrames, kMaxFrames);
  const MotionDataset gen = generated_like(real, sample_seed);
  const MotionDataset gen_long = generated_like(real_long, sample_seed + 1);

  EvalReport r;
  r.full_count = static_cast<long>(gen.items.size());
  r.long_count = static_cast<long>(gen_long.items.size());
  const Eigen::MatrixXd fr = feature_matrix(real), fg = feature_matrix(gen);
  r.fd_full = frechet_distance(gaussian_stats(fg), gaussian_stats(fr));
  r.fd_long = frechet_distance(gaussian_stats(feature_matrix(gen_long)), gaussian_stats(feature_matrix(real_long)));

  const MotionDataset probe_set = generate_dataset(config.train_clips, role_seed(config.seed, DataRole::probe));
  const LinearProbe probe = LinearProbe::fit(feature_matrix(probe_set), labels(probe_set), kClasses);
  const std::vector<int> gl = labels(gen);
  r.probe_accuracy = probe.accuracy(fg, gl);
  std::vector<int> hits(kClasses, 0), totals(kClasses, 0);
  for (Eigen::Index i = 0; i < fg.rows(); ++i) {
    const int c = gl[static_cast<std::size_t>(i)];
    ++totals[static_cast<std::size_t>(c)];
    hits[static_cast<std::size_t>(c)] += probe.predict(fg.row(i).transpose()) == c ? 1 : 0;
  }
  for (int c = 0; c < kClasses; ++c) {
    r.class_accuracy.push_back(totals[static_cast<std::size_t>(c)]
                                   ? static_cast<double>(hits[static_cast<std::size_t>(c)]) / totals[static_cast<std::size_t>(c)]
                                   : 0.0);
  }
  r.diversity_generated = mean_pairwise_distance(fg);
  r.diversity_real = mean_pairwise_distance(fr);
  return r;
}

EvalReport run_eval(const RunConfig& config, std::ostream& log) {
  log << "# effective config\n" << config.to_text() << std::flush;
  auto model = load_trained(config);
  const EvalReport r = evaluate(*model, config);
  CsvTable t{{"metric", "value", "note"}, {}};
  t.rows.push_back({"frechet_full", csv_number(r.fd_full), std::to_string(r.full_count) + " clips L in [16;196]"});
  t.rows.push_back({"frechet_long", csv_number(r.fd_long),
                    std::to_string(r.long_count) + " clips L in [160;196]; long-sequence analogy only"});
  t.rows.push_back({"probe_accuracy", csv_number(r.probe_accuracy), "chance 0.125"});
  for (int c = 0; c < kClasses; ++c) {
    t.rows.push_back({"probe_accuracy_" + std::string(class_name(c)), csv_number(r.class_accuracy[static_cast<std::size_t>(c)]), ""});
  }
  t.rows.push_back({"diversity_generated", csv_number(r.diversity_generated), "mean pairwise feature distance"});
  t.rows.push_back({"diversity_real", csv_number(r.diversity_real), "mean pairwise feature distance"});
  save_csv(config.out + "/metrics.csv", t);
  for (const auto& row : t.rows) log << row[0] << " " << row[1] << "\n";
  return r;
}

}  // namespace mmamba
