#include "doctest.h"

#include "mmamba/csv.hpp"
#include "mmamba/pipeline.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

using namespace mmamba;

namespace {

std::string root() {
  const auto dir = std::filesystem::temp_directory_path() / "mmamba_pipeline_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

RunConfig small(const std::string& name) {
  RunConfig c;
  c.latent_dim = 32;
  c.depth = 2;
  c.batch = 16;
  c.lr = 1e-3;
  c.epochs = 2;
  c.train_clips = 96;
  c.val_clips = 32;
  c.val_every = 10;
  c.sample_steps = 10;
  c.out = root() + "/" + name;
  std::filesystem::remove_all(c.out);
  return c;
}

std::string bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_bits(const Values& a, const Values& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("smoke run at d=32 for 200 steps lowers the loss") {
  RunConfig c = small("smoke");
  c.steps = 200;
  c.val_every = 50;
  std::ostringstream log;
  const TrainReport r = run_train(c, log);
  REQUIRE(r.losses.size() == 200);
  REQUIRE(r.validation.size() == 5);
  CHECK(r.validation.front().first == 0);
  CHECK(r.validation.back().first == 200);
  CHECK(r.validation.back().second < r.validation.front().second);
  const double head = std::accumulate(r.losses.begin(), r.losses.begin() + 20, 0.0);
  const double tail = std::accumulate(r.losses.end() - 20, r.losses.end(), 0.0);
  CHECK(tail < head);
  CHECK(r.final_step == 200);

  // The log starts with the effective config, and replaying it reproduces the run settings.
  const std::string text = log.str();
  const std::string echo = text.substr(text.find('\n') + 1, c.to_text().size());
  CHECK(echo == c.to_text());
  RunConfig replay;
  replay.load_file(c.out + "/config.txt");
  CHECK(replay.to_text() == c.to_text());

  const CsvTable loss = load_csv(c.out + "/loss.csv");
  REQUIRE(loss.rows.size() == 200);
  for (std::size_t i = 0; i < 200; ++i) CHECK(loss.number(i, "loss") == r.losses[i]);
}

TEST_CASE("same seed reproduces loss curves, checkpoints and samples byte for byte") {
  RunConfig a = small("seed_a"), b = small("seed_b");
  a.steps = b.steps = 20;
  a.count = b.count = 6;
  std::ostringstream log;
  run_train(a, log);
  run_train(b, log);
  CHECK(bytes(a.out + "/loss.csv") == bytes(b.out + "/loss.csv"));
  CHECK(bytes(a.out + "/val.csv") == bytes(b.out + "/val.csv"));
  run_sample(a, log);
  run_sample(b, log);
  CHECK(bytes(a.out + "/samples.mmds") == bytes(b.out + "/samples.mmds"));
  CHECK(bytes(a.out + "/samples.csv") == bytes(b.out + "/samples.csv"));

  // Same settings apart from the output path: identical tensors.
  const Checkpoint ca = load_checkpoint(a.out + "/checkpoint.mmck");
  const Checkpoint cb = load_checkpoint(b.out + "/checkpoint.mmck");
  REQUIRE(ca.tensors.size() == cb.tensors.size());
  for (std::size_t i = 0; i < ca.tensors.size(); ++i) CHECK(same_bits(ca.tensors[i].values, cb.tensors[i].values));

  RunConfig other = small("seed_c");
  other.steps = 20;
  other.seed = 1;
  run_train(other, log);
  CHECK(bytes(other.out + "/loss.csv") != bytes(a.out + "/loss.csv"));
}

TEST_CASE("resume continues the step counter and matches an uninterrupted run") {
  RunConfig full = small("resume_full");
  full.steps = 20;
  std::ostringstream log;
  run_train(full, log);

  RunConfig part = small("resume_part");
  part.steps = 10;
  run_train(part, log);
  CHECK(load_checkpoint(part.out + "/checkpoint.mmck").step == 10);
  part.steps = 20;
  part.resume = true;
  const TrainReport r = run_train(part, log);
  CHECK(r.start_step == 10);
  CHECK(r.final_step == 20);
  CHECK(r.losses.size() == 20);

  CHECK(bytes(part.out + "/loss.csv") == bytes(full.out + "/loss.csv"));
  CHECK(bytes(part.out + "/val.csv") == bytes(full.out + "/val.csv"));
  const Checkpoint cf = load_checkpoint(full.out + "/checkpoint.mmck");
  const Checkpoint cp = load_checkpoint(part.out + "/checkpoint.mmck");
  CHECK(cp.step == 20);
  CHECK(cp.rng_state == cf.rng_state);
  REQUIRE(cf.tensors.size() == cp.tensors.size());
  for (std::size_t i = 0; i < cf.tensors.size(); ++i) {
    CHECK(same_bits(cf.tensors[i].values, cp.tensors[i].values));
    CHECK(same_bits(cf.tensors[i].m, cp.tensors[i].m));
    CHECK(same_bits(cf.tensors[i].v, cp.tensors[i].v));
  }
}

TEST_CASE("checkpoint reload gives bit-identical forward passes") {
  RunConfig c = small("reload");
  c.steps = 5;
  std::ostringstream log;
  run_train(c, log);
  const auto model = load_trained(c);

  const auto path = c.out + "/copy.mmck";
  save_checkpoint(path, make_checkpoint(*model, nullptr, nullptr, nullptr));
  auto fresh = Model::make(c);
  restore_model(*fresh, load_checkpoint(path));

  Rng rng(11);
  const Tensor z = randn({2, 3, c.latent_dim}, rng);
  const std::vector<int> t = {0, 500, 999};
  const std::vector<int> ids = {1, ConditionTable::kNull, 7};
  NoGradGuard no_grad;
  CHECK(same_bits(model->predictor()(z, t, model->cond(ids)).values(),
                  fresh->predictor()(z, t, fresh->cond(ids)).values()));

  const MotionSequence clip = generate_dataset(1, 3).items[0];
  const Values code = model->encode(clip);
  CHECK(same_bits(code, fresh->encode(clip)));
  const std::span<const double> span(code.data(), static_cast<std::size_t>(code.size()));
  CHECK(same_bits(Eigen::Map<const Values>(model->decode(span, 40, 2).data.data(), 40 * kChannels),
                  Eigen::Map<const Values>(fresh->decode(span, 40, 2).data.data(), 40 * kChannels)));
}

TEST_CASE("loading into a model of another shape is refused") {
  RunConfig c = small("mismatch");
  c.steps = 1;
  std::ostringstream log;
  run_train(c, log);
  RunConfig deeper = c;
  deeper.depth = 3;
  CHECK_THROWS_AS(load_trained(deeper), CheckpointError);
  RunConfig wider = c;
  wider.latent_dim = 16;
  CHECK_THROWS_AS(load_trained(wider), CheckpointError);
}

TEST_CASE("sampling zero clips writes empty outputs") {
  RunConfig c = small("empty");
  c.steps = 1;
  std::ostringstream log;
  run_train(c, log);
  c.count = 0;
  const MotionDataset s = run_sample(c, log);
  CHECK(s.items.empty());
  CHECK(load_dataset(c.out + "/samples.mmds").items.empty());
  CHECK(load_csv(c.out + "/samples.csv").rows.empty());

  c.count = 3;
  c.class_id = 5;
  c.frames = 24;
  const MotionDataset three = run_sample(c, log);
  REQUIRE(three.items.size() == 3);
  for (const auto& m : three.items) {
    CHECK(m.label == 5);
    CHECK(m.frames() == 24);
  }
  c.class_id = 8;
  CHECK_THROWS_AS(run_sample(c, log), UsageError);
}

TEST_CASE("evaluation guards and writes a metrics table") {
  RunConfig c = small("eval");
  c.steps = 1;
  std::ostringstream log;
  run_train(c, log);
  c.eval_clips = 24;
  c.long_clips = 99;
  CHECK_THROWS_WITH(run_eval(c, log), doctest::Contains("at least 100"));
  c.long_clips = 100;
  const EvalReport r = run_eval(c, log);
  CHECK(r.full_count == 24);
  CHECK(r.long_count == 100);
  CHECK(r.fd_full >= 0.0);
  CHECK(r.probe_accuracy >= 0.0);
  CHECK(r.probe_accuracy <= 1.0);
  const CsvTable t = load_csv(c.out + "/metrics.csv");
  CHECK(t.header == std::vector<std::string>{"metric", "value", "note"});
  CHECK(t.number(0, "value") == r.fd_full);
}

TEST_CASE("unwritable output path is a runtime failure") {
  RunConfig c = small("unwritable");
  {
    std::ofstream blocker(c.out);
    blocker << "file";
  }
  c.out += "/inside";
  std::ostringstream log;
  CHECK_THROWS(run_train(c, log));
}
