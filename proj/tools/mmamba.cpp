// Command-line front end: train, sample, eval, bench, params.

#include "CLI11.hpp"

#include "mmamba/bench.hpp"
#include "mmamba/blocks.hpp"
#include "mmamba/csv.hpp"
#include "mmamba/pipeline.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace mmamba;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Flags {
  std::string config_file;
  std::optional<std::string> seed, depth, latent_dim, steps, epochs, out, guidance, class_id, count, frames;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "key=value file applied before flags");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--depth", f.depth, "encoder/decoder pairs N");
  cmd->add_option("--latent-dim", f.latent_dim, "latent width d");
  cmd->add_option("--steps", f.steps, "denoiser optimizer steps");
  cmd->add_option("--epochs", f.epochs, "autoencoder epochs");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--guidance", f.guidance, "classifier-free guidance weight");
  cmd->add_option("--set", f.sets, "any config key as key=value, repeatable");
}

// File first, then --set, then named flags.
RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config_file.empty()) c.load_file(f.config_file);
  for (const auto& kv : f.sets) c.apply_text(kv);
  const std::pair<const char*, const std::optional<std::string>*> named[] = {
      {"seed", &f.seed},     {"depth", &f.depth},       {"latent_dim", &f.latent_dim}, {"steps", &f.steps},
      {"epochs", &f.epochs}, {"out", &f.out},           {"guidance", &f.guidance},     {"class_id", &f.class_id},
      {"count", &f.count},   {"frames", &f.frames}};
  for (const auto& [key, value] : named) {
    if (value->has_value()) c.set(key, **value);
  }
  return c;
}

void run_params(const RunConfig& c) {
  const Index d = c.latent_dim;
  const Index expand = denoiser_config(c).expand;
  const Index mamba = mamba_layer_param_count(d, expand * d, 16, 4);
  const Index wide = mamba_layer_param_count(d, 2 * d, 16, 4);
  const Index tf = transformer_block_param_count(d);
  auto model = Model::make(c);
  const Index vae = model->params.count("vae.");
  const Index cond = model->params.count("cond_table");
  const Index total = model->params.count();

  CsvTable table;
  table.header = {"item", "params", "note"};
  const std::string parts = "norm + in_proj + conv + x_proj + dt_proj + A_log/D + out_proj; state 16 conv 4";
  table.rows.push_back({"mamba_layer", std::to_string(mamba), parts + " expand " + std::to_string(expand) + " as in the denoiser"});
  table.rows.push_back({"mamba_layer_expand2", std::to_string(wide), parts + " expand 2"});
  table.rows.push_back({"transformer_block", std::to_string(tf), "4d^2+4d attention + 8d^2+5d feed-forward + 4d norms"});
  table.rows.push_back({"ratio", csv_number(static_cast<double>(mamba) / static_cast<double>(tf)), "mamba_layer / transformer_block"});
  table.rows.push_back({"ratio_expand2", csv_number(static_cast<double>(wide) / static_cast<double>(tf)), "mamba_layer_expand2 / transformer_block"});
  table.rows.push_back({"denoiser", std::to_string(total - vae - cond), "depth " + std::to_string(c.depth)});
  table.rows.push_back({"condition_table", std::to_string(cond), "class embeddings plus null row"});
  table.rows.push_back({"autoencoder", std::to_string(vae), "latent 2 x " + std::to_string(d)});
  write_csv(std::cout, table);
  std::filesystem::create_directories(c.out);
  save_csv((std::filesystem::path(c.out) / "params.csv").string(), table);
}

void run_bench_command(const RunConfig& c) {
  BenchOptions o;
  o.width = c.bench_width;
  o.min_t = c.bench_min_t;
  o.max_t = c.bench_max_t;
  o.repeats = static_cast<int>(c.bench_repeats);
  o.seed = c.seed;
  if (o.repeats < 5) throw UsageError("bench_repeats must be at least 5");
  if (o.width < 1) throw UsageError("bench_width must be positive");
  if (o.min_t < 1 || o.max_t < o.min_t) throw UsageError("need 1 <= bench_min_t <= bench_max_t");
  const auto records = run_bench(o, &std::cerr);
  std::filesystem::create_directories(c.out);
  const auto path = (std::filesystem::path(c.out) / "bench.csv").string();
  write_bench_csv(path, records);
  std::cout << "wrote " << path << (bench_monotone(records) ? "" : " (warning: non-monotone timings)") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion latent diffusion with selective state space blocks"};
  app.require_subcommand(1);
  Flags f;
  auto* train = app.add_subcommand("train", "train autoencoder and denoiser, write checkpoint and loss CSV");
  auto* sample = app.add_subcommand("sample", "generate motion from a checkpoint");
  auto* eval = app.add_subcommand("eval", "Frechet distance, class probe and diversity");
  auto* bench = app.add_subcommand("bench", "forward time against sequence length");
  auto* params = app.add_subcommand("params", "parameter counts");
  for (auto* cmd : {train, sample, eval, bench, params}) add_common(cmd, f);
  bool resume = false;
  train->add_flag("--resume", resume, "continue from <out>/checkpoint.mmck");
  sample->add_option("--class", f.class_id, "class id, -1 cycles through all");
  sample->add_option("--count", f.count, "number of samples");
  sample->add_option("--frames", f.frames, "frames per sample, 0 draws lengths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    RunConfig c = resolve(f);
    if (resume) c.resume = true;
    if (*train) {
      run_train(c, std::cout);
    } else if (*sample) {
      run_sample(c, std::cout);
    } else if (*eval) {
      run_eval(c, std::cout);
    } else if (*bench) {
      run_bench_command(c);
    } else if (*params) {
      run_params(c);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
