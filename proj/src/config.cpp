#include "mmamba/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace mmamba {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw UsageError("invalid value '" + text + "' for " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError("invalid value '" + text + "' for " + key + " (true or false)");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field field(const char* key, M RunConfig::*member) {
  using T = std::remove_cvref_t<decltype(std::declval<RunConfig>().*member)>;
  Field f{key, {}, {}};
  f.set = [key, member](RunConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*member = v;
    } else if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(key, v);
    } else {
      c.*member = parse_number<T>(key, v);
    }
  };
  f.get = [member](const RunConfig& c) {
    if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_same_v<T, bool>) {
      return std::string(c.*member ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      field("seed", &RunConfig::seed),
      field("depth", &RunConfig::depth),
      field("latent_dim", &RunConfig::latent_dim),
      field("steps", &RunConfig::steps),
      field("batch", &RunConfig::batch),
      field("lr", &RunConfig::lr),
      field("epochs", &RunConfig::epochs),
      field("vae_lr", &RunConfig::vae_lr),
      field("kl_weight", &RunConfig::kl_weight),
      field("train_clips", &RunConfig::train_clips),
      field("val_clips", &RunConfig::val_clips),
      field("val_every", &RunConfig::val_every),
      field("cond_dropout", &RunConfig::cond_dropout),
      field("guidance", &RunConfig::guidance),
      field("sample_steps", &RunConfig::sample_steps),
      field("clip_x0", &RunConfig::clip_x0),
      field("train_timesteps", &RunConfig::train_timesteps),
      field("out", &RunConfig::out),
      field("resume", &RunConfig::resume),
      field("class_id", &RunConfig::class_id),
      field("count", &RunConfig::count),
      field("frames", &RunConfig::frames),
      field("eval_clips", &RunConfig::eval_clips),
      field("long_clips", &RunConfig::long_clips),
      field("bench_width", &RunConfig::bench_width),
      field("bench_min_t", &RunConfig::bench_min_t),
      field("bench_max_t", &RunConfig::bench_max_t),
      field("bench_repeats", &RunConfig::bench_repeats),
  };
  return all;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  // Flags spell keys with dashes, files with underscores.
  std::string k = key;
  for (char& ch : k) ch = ch == '-' ? '_' : ch;
  for (const auto& f : fields()) {
    if (k == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(number) + " is not key=value: " + body);
    }
    set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  apply_text(text.str());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

}  // namespace mmamba
