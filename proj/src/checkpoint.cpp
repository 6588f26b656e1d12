#include "mmamba/checkpoint.hpp"

#include "mmamba/binary_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace mmamba {

namespace {

std::string expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("checkpoint manifest ends before '" + key + "'");
  if (line.rfind(key, 0) != 0) throw CheckpointError("checkpoint manifest expected '" + key + "', got '" + line + "'");
  return line.size() > key.size() ? line.substr(key.size() + 1) : "";
}

long long parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw CheckpointError("bad " + what + " in checkpoint manifest: '" + text + "'");
  }
}

}  // namespace

const CheckpointTensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw CheckpointError("checkpoint has no tensor " + name);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  std::size_t config_lines = 0;
  for (char c : ck.config_text) config_lines += c == '\n' ? 1 : 0;
  if (!ck.config_text.empty() && ck.config_text.back() != '\n') {
    throw std::invalid_argument("config text must end with a newline");
  }
  out << "MMCK\nversion 1\ndtype f64le\n";
  out << "step " << ck.step << "\n";
  out << "rng " << ck.rng_state << "\n";
  out << "vae_trained " << (ck.vae_trained ? 1 : 0) << "\n";
  out << "config " << config_lines << "\n" << ck.config_text;
  out << "tensors " << ck.tensors.size() << "\n";
  for (const auto& t : ck.tensors) {
    if (t.name.find_first_of(" \n") != std::string::npos) throw std::invalid_argument("tensor name with space");
    Index size = 1;
    out << t.name << " " << t.shape.size();
    for (Index d : t.shape) {
      out << " " << d;
      size *= d;
    }
    const bool moments = t.m.size() > 0;
    if (t.values.size() != size || (moments && (t.m.size() != size || t.v.size() != size))) {
      throw std::invalid_argument("checkpoint tensor " + t.name + " payload does not match its shape");
    }
    out << " " << (moments ? 1 : 0) << "\n";
  }
  out << "end\n";
  for (const auto& t : ck.tensors) {
    io::write_doubles(out, t.values.data(), static_cast<std::size_t>(t.values.size()));
    if (t.m.size() > 0) {
      io::write_doubles(out, t.m.data(), static_cast<std::size_t>(t.m.size()));
      io::write_doubles(out, t.v.data(), static_cast<std::size_t>(t.v.size()));
    }
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ck;
  std::string line;
  if (!std::getline(in, line) || line != "MMCK") throw CheckpointError("not a checkpoint (bad magic)");
  if (expect_line(in, "version") != "1") throw CheckpointError("unsupported checkpoint version");
  if (expect_line(in, "dtype") != "f64le") throw CheckpointError("unsupported checkpoint dtype");
  ck.step = parse_int(expect_line(in, "step"), "step");
  ck.rng_state = expect_line(in, "rng");
  ck.vae_trained = parse_int(expect_line(in, "vae_trained"), "vae flag") != 0;
  const long long config_lines = parse_int(expect_line(in, "config"), "config length");
  for (long long i = 0; i < config_lines; ++i) {
    if (!std::getline(in, line)) throw CheckpointError("checkpoint config is truncated");
    ck.config_text += line + "\n";
  }
  const long long count = parse_int(expect_line(in, "tensors"), "tensor count");
  std::vector<bool> moments;
  for (long long i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw CheckpointError("checkpoint tensor list is truncated");
    std::istringstream row(line);
    CheckpointTensor t;
    std::size_t rank = 0;
    if (!(row >> t.name >> rank) || rank > 8) throw CheckpointError("bad tensor line: " + line);
    Index size = 1;
    for (std::size_t r = 0; r < rank; ++r) {
      Index d = 0;
      if (!(row >> d) || d < 1) throw CheckpointError("bad tensor line: " + line);
      t.shape.push_back(d);
      size *= d;
    }
    int has = 0;
    if (!(row >> has)) throw CheckpointError("bad tensor line: " + line);
    t.values.resize(size);
    if (has) {
      t.m.resize(size);
      t.v.resize(size);
    }
    ck.tensors.push_back(std::move(t));
  }
  if (!std::getline(in, line) || line != "end") throw CheckpointError("checkpoint manifest missing 'end'");
  try {
    for (auto& t : ck.tensors) {
      io::read_doubles(in, t.values.data(), static_cast<std::size_t>(t.values.size()));
      if (t.m.size() > 0) {
        io::read_doubles(in, t.m.data(), static_cast<std::size_t>(t.m.size()));
        io::read_doubles(in, t.v.data(), static_cast<std::size_t>(t.v.size()));
      }
    }
  } catch (const std::runtime_error& e) {
    throw CheckpointError(std::string("checkpoint payload is truncated: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    write_checkpoint(out, ck);
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace mmamba
