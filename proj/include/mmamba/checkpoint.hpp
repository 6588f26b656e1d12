#pragma once

// Checkpoint file: text manifest, then little-endian f64 payloads.
//
//   MMCK
//   version 1
//   dtype f64le
//   step <optimizer steps taken>
//   rng <mt19937_64 state, space separated>    (empty when absent)
//   vae_trained <0|1>
//   config <line count>
//   <key=value lines>
//   tensors <count>
//   <name> <rank> <dims...> <moments 0|1>      (one line per tensor)
//   end
//   payload: per tensor its values, then first and second moments when present

#include "mmamba/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mmamba {

/// Manifest disagreement with the model being loaded; the CLI reports it as
/// a runtime failure.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  Shape shape;
  Values values;
  Values m, v;  // empty when the tensor carries no optimizer state
};

struct Checkpoint {
  std::int64_t step = 0;
  std::string rng_state;
  bool vae_trained = false;
  std::string config_text;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& in);
/// Writes to a temporary sibling and renames, so a crash never leaves a torn file.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mmamba
