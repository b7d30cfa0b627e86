#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fasam/nn/layers.hpp"
#include "fasam/tensor.hpp"

namespace fasam {

/// Self-describing weight container: a JSON header (config snapshot, counters,
/// parameter manifest) followed by raw little-endian doubles. Round-trips
/// bit-exactly.
struct Checkpoint {
  std::string config_json;  // snapshot of the config that produced the weights
  long iteration = 0;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> param_names;   // serialization order
  std::map<std::string, Tensor> params;

  void put(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return params.count(name) != 0; }

  /// Copies every collected parameter value into the container.
  void capture(const nn::ParamList& list);
  /// Writes container values back into the collected parameters.
  void restore(const nn::ParamList& list) const;

  /// Raw bytes of one named parameter blob (for bit-exact comparisons).
  std::vector<std::uint8_t> blob_bytes(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace fasam
