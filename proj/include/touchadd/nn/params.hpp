#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "touchadd/nn/tensor.hpp"
#include "touchadd/rng.hpp"

namespace touchadd::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Ordered collection of trainable tensors. Order defines the on-disk layout.
class ParamStore {
 public:
  Tensor add(std::string name, Mat init);

  std::vector<NamedParam>& entries() { return params_; }
  const std::vector<NamedParam>& entries() const { return params_; }
  const Tensor& get(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grad();

  void write(std::ostream& out) const;
  /// Reads values into the existing tensors; names and shapes must match.
  void read(std::istream& in);

  /// Deep copy of the values (fresh nodes, same requires_grad flags).
  ParamStore clone() const;

 private:
  std::vector<NamedParam> params_;
};

Mat normal_init(Index rows, Index cols, Real stddev, Rng& rng);

struct AdamConfig {
  Real lr = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Real weight_decay = 0.0;
  Real clip_norm = 1.0;  // <= 0 disables clipping
};

class Adam {
 public:
  Adam(ParamStore& params, AdamConfig config);

  /// Applies one update from the accumulated gradients (averaged over
  /// `batch` samples) and clears them. lr_scale multiplies the base rate.
  void step(Real lr_scale = 1.0, Real batch = 1.0);

  const AdamConfig& config() const { return config_; }

 private:
  ParamStore& params_;
  AdamConfig config_;
  std::vector<Mat> m_, v_;
  long long t_ = 0;
};

/// FNV-1a, used for config hashes embedded in checkpoints.
std::uint64_t fnv1a64(const std::string& text) noexcept;

/// Single-file checkpoint: magic, format version, config JSON, config hash,
/// then the parameter blob.
void write_checkpoint(const std::filesystem::path& path, const std::string& magic,
                      std::uint32_t version, const std::string& config_json,
                      const ParamStore& params);

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::string config_json;
  std::uint64_t config_hash = 0;
};

/// Reads the header; leaves `in` positioned at the parameter blob.
CheckpointHeader read_checkpoint_header(std::istream& in, const std::string& magic,
                                        std::uint32_t expected_version);

}  // namespace touchadd::nn
