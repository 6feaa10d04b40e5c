#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "touchadd/geometry.hpp"
#include "touchadd/image.hpp"
#include "touchadd/nn/params.hpp"
#include "touchadd/nn/tensor.hpp"
#include "touchadd/placement/vocab.hpp"

namespace touchadd::placement {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlacementConfig {
  int image_size = 64;  // working resolution; the marker is drawn at this size
  int patch = 8;
  int d_model = 128;
  int layers = 4;
  int heads = 4;
  int context = 256;
  int mlp_mult = 4;
  int max_response = 48;
  bool coord_channels = true;  // append normalized pixel x, y to every patch pixel

  int patches() const { return (image_size / patch) * (image_size / patch); }
  int patch_inputs() const { return (coord_channels ? 5 : 3) * patch * patch; }
  void validate() const;
  std::string to_json() const;
  static PlacementConfig from_json(const std::string& text);
};

/// Anything that can produce a response token sequence for a composite image
/// and prompt. The trained model is one; tests plug in scripted generators.
class ResponseGenerator {
 public:
  virtual ~ResponseGenerator() = default;
  virtual int image_size() const = 0;
  virtual const Vocabulary& vocab() const = 0;
  /// Box sizes used when the generated response cannot be parsed.
  virtual SizeStats fallback_sizes() const = 0;
  virtual int max_response() const = 0;
  virtual std::vector<int> generate(const Image& composite, std::span<const int> prompt,
                                    int max_new) const = 0;
};

/// Toy vision-language decoder: a patch-MLP vision encoder feeding a causal
/// pre-LN transformer over [patch features, prompt, response].
class PlacementModel final : public ResponseGenerator {
 public:
  PlacementModel(PlacementConfig config, Vocabulary vocab, std::uint64_t init_seed);
  PlacementModel(PlacementModel&&) = default;
  PlacementModel& operator=(PlacementModel&&) = default;
  // Copies would alias the parameter tensors.
  PlacementModel(const PlacementModel&) = delete;
  PlacementModel& operator=(const PlacementModel&) = delete;

  const PlacementConfig& config() const { return config_; }
  const Vocabulary& vocab() const override { return vocab_; }
  int image_size() const override { return config_.image_size; }
  int max_response() const override { return config_.max_response; }
  SizeStats fallback_sizes() const override { return size_stats_; }
  void set_fallback_sizes(const SizeStats& s) { size_stats_ = s; }

  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  /// Image pixels rearranged as [patches, patch_inputs()], scaled to [-1, 1].
  /// With coord_channels each pixel also carries its own position in [-1, 1].
  nn::Mat patchify(const Image& composite) const;

  /// Patch feature sequence [patches, d_model]. Throws on resolution mismatch.
  nn::Tensor vision_embed(const Image& composite) const;
  nn::Tensor vision_embed_patches(const nn::Mat& patches) const;

  /// Logits [rows.size(), vocab] at the requested text positions, each row
  /// predicting the token that follows that position.
  nn::Tensor logits(const nn::Tensor& features, std::span<const int> text_ids,
                    std::span<const int> rows) const;

  /// Logits at every text position.
  nn::Tensor logits(const nn::Tensor& features, std::span<const int> text_ids) const;

  std::vector<int> generate(const Image& composite, std::span<const int> prompt,
                            int max_new) const override;
  std::vector<int> generate_from_features(const nn::Tensor& features, std::span<const int> prompt,
                                          int max_new) const;

  void save(const std::filesystem::path& path) const;
  static PlacementModel load(const std::filesystem::path& path);

 private:
  nn::Tensor hidden(const nn::Tensor& features, std::span<const int> text_ids) const;

  PlacementConfig config_;
  Vocabulary vocab_;
  SizeStats size_stats_;
  nn::ParamStore params_;

  struct Block {
    nn::Tensor ln1_g, ln1_b, w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
    nn::Tensor ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };
  nn::Tensor patch_w1_, patch_b1_, patch_w2_, patch_b2_, patch_pos_;
  nn::Tensor tok_emb_, text_pos_;
  std::vector<Block> blocks_;
  nn::Tensor lnf_g_, lnf_b_, head_w_, head_b_;
};

/// Mean NLL of `targets` at positions where `loss_mask` is set. Position i
/// of the text sequence is scored against targets[i].
nn::Tensor masked_lm_loss(const PlacementModel& model, const nn::Tensor& features,
                          std::span<const int> input_ids, std::span<const int> targets,
                          std::span<const std::uint8_t> loss_mask);

/// Autoregressive LM loss over the response tokens given the prompt, averaged
/// over response positions.
nn::Tensor lm_loss(const PlacementModel& model, const nn::Tensor& features,
                   const TokenSequence& prompt, const TokenSequence& response);

}  // namespace touchadd::placement
