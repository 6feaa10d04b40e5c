#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "touchadd/geometry.hpp"
#include "touchadd/image.hpp"
#include "touchadd/nn/params.hpp"
#include "touchadd/nn/tensor.hpp"
#include "touchadd/placement/vocab.hpp"

namespace touchadd::editor {

class EditorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What the extra spatial conditioning channel carries.
enum class Conditioning { kBox, kTouch };
const char* conditioning_name(Conditioning c) noexcept;
Conditioning parse_conditioning(const std::string& name);

struct EditorConfig {
  int image_size = 64;
  int base_channels = 8;
  int embed_dim = 32;
  int steps = 200;
  Conditioning conditioning = Conditioning::kBox;
  int touch_mask_px = 12;

  void validate() const;
  std::string to_json() const;
  static EditorConfig from_json(const std::string& text);
};

/// 1 inside the pixel-rounded box, 0 outside. The box edges are rounded to
/// the nearest pixel boundary after clamping to the image.
Plane box_channel(const NormalizedBBox& box, int width, int height);

/// Image as a [3, H*W] matrix in [-1, 1].
nn::Mat image_to_mat(const Image& image);
/// Inverse of image_to_mat; values are clamped and rounded to bytes.
Image mat_to_image(const nn::Mat& m, int width, int height);
nn::Mat plane_to_row(const Plane& p);

struct EditorOutput {
  nn::Tensor noise;        // [3, H*W]
  nn::Tensor mask_logits;  // [1, H*W]
};

/// Small UNet denoiser: two pooling levels with skip connections, per-channel
/// biases from the time step and a bag-of-words instruction embedding.
class EditorModel {
 public:
  EditorModel(EditorConfig config, placement::Vocabulary vocab, std::uint64_t init_seed);
  EditorModel(EditorModel&&) = default;
  EditorModel& operator=(EditorModel&&) = default;
  EditorModel(const EditorModel&) = delete;
  EditorModel& operator=(const EditorModel&) = delete;

  const EditorConfig& config() const { return config_; }
  const placement::Vocabulary& vocab() const { return vocab_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  std::vector<int> instruction_ids(std::string_view instruction) const;

  /// x_t and source are [3, H*W] in [-1, 1]; cond is the [1, H*W] spatial
  /// conditioning channel.
  EditorOutput forward(const nn::Mat& x_t, const nn::Mat& source, const nn::Mat& cond, int t,
                       std::span<const int> instruction) const;

  void save(const std::filesystem::path& path) const;
  static EditorModel load(const std::filesystem::path& path);

 private:
  struct ConvBlock {
    nn::Tensor w1, b1, w2, b2, emb_w, emb_b;
  };
  ConvBlock make_block(const std::string& name, int cin, int cout, Rng& rng);
  nn::Tensor run_block(const ConvBlock& b, const nn::Tensor& x, const nn::Tensor& emb, int h, int w) const;
  nn::Tensor embed(int t, std::span<const int> instruction) const;

  EditorConfig config_;
  placement::Vocabulary vocab_;
  nn::ParamStore params_;
  nn::Tensor time_w1_, time_b1_, time_w2_, time_b2_, word_emb_;
  ConvBlock enc1_, enc2_, mid_, dec2_, dec1_;
  nn::Tensor noise_w_, noise_b_, mask_w_, mask_b_;
};

}  // namespace touchadd::editor
