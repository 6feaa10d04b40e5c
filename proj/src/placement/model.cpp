#include "touchadd/placement/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "touchadd/nn/ops.hpp"

namespace touchadd::placement {

using nlohmann::json;
using nn::Mat;
using nn::Tensor;

namespace {

constexpr const char* kMagic = "TADDPLC\x01";
constexpr std::uint32_t kFormatVersion = 1;

Mat ones_row(nn::Index n) { return Mat::Ones(1, n); }
Mat zeros(nn::Index r, nn::Index c) { return Mat::Zero(r, c); }

}  // namespace

void PlacementConfig::validate() const {
  if (image_size < kMinImageSide || patch < 1 || image_size % patch != 0)
    throw ModelError("image size must be a multiple of the patch size");
  if (d_model < 1 || heads < 1 || d_model % heads != 0)
    throw ModelError("d_model must be divisible by the head count");
  if (layers < 1 || mlp_mult < 1 || max_response < 6) throw ModelError("invalid model dimensions");
  if (context < 1) throw ModelError("context must be positive");
}

std::string PlacementConfig::to_json() const {
  return json{{"image_size", image_size}, {"patch", patch},       {"d_model", d_model},
              {"layers", layers},         {"heads", heads},       {"context", context},
              {"mlp_mult", mlp_mult},     {"max_response", max_response},
              {"coord_channels", coord_channels}}
      .dump();
}

PlacementConfig PlacementConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  PlacementConfig c;
  c.image_size = j.at("image_size");
  c.patch = j.at("patch");
  c.d_model = j.at("d_model");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.context = j.at("context");
  c.mlp_mult = j.at("mlp_mult");
  c.max_response = j.at("max_response");
  c.coord_channels = j.at("coord_channels");
  c.validate();
  return c;
}

PlacementModel::PlacementModel(PlacementConfig config, Vocabulary vocab, std::uint64_t init_seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (config_.patches() >= config_.context)
    throw ModelError("context too short for the patch sequence");
  Rng rng(init_seed);
  const nn::Index d = config_.d_model;
  const nn::Index pin = config_.patch_inputs();
  const nn::Index text_len = config_.context - config_.patches();
  const nn::Real std = 0.02;
  const nn::Real resid_std = std / std::sqrt(2.0 * config_.layers);

  patch_w1_ = params_.add("vision.w1", nn::normal_init(pin, d, 1.0 / std::sqrt(static_cast<double>(pin)), rng));
  patch_b1_ = params_.add("vision.b1", zeros(1, d));
  patch_w2_ = params_.add("vision.w2", nn::normal_init(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  patch_b2_ = params_.add("vision.b2", zeros(1, d));
  patch_pos_ = params_.add("vision.pos", nn::normal_init(config_.patches(), d, std, rng));
  tok_emb_ = params_.add("text.tok", nn::normal_init(vocab_.size(), d, std, rng));
  text_pos_ = params_.add("text.pos", nn::normal_init(text_len, d, std, rng));
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block b;
    b.ln1_g = params_.add(p + "ln1.g", ones_row(d));
    b.ln1_b = params_.add(p + "ln1.b", zeros(1, d));
    b.w_q = params_.add(p + "attn.wq", nn::normal_init(d, d, std, rng));
    b.b_q = params_.add(p + "attn.bq", zeros(1, d));
    b.w_k = params_.add(p + "attn.wk", nn::normal_init(d, d, std, rng));
    b.b_k = params_.add(p + "attn.bk", zeros(1, d));
    b.w_v = params_.add(p + "attn.wv", nn::normal_init(d, d, std, rng));
    b.b_v = params_.add(p + "attn.bv", zeros(1, d));
    b.w_o = params_.add(p + "attn.wo", nn::normal_init(d, d, resid_std, rng));
    b.b_o = params_.add(p + "attn.bo", zeros(1, d));
    b.ln2_g = params_.add(p + "ln2.g", ones_row(d));
    b.ln2_b = params_.add(p + "ln2.b", zeros(1, d));
    const nn::Index hidden = d * config_.mlp_mult;
    b.w_fc = params_.add(p + "mlp.wfc", nn::normal_init(d, hidden, std, rng));
    b.b_fc = params_.add(p + "mlp.bfc", zeros(1, hidden));
    b.w_proj = params_.add(p + "mlp.wproj", nn::normal_init(hidden, d, resid_std, rng));
    b.b_proj = params_.add(p + "mlp.bproj", zeros(1, d));
    blocks_.push_back(std::move(b));
  }
  lnf_g_ = params_.add("final.ln.g", ones_row(d));
  lnf_b_ = params_.add("final.ln.b", zeros(1, d));
  head_w_ = params_.add("head.w", nn::normal_init(d, vocab_.size(), std, rng));
  head_b_ = params_.add("head.b", zeros(1, vocab_.size()));
}

Mat PlacementModel::patchify(const Image& composite) const {
  const int S = config_.image_size;
  if (composite.width() != S || composite.height() != S)
    throw ModelError("composite is " + std::to_string(composite.width()) + "x" +
                     std::to_string(composite.height()) + ", model expects " + std::to_string(S) +
                     "x" + std::to_string(S));
  const int p = config_.patch;
  const int grid = S / p;
  Mat out(grid * grid, config_.patch_inputs());
  const double scale = 2.0 / S;
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const nn::Index row = gy * grid + gx;
      nn::Index col = 0;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < 3; ++c)
            out(row, col++) = 2.0 * composite.unit(gx * p + x, gy * p + y, c) - 1.0;
      if (config_.coord_channels)
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x) {
            out(row, col++) = (gx * p + x + 0.5) * scale - 1.0;
            out(row, col++) = (gy * p + y + 0.5) * scale - 1.0;
          }
    }
  return out;
}

Tensor PlacementModel::vision_embed_patches(const Mat& patches) const {
  if (patches.rows() != config_.patches() || patches.cols() != config_.patch_inputs())
    throw ModelError("patch matrix has the wrong shape");
  const Tensor x = Tensor::constant(patches);
  const Tensor h = nn::gelu(nn::linear(x, patch_w1_, patch_b1_));
  return nn::add(nn::linear(h, patch_w2_, patch_b2_), patch_pos_);
}

Tensor PlacementModel::vision_embed(const Image& composite) const {
  return vision_embed_patches(patchify(composite));
}

Tensor PlacementModel::hidden(const Tensor& features, std::span<const int> text_ids) const {
  const int n_text = static_cast<int>(text_ids.size());
  if (features.rows() + n_text > config_.context)
    throw ModelError("sequence of " + std::to_string(features.rows() + n_text) +
                     " tokens exceeds the context length " + std::to_string(config_.context));
  std::vector<int> positions(static_cast<std::size_t>(n_text));
  std::iota(positions.begin(), positions.end(), 0);
  const Tensor text = nn::add(nn::embedding(tok_emb_, text_ids), nn::embedding(text_pos_, positions));
  Tensor x = nn::concat_rows({features, text});
  for (const Block& b : blocks_) {
    const Tensor h = nn::layer_norm(x, b.ln1_g, b.ln1_b);
    const Tensor q = nn::linear(h, b.w_q, b.b_q);
    const Tensor k = nn::linear(h, b.w_k, b.b_k);
    const Tensor v = nn::linear(h, b.w_v, b.b_v);
    x = nn::add(x, nn::linear(nn::causal_attention(q, k, v, config_.heads), b.w_o, b.b_o));
    const Tensor h2 = nn::layer_norm(x, b.ln2_g, b.ln2_b);
    x = nn::add(x, nn::linear(nn::gelu(nn::linear(h2, b.w_fc, b.b_fc)), b.w_proj, b.b_proj));
  }
  return x;
}

Tensor PlacementModel::logits(const Tensor& features, std::span<const int> text_ids,
                              std::span<const int> rows) const {
  const Tensor x = hidden(features, text_ids);
  std::vector<int> absolute;
  absolute.reserve(rows.size());
  for (int r : rows) {
    if (r < 0 || r >= static_cast<int>(text_ids.size())) throw ModelError("logit row out of range");
    absolute.push_back(static_cast<int>(features.rows()) + r);
  }
  const Tensor picked = nn::embedding(x, absolute);
  return nn::linear(nn::layer_norm(picked, lnf_g_, lnf_b_), head_w_, head_b_);
}

Tensor PlacementModel::logits(const Tensor& features, std::span<const int> text_ids) const {
  std::vector<int> rows(text_ids.size());
  std::iota(rows.begin(), rows.end(), 0);
  return logits(features, text_ids, rows);
}

std::vector<int> PlacementModel::generate_from_features(const Tensor& features,
                                                        std::span<const int> prompt,
                                                        int max_new) const {
  nn::NoGradGuard no_grad;
  std::vector<int> ids(prompt.begin(), prompt.end());
  std::vector<int> out;
  const int budget = std::min<int>(max_new, config_.context - static_cast<int>(features.rows()) -
                                                static_cast<int>(ids.size()));
  for (int step = 0; step < budget; ++step) {
    const int last = static_cast<int>(ids.size()) - 1;
    const Tensor lg = logits(features, ids, std::span<const int>(&last, 1));
    nn::Index best = 0;
    lg.value().row(0).maxCoeff(&best);
    const int next = static_cast<int>(best);
    out.push_back(next);
    if (next == kEos) break;
    ids.push_back(next);
  }
  return out;
}

std::vector<int> PlacementModel::generate(const Image& composite, std::span<const int> prompt,
                                          int max_new) const {
  nn::NoGradGuard no_grad;
  return generate_from_features(vision_embed(composite), prompt, max_new);
}

void PlacementModel::save(const std::filesystem::path& path) const {
  const json cfg{{"model", json::parse(config_.to_json())},
                 {"vocab", vocab_.words()},
                 {"size_stats",
                  {{"mean_w", size_stats_.mean_w},
                   {"std_w", size_stats_.std_w},
                   {"mean_h", size_stats_.mean_h},
                   {"std_h", size_stats_.std_h}}}};
  nn::write_checkpoint(path, kMagic, kFormatVersion, cfg.dump(), params_);
}

PlacementModel PlacementModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nn::CheckpointError("cannot open checkpoint " + path.string());
  const nn::CheckpointHeader header = nn::read_checkpoint_header(in, kMagic, kFormatVersion);
  const json cfg = json::parse(header.config_json);
  PlacementModel model(PlacementConfig::from_json(cfg.at("model").dump()),
                       Vocabulary::from_words(cfg.at("vocab").get<std::vector<std::string>>()), 0);
  const auto& s = cfg.at("size_stats");
  model.size_stats_ = {s.at("mean_w"), s.at("std_w"), s.at("mean_h"), s.at("std_h")};
  model.params_.read(in);
  return model;
}

Tensor masked_lm_loss(const PlacementModel& model, const Tensor& features,
                      std::span<const int> input_ids, std::span<const int> targets,
                      std::span<const std::uint8_t> loss_mask) {
  if (targets.size() != input_ids.size() || loss_mask.size() != input_ids.size())
    throw ModelError("inputs, targets and mask must have equal length");
  std::vector<int> rows, picked;
  for (std::size_t i = 0; i < input_ids.size(); ++i) {
    if (!loss_mask[i]) continue;
    rows.push_back(static_cast<int>(i));
    picked.push_back(targets[i]);
  }
  if (rows.empty()) throw ModelError("loss mask selects no positions");
  return nn::cross_entropy(model.logits(features, input_ids, rows), picked);
}

Tensor lm_loss(const PlacementModel& model, const Tensor& features, const TokenSequence& prompt,
               const TokenSequence& response) {
  if (prompt.ids.empty() || response.ids.empty()) throw ModelError("empty prompt or response");
  const std::size_t P = prompt.size(), R = response.size();
  if (features.rows() + static_cast<nn::Index>(P + R) - 1 > model.config().context)
    throw ModelError("prompt and response exceed the context length");
  // The final response token is never fed back in.
  std::vector<int> inputs(prompt.ids);
  inputs.insert(inputs.end(), response.ids.begin(), response.ids.end() - 1);
  std::vector<int> targets(inputs.size(), kPad);
  std::vector<std::uint8_t> mask(inputs.size(), 0);
  for (std::size_t j = 0; j < R; ++j) {
    targets[P - 1 + j] = response.ids[j];
    mask[P - 1 + j] = 1;
  }
  return masked_lm_loss(model, features, inputs, targets, mask);
}

}  // namespace touchadd::placement
