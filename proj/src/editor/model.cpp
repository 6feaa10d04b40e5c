#include "touchadd/editor/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "touchadd/nn/ops.hpp"

namespace touchadd::editor {

using nlohmann::json;
using nn::Mat;
using nn::Tensor;

namespace {

constexpr const char* kMagic = "TADDEDT\x01";
constexpr std::uint32_t kFormatVersion = 1;
constexpr int kTimeFeatures = 16;

Mat time_features(int t) {
  Mat f(1, kTimeFeatures);
  for (int i = 0; i < kTimeFeatures / 2; ++i) {
    const double freq = std::pow(1000.0, -static_cast<double>(i) / (kTimeFeatures / 2));
    f(0, i) = std::sin(t * freq);
    f(0, i + kTimeFeatures / 2) = std::cos(t * freq);
  }
  return f;
}

Mat conv_init(int cout, int cin, Rng& rng) {
  return nn::normal_init(cout, cin * 9, std::sqrt(2.0 / (cin * 9)), rng);
}

}  // namespace

const char* conditioning_name(Conditioning c) noexcept {
  return c == Conditioning::kBox ? "box" : "touch";
}

Conditioning parse_conditioning(const std::string& name) {
  if (name == "box") return Conditioning::kBox;
  if (name == "touch") return Conditioning::kTouch;
  throw EditorError("unknown conditioning '" + name + "'");
}

void EditorConfig::validate() const {
  if (image_size < kMinImageSide || image_size % 4 != 0)
    throw EditorError("editor image size must be a multiple of 4 and at least 16");
  if (base_channels < 1 || embed_dim < 1) throw EditorError("editor widths must be positive");
  if (steps < 1) throw EditorError("diffusion needs at least one step");
  if (touch_mask_px < 1) throw EditorError("touch mask size must be positive");
}

std::string EditorConfig::to_json() const {
  return json{{"image_size", image_size},   {"base_channels", base_channels},
              {"embed_dim", embed_dim},     {"steps", steps},
              {"conditioning", conditioning_name(conditioning)},
              {"touch_mask_px", touch_mask_px}}
      .dump();
}

EditorConfig EditorConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  EditorConfig c;
  c.image_size = j.at("image_size");
  c.base_channels = j.at("base_channels");
  c.embed_dim = j.at("embed_dim");
  c.steps = j.at("steps");
  c.conditioning = parse_conditioning(j.at("conditioning"));
  c.touch_mask_px = j.at("touch_mask_px");
  c.validate();
  return c;
}

Plane box_channel(const NormalizedBBox& box, int width, int height) {
  const Corners c = box.clamped_corners();
  int x0 = static_cast<int>(std::lround(c.x0 * width));
  int x1 = static_cast<int>(std::lround(c.x1 * width));
  int y0 = static_cast<int>(std::lround(c.y0 * height));
  int y1 = static_cast<int>(std::lround(c.y1 * height));
  // A valid box always covers at least one pixel.
  if (x1 <= x0) x1 = std::min(width, x0 + 1), x0 = x1 - 1;
  if (y1 <= y0) y1 = std::min(height, y0 + 1), y0 = y1 - 1;
  Plane p(width, height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) p.at(x, y) = 1.0f;
  return p;
}

Mat image_to_mat(const Image& image) {
  const int n = image.width() * image.height();
  Mat m(3, n);
  const auto& bytes = image.bytes();
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m(c, i) = bytes[static_cast<std::size_t>(i) * 3 + c] / 127.5 - 1.0;
  return m;
}

Image mat_to_image(const Mat& m, int width, int height) {
  if (m.rows() != 3 || m.cols() != static_cast<nn::Index>(width) * height)
    throw EditorError("image matrix has the wrong shape");
  Image img(width, height);
  auto& bytes = img.bytes();
  for (nn::Index i = 0; i < m.cols(); ++i)
    for (int c = 0; c < 3; ++c)
      bytes[static_cast<std::size_t>(i) * 3 + c] = to_byte((m(c, i) + 1.0) * 127.5);
  return img;
}

Mat plane_to_row(const Plane& p) {
  Mat m(1, static_cast<nn::Index>(p.width()) * p.height());
  for (nn::Index i = 0; i < m.cols(); ++i) m(0, i) = p.values()[static_cast<std::size_t>(i)];
  return m;
}

EditorModel::ConvBlock EditorModel::make_block(const std::string& name, int cin, int cout, Rng& rng) {
  ConvBlock b;
  b.w1 = params_.add(name + ".conv1.w", conv_init(cout, cin, rng));
  b.b1 = params_.add(name + ".conv1.b", Mat::Zero(cout, 1));
  b.w2 = params_.add(name + ".conv2.w", conv_init(cout, cout, rng));
  b.b2 = params_.add(name + ".conv2.b", Mat::Zero(cout, 1));
  b.emb_w = params_.add(name + ".emb.w", nn::normal_init(config_.embed_dim, cout, 0.02, rng));
  b.emb_b = params_.add(name + ".emb.b", Mat::Zero(1, cout));
  return b;
}

EditorModel::EditorModel(EditorConfig config, placement::Vocabulary vocab, std::uint64_t init_seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  Rng rng(init_seed);
  const int c = config_.base_channels, e = config_.embed_dim;
  time_w1_ = params_.add("time.w1", nn::normal_init(kTimeFeatures, e, 1.0 / std::sqrt(kTimeFeatures), rng));
  time_b1_ = params_.add("time.b1", Mat::Zero(1, e));
  time_w2_ = params_.add("time.w2", nn::normal_init(e, e, 1.0 / std::sqrt(e), rng));
  time_b2_ = params_.add("time.b2", Mat::Zero(1, e));
  word_emb_ = params_.add("instruction.emb", nn::normal_init(vocab_.size(), e, 0.1, rng));
  enc1_ = make_block("enc1", 7, c, rng);
  enc2_ = make_block("enc2", c, 2 * c, rng);
  mid_ = make_block("mid", 2 * c, 4 * c, rng);
  dec2_ = make_block("dec2", 6 * c, 2 * c, rng);
  dec1_ = make_block("dec1", 3 * c, c, rng);
  // A zero noise head predicts eps = 0, so a fresh model scores MSE ~ 1.
  noise_w_ = params_.add("head.noise.w", Mat::Zero(3, c * 9));
  noise_b_ = params_.add("head.noise.b", Mat::Zero(3, 1));
  mask_w_ = params_.add("head.mask.w", nn::normal_init(1, c * 9, 0.01, rng));
  mask_b_ = params_.add("head.mask.b", Mat::Zero(1, 1));
}

std::vector<int> EditorModel::instruction_ids(std::string_view instruction) const {
  std::vector<int> ids;
  for (int id : vocab_.tokenize(instruction))
    if (id != placement::kUnk) ids.push_back(id);
  return ids;
}

Tensor EditorModel::embed(int t, std::span<const int> instruction) const {
  Tensor h = nn::silu(nn::linear(Tensor::constant(time_features(t)), time_w1_, time_b1_));
  h = nn::linear(h, time_w2_, time_b2_);
  if (!instruction.empty()) h = nn::add(h, nn::embedding_bag(word_emb_, instruction));
  return nn::silu(h);
}

Tensor EditorModel::run_block(const ConvBlock& b, const Tensor& x, const Tensor& emb, int h, int w) const {
  Tensor y = nn::conv3x3(x, b.w1, b.b1, h, w);
  y = nn::add_col(y, nn::transpose(nn::linear(emb, b.emb_w, b.emb_b)));
  y = nn::silu(y);
  return nn::silu(nn::conv3x3(y, b.w2, b.b2, h, w));
}

EditorOutput EditorModel::forward(const Mat& x_t, const Mat& source, const Mat& cond, int t,
                                  std::span<const int> instruction) const {
  const int S = config_.image_size;
  const nn::Index n = static_cast<nn::Index>(S) * S;
  if (x_t.rows() != 3 || x_t.cols() != n || source.rows() != 3 || source.cols() != n ||
      cond.rows() != 1 || cond.cols() != n)
    throw EditorError("editor inputs must be at the model resolution");
  const Tensor emb = embed(t, instruction);
  Mat input(7, n);
  input << x_t, source, cond;
  const Tensor x = Tensor::constant(std::move(input));

  const Tensor h1 = run_block(enc1_, x, emb, S, S);
  const Tensor h2 = run_block(enc2_, nn::avg_pool2(h1, S, S), emb, S / 2, S / 2);
  const Tensor h3 = run_block(mid_, nn::avg_pool2(h2, S / 2, S / 2), emb, S / 4, S / 4);
  const Tensor u2 = run_block(dec2_, nn::concat_rows({nn::upsample2(h3, S / 4, S / 4), h2}), emb, S / 2, S / 2);
  const Tensor u1 = run_block(dec1_, nn::concat_rows({nn::upsample2(u2, S / 2, S / 2), h1}), emb, S, S);
  return {nn::conv3x3(u1, noise_w_, noise_b_, S, S), nn::conv3x3(u1, mask_w_, mask_b_, S, S)};
}

void EditorModel::save(const std::filesystem::path& path) const {
  const json cfg{{"model", json::parse(config_.to_json())}, {"vocab", vocab_.words()}};
  nn::write_checkpoint(path, kMagic, kFormatVersion, cfg.dump(), params_);
}

EditorModel EditorModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nn::CheckpointError("cannot open checkpoint " + path.string());
  const nn::CheckpointHeader header = nn::read_checkpoint_header(in, kMagic, kFormatVersion);
  const json cfg = json::parse(header.config_json);
  EditorModel model(EditorConfig::from_json(cfg.at("model").dump()),
                    placement::Vocabulary::from_words(cfg.at("vocab").get<std::vector<std::string>>()), 0);
  model.params_.read(in);
  return model;
}

}  // namespace touchadd::editor
