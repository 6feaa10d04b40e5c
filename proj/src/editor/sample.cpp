#include "touchadd/editor/sample.hpp"

#include <algorithm>
#include <cmath>

#include "touchadd/editor/train.hpp"
#include "touchadd/nn/ops.hpp"

namespace touchadd::editor {

using nn::Mat;

namespace {

EditResult run_chain(const EditorModel& model, const Image& source, std::string_view instruction,
                     const Mat& cond, const DiffusionSchedule& schedule, std::uint64_t seed) {
  if (schedule.steps() != model.config().steps)
    throw EditorError("schedule has " + std::to_string(schedule.steps()) + " steps, model was trained with " +
                      std::to_string(model.config().steps));
  const int S = model.config().image_size;
  const Image src = (source.width() == S && source.height() == S) ? source : resize_bilinear(source, S, S);
  const Mat src_m = image_to_mat(src);
  const std::vector<int> ids = model.instruction_ids(instruction);
  nn::NoGradGuard no_grad;
  Rng rng(seed);
  auto gaussian = [&rng](nn::Index cols) {
    Mat m(3, cols);
    for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  };

  Mat x = gaussian(src_m.cols());
  Mat mask_logits;
  for (int t = schedule.steps(); t >= 1; --t) {
    const EditorOutput out = model.forward(x, src_m, cond, t, ids);
    const Mat x0 = schedule.predict_x0(x, t, out.noise.value()).cwiseMax(-1.0).cwiseMin(1.0);
    x = schedule.posterior_mean(x0, x, t);
    if (t > 1) x += std::sqrt(schedule.posterior_variance(t)) * gaussian(x.cols());
    if (t == 1) mask_logits = out.mask_logits.value();
  }

  EditResult r;
  r.edited_image = mat_to_image(x, S, S);
  r.instance_mask = Plane(S, S);
  for (nn::Index i = 0; i < mask_logits.cols(); ++i)
    r.instance_mask.values()[static_cast<std::size_t>(i)] =
        static_cast<float>(1.0 / (1.0 + std::exp(-mask_logits(0, i))));
  r.blended_image = blend(src, r.edited_image, r.instance_mask);
  return r;
}

}  // namespace

Image blend(const Image& source, const Image& edited, const Plane& mask) {
  if (source.width() != edited.width() || source.height() != edited.height() ||
      mask.width() != source.width() || mask.height() != source.height())
    throw EditorError("blend inputs must share dimensions");
  Image out(source.width(), source.height());
  const auto& s = source.bytes();
  const auto& e = edited.bytes();
  auto& o = out.bytes();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double m = std::clamp<double>(mask.values()[i / 3], 0.0, 1.0);
    if (m == 0.0) o[i] = s[i];
    else if (m == 1.0) o[i] = e[i];
    else o[i] = to_byte(m * e[i] + (1.0 - m) * s[i]);
  }
  return out;
}

EditResult sample_edit(const EditorModel& model, const Image& source, std::string_view instruction,
                       const NormalizedBBox& bbox, const DiffusionSchedule& schedule, std::uint64_t seed) {
  if (model.config().conditioning != Conditioning::kBox)
    throw EditorError("sample_edit needs a box-conditioned model");
  if (!bbox.valid()) throw GeometryError("invalid box " + to_string(bbox));
  const int S = model.config().image_size;
  return run_chain(model, source, instruction, plane_to_row(box_channel(bbox, S, S)), schedule, seed);
}

EditResult sample_edit_touch_ablation(const EditorModel& model, const Image& source,
                                      std::string_view instruction, const TouchPoint& touch,
                                      const DiffusionSchedule& schedule, std::uint64_t seed) {
  if (model.config().conditioning != Conditioning::kTouch)
    throw EditorError("the touch ablation needs a touch-conditioned model");
  if (!touch.in_bounds(source.width(), source.height())) throw GeometryError("touch point outside the image");
  const TouchPoint t = touch.to_normalized(source.width(), source.height());
  return run_chain(model, source, instruction, conditioning_channel(model.config(), {}, t), schedule, seed);
}

}  // namespace touchadd::editor
