#include "touchadd/placement/predict.hpp"

#include "touchadd/touchprior.hpp"

namespace touchadd::placement {

Image placement_composite(int model_size, const Image& image, const TouchPoint& touch) {
  if (!touch.in_bounds(image.width(), image.height()))
    throw GeometryError("touch point outside the image");
  const TouchPoint t = touch.to_normalized(image.width(), image.height());
  const Image resized = (image.width() == model_size && image.height() == model_size)
                            ? image
                            : resize_bilinear(image, model_size, model_size);
  return render_marker(resized, t);
}

PlacementResult predict_placement(const ResponseGenerator& model, const Image& image,
                                  std::string_view instruction, const TouchPoint& touch) {
  const Image composite = placement_composite(model.image_size(), image, touch);
  const TokenSequence prompt = encode_prompt(instruction, model.vocab());

  PlacementResult result;
  result.token_ids = model.generate(composite, prompt.ids, model.max_response());
  DecodedResponse decoded = decode_response(result.token_ids, model.vocab());
  result.reasoning = std::move(decoded.reasoning);
  if (decoded.bbox && decoded.bbox->valid()) {
    result.bbox = *decoded.bbox;
  } else {
    const SizeStats s = model.fallback_sizes();
    result.bbox = box_at_touch(touch.to_normalized(image.width(), image.height()), s.mean_w, s.mean_h);
    result.fallback_used = true;
  }
  return result;
}

}  // namespace touchadd::placement
