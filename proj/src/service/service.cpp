#include "touchadd/service/service.hpp"

#include <cstdio>

namespace touchadd::service {

using Kind = ServiceError::Kind;

namespace {

std::string numbered(char prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

}  // namespace

EditService::EditService(std::shared_ptr<const placement::ResponseGenerator> placement,
                         std::shared_ptr<const editor::EditorModel> editor, ServiceLimits limits)
    : placement_(std::move(placement)), editor_(std::move(editor)), limits_(limits) {
  if (editor_) schedule_ = editor::DiffusionSchedule::linear(editor_->config().steps);
}

std::string EditService::create_session(const std::vector<std::uint8_t>& png) {
  if (png.size() > limits_.max_upload_bytes)
    throw ServiceError(Kind::kTooLarge, "upload exceeds " + std::to_string(limits_.max_upload_bytes) + " bytes");
  Image image;
  try {
    image = decode_png(png);
  } catch (const std::exception& e) {
    throw ServiceError(Kind::kBadRequest, std::string("cannot decode image: ") + e.what());
  }
  if (image.width() > limits_.max_side || image.height() > limits_.max_side)
    throw ServiceError(Kind::kTooLarge, "image sides must not exceed " + std::to_string(limits_.max_side));
  auto s = std::make_shared<Session>();
  s->image = std::move(image);
  std::lock_guard lock(mu_);
  s->id = numbered('s', next_session_++);
  sessions_.emplace(s->id, s);
  return s->id;
}

std::shared_ptr<EditService::Session> EditService::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(Kind::kNotFound, "no session " + id);
  return it->second;
}

SessionInfo EditService::session_info(const std::string& id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  SessionInfo info{s->id, s->image.width(), s->image.height(), static_cast<int>(s->turns.size()), {}};
  for (const auto& e : s->edits) info.edits.push_back(e.id);
  return info;
}

Image EditService::session_image(const std::string& id) const { return find(id)->image; }

Turn EditService::propose_placement(const std::string& id, const std::string& instruction,
                                    const TouchPoint& touch) {
  const auto s = find(id);
  if (!placement_) throw ServiceError(Kind::kUnavailable, "no placement model loaded");
  if (instruction.empty()) throw ServiceError(Kind::kBadRequest, "instruction is empty");
  if (!touch.in_bounds(s->image.width(), s->image.height()))
    throw ServiceError(Kind::kBadRequest, "touch point outside the image");
  // The session image never changes, so inference runs without the lock.
  Turn turn;
  turn.instruction = instruction;
  turn.touch = touch;
  turn.placement = placement::predict_placement(*placement_, s->image, instruction, touch);
  std::lock_guard lock(s->mu);
  turn.id = static_cast<int>(s->turns.size()) + 1;
  s->turns.push_back(turn);
  return turn;
}

StoredEdit EditService::apply_edit(const std::string& id, int turn, const NormalizedBBox& bbox,
                                   std::uint64_t seed) {
  const auto s = find(id);
  if (!editor_) throw ServiceError(Kind::kUnavailable, "no editor model loaded");
  if (!bbox.valid()) throw ServiceError(Kind::kBadRequest, "invalid box " + to_string(bbox));
  std::string instruction;
  {
    std::lock_guard lock(s->mu);
    if (turn < 1 || turn > static_cast<int>(s->turns.size()))
      throw ServiceError(Kind::kNotFound, "no turn " + std::to_string(turn) + " in session " + id);
    instruction = s->turns[static_cast<std::size_t>(turn) - 1].instruction;
  }
  StoredEdit edit;
  edit.turn = turn;
  edit.bbox = bbox;
  edit.seed = seed;
  edit.result = editor::sample_edit(*editor_, s->image, instruction, bbox, *schedule_, seed);
  std::lock_guard lock(s->mu);
  edit.id = numbered('e', s->edits.size() + 1);
  s->edits.push_back(edit);
  return edit;
}

StoredEdit EditService::get_edit(const std::string& id, const std::string& edit_id) const {
  const auto s = find(id);
  std::lock_guard lock(s->mu);
  for (const auto& e : s->edits)
    if (e.id == edit_id) return e;
  throw ServiceError(Kind::kNotFound, "no edit " + edit_id + " in session " + id);
}

}  // namespace touchadd::service
