#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "touchadd/editor/model.hpp"
#include "touchadd/editor/sample.hpp"
#include "touchadd/editor/schedule.hpp"
#include "touchadd/placement/predict.hpp"

namespace touchadd::service {

class ServiceError : public std::runtime_error {
 public:
  enum class Kind { kBadRequest, kNotFound, kTooLarge, kUnavailable };
  ServiceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ServiceLimits {
  std::size_t max_upload_bytes = 8u << 20;
  int max_side = 2048;
};

struct Turn {
  int id = 0;
  std::string instruction;
  TouchPoint touch;
  placement::PlacementResult placement;
};

struct StoredEdit {
  std::string id;
  int turn = 0;
  NormalizedBBox bbox;
  std::uint64_t seed = 0;
  editor::EditResult result;
};

struct SessionInfo {
  std::string id;
  int width = 0;
  int height = 0;
  int turns = 0;
  std::vector<std::string> edits;
};

/// Upload, placement and edit sessions over read-only models. Sessions are
/// independent; each one serializes its own turn and edit logs.
class EditService {
 public:
  /// Either model may be null; the matching operation then reports kUnavailable.
  EditService(std::shared_ptr<const placement::ResponseGenerator> placement,
              std::shared_ptr<const editor::EditorModel> editor, ServiceLimits limits = {});

  std::string create_session(const std::vector<std::uint8_t>& png);
  SessionInfo session_info(const std::string& id) const;
  Image session_image(const std::string& id) const;

  Turn propose_placement(const std::string& id, const std::string& instruction, const TouchPoint& touch);

  /// Edits the session image for the turn's instruction inside `bbox`, which
  /// may differ from the proposed box.
  StoredEdit apply_edit(const std::string& id, int turn, const NormalizedBBox& bbox, std::uint64_t seed);
  StoredEdit get_edit(const std::string& id, const std::string& edit_id) const;

  bool has_placement() const { return placement_ != nullptr; }
  bool has_editor() const { return editor_ != nullptr; }

 private:
  struct Session {
    std::string id;
    Image image;
    std::vector<Turn> turns;
    std::vector<StoredEdit> edits;
    mutable std::mutex mu;
  };
  std::shared_ptr<Session> find(const std::string& id) const;

  std::shared_ptr<const placement::ResponseGenerator> placement_;
  std::shared_ptr<const editor::EditorModel> editor_;
  std::optional<editor::DiffusionSchedule> schedule_;
  ServiceLimits limits_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;
};

}  // namespace touchadd::service
