// SPDX-License-Identifier: Apache-2.0
//
// Recording data model: tracking frames, object labels, the on-disk CSV
// format, reach-to-grasp segmentation from touch events and trial
// validation.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "reachcast/common.hpp"

namespace reachcast {

inline constexpr int kSensorCount = 12;
inline constexpr int kFingerCount = 5;

/// Sensor slots. Fingers are ordered thumb, index, middle, ring, little.
namespace sensor {
inline constexpr int kFingertip = 0;     // 0..4
inline constexpr int kProximal = 5;      // 5..9
inline constexpr int kThumbMetacarpal = 10;
inline constexpr int kHandReference = 11;  // middle-finger metacarpal
}  // namespace sensor

/// Touch surfaces: S1 rest position, S2 object, S3 target.
enum class Touch : int { rest = 0, object = 1, target = 2 };

struct TrackingFrame {
  std::int64_t frame_index = 0;
  std::array<Vec3, kSensorCount> sensors{};
  std::array<bool, 3> touch{};

  double time_s(double rate_hz = kTrackerRateHz) const {
    return static_cast<double>(frame_index) / rate_hz;
  }
  bool touched(Touch t) const { return touch[static_cast<int>(t)]; }
  const Vec3& hand() const { return sensors[sensor::kHandReference]; }

  friend bool operator==(const TrackingFrame&, const TrackingFrame&) = default;
};

enum class RealObject : std::uint8_t {
  pen,
  glue,
  bottle,
  rubiks_cube,
  egg_vulcano,
  toy,
  scissors
};
enum class Shape : std::uint8_t { sphere, box, cylinder };
enum class SizeClass : std::uint8_t { small, medium, large };

inline constexpr int kRealObjectCount = 7;
inline constexpr int kShapeCount = 3;
inline constexpr int kSizeCount = 3;
inline constexpr int kSyntheticObjectCount = kShapeCount * kSizeCount;

/// Nominal extent of a synthetic object size class: 20, 40 or 60 mm.
constexpr double size_mm(SizeClass s) {
  return 20.0 * (static_cast<int>(s) + 1);
}

struct SyntheticObject {
  Shape shape;
  SizeClass size;
  friend bool operator==(const SyntheticObject&, const SyntheticObject&) = default;
};

enum class ObjectKind : std::uint8_t { real, synthetic };

/// Identity of the object grasped in a trial. Either a named real object or
/// a (shape, size) synthetic solid, never both.
class ObjectLabel {
 public:
  ObjectLabel() : value_(RealObject::pen) {}
  ObjectLabel(RealObject o) : value_(o) {}
  ObjectLabel(SyntheticObject o) : value_(o) {}
  ObjectLabel(Shape shape, SizeClass size) : value_(SyntheticObject{shape, size}) {}

  ObjectKind kind() const {
    return std::holds_alternative<RealObject>(value_) ? ObjectKind::real
                                                       : ObjectKind::synthetic;
  }
  bool is_synthetic() const { return kind() == ObjectKind::synthetic; }
  RealObject real() const { return std::get<RealObject>(value_); }
  SyntheticObject synthetic() const { return std::get<SyntheticObject>(value_); }

  /// Object class within its kind: 0..6 for real, shape*3+size for synthetic.
  int class_id() const;
  int size_id() const { return static_cast<int>(synthetic().size); }
  int shape_id() const { return static_cast<int>(synthetic().shape); }

  /// "pen", "rubiks_cube", "sphere_small", ...
  std::string name() const;
  static ObjectLabel parse(std::string_view name);

  static std::vector<ObjectLabel> all(ObjectKind kind);

  friend bool operator==(const ObjectLabel&, const ObjectLabel&) = default;

 private:
  std::variant<RealObject, SyntheticObject> value_;
};

std::string_view to_string(Shape s);
std::string_view to_string(SizeClass s);

struct Recording {
  std::string user_id;
  std::string session_id;
  std::string trial_id;
  ObjectLabel object;
  double rate_hz = kTrackerRateHz;
  Vec3 object_position = Vec3::Zero();
  std::vector<TrackingFrame> frames;

  friend bool operator==(const Recording&, const Recording&) = default;
};

/// Throws DataError if the recording violates a data-model invariant
/// (empty, non-monotone frame indices, non-finite or out-of-range
/// coordinates, malformed identifiers).
void check_recording(const Recording& r);

/// Parses the CSV recording format. Errors carry the 1-based line number.
Recording parse_recording(std::string_view text);

/// One data row (`frame,s1,s2,s3,p0x,...,p11z`).
TrackingFrame parse_frame_row(std::string_view row, std::size_t line_number);

/// Canonical text: 4 decimals for positions, LF line endings.
std::string write_recording(const Recording& r);
std::string format_frame_row(const TrackingFrame& f);

Recording read_recording_file(const std::filesystem::path& path);
void write_recording_file(const std::filesystem::path& path, const Recording& r);

/// Reach-to-grasp phase, as offsets into Recording::frames.
struct PhaseSegment {
  std::size_t start_frame = 0;  // first frame with S1 released
  std::size_t grasp_frame = 0;  // first frame touching S2
  Vec3 object_position = Vec3::Zero();

  std::size_t length() const { return grasp_frame - start_frame; }
};

enum class ExclusionReason { ok, touch_order_error, excessive_duration, missing_touch };
std::string_view to_string(ExclusionReason r);

struct ExclusionReport {
  bool excluded = false;
  ExclusionReason reason = ExclusionReason::ok;
};

class SegmentationError : public DataError {
 public:
  SegmentationError(ExclusionReason reason, const std::string& what)
      : DataError(what), reason_(reason) {}
  ExclusionReason reason() const noexcept { return reason_; }

 private:
  ExclusionReason reason_;
};

/// A touch transition only counts once the new state has held this many
/// consecutive frames.
inline constexpr std::size_t kTouchDebounceFrames = 3;

/// Locates the S1 release and the subsequent first S2 contact.
/// Throws SegmentationError (missing_touch / touch_order_error).
PhaseSegment segment_r2g(const Recording& r);

ExclusionReport validate_recording(const Recording& r, double max_duration_s = 5.0);

}  // namespace reachcast
