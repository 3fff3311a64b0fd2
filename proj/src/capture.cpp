// SPDX-License-Identifier: Apache-2.0
#include "reachcast/capture.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace reachcast {
namespace {

constexpr std::string_view kMagic = "#GRSPREC";
constexpr std::size_t kColumnCount = 4 + 3 * kSensorCount;
constexpr double kCoordinateBound = 10000.0;

constexpr std::array<std::string_view, kRealObjectCount> kRealNames = {
    "pen", "glue", "bottle", "rubiks_cube", "egg_vulcano", "toy", "scissors"};
constexpr std::array<std::string_view, kShapeCount> kShapeNames = {"sphere", "box",
                                                                   "cylinder"};
constexpr std::array<std::string_view, kSizeCount> kSizeNames = {"small", "medium",
                                                                 "large"};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
}

double parse_double(std::string_view s, std::size_t line, std::string_view what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw ParseError(line, "invalid number for " + std::string(what) + ": '" +
                               std::string(s) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view s, std::size_t line, std::string_view what) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw ParseError(line, "invalid integer for " + std::string(what) + ": '" +
                               std::string(s) + "'");
  }
  return v;
}

void append_fixed(std::string& out, double v, int precision) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed,
                                 precision);
  if (ec != std::errc()) throw DataError("cannot format value");
  out.append(buf, ptr);
}

bool valid_identifier(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id) {
    if (c == '=' || c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      return false;
    }
  }
  return true;
}

std::string column_header() {
  std::string h = "frame,s1,s2,s3";
  for (int s = 0; s < kSensorCount; ++s) {
    for (char axis : {'x', 'y', 'z'}) {
      h += ",p" + std::to_string(s) + axis;
    }
  }
  return h;
}

// Accepted touch transitions: (frame, new state). A change is accepted only
// if the new value holds for kTouchDebounceFrames consecutive frames.
struct TouchEdge {
  std::size_t frame;
  bool state;
};

std::vector<TouchEdge> debounced_edges(const std::vector<TrackingFrame>& frames,
                                       Touch channel, bool& initial) {
  std::vector<TouchEdge> edges;
  if (frames.empty()) return edges;
  bool state = frames.front().touched(channel);
  initial = state;
  for (std::size_t k = 1; k + kTouchDebounceFrames <= frames.size(); ++k) {
    const bool v = frames[k].touched(channel);
    if (v == state) continue;
    bool holds = true;
    for (std::size_t j = 1; j < kTouchDebounceFrames; ++j) {
      if (frames[k + j].touched(channel) != v) {
        holds = false;
        break;
      }
    }
    if (holds) {
      state = v;
      edges.push_back({k, v});
    }
  }
  return edges;
}

}  // namespace

int ObjectLabel::class_id() const {
  if (const auto* r = std::get_if<RealObject>(&value_)) return static_cast<int>(*r);
  const auto s = std::get<SyntheticObject>(value_);
  return static_cast<int>(s.shape) * kSizeCount + static_cast<int>(s.size);
}

std::string ObjectLabel::name() const {
  if (const auto* r = std::get_if<RealObject>(&value_)) {
    return std::string(kRealNames[static_cast<int>(*r)]);
  }
  const auto s = std::get<SyntheticObject>(value_);
  return std::string(to_string(s.shape)) + "_" + std::string(to_string(s.size));
}

ObjectLabel ObjectLabel::parse(std::string_view name) {
  for (int i = 0; i < kRealObjectCount; ++i) {
    if (name == kRealNames[i]) return ObjectLabel(static_cast<RealObject>(i));
  }
  const auto us = name.find('_');
  if (us != std::string_view::npos) {
    const auto shape = name.substr(0, us);
    const auto size = name.substr(us + 1);
    for (int sh = 0; sh < kShapeCount; ++sh) {
      for (int sz = 0; sz < kSizeCount; ++sz) {
        if (shape == kShapeNames[sh] && size == kSizeNames[sz]) {
          return ObjectLabel(static_cast<Shape>(sh), static_cast<SizeClass>(sz));
        }
      }
    }
  }
  throw DataError("unknown object label '" + std::string(name) + "'");
}

std::vector<ObjectLabel> ObjectLabel::all(ObjectKind kind) {
  std::vector<ObjectLabel> out;
  if (kind == ObjectKind::real) {
    for (int i = 0; i < kRealObjectCount; ++i) out.emplace_back(static_cast<RealObject>(i));
  } else {
    for (int sh = 0; sh < kShapeCount; ++sh) {
      for (int sz = 0; sz < kSizeCount; ++sz) {
        out.emplace_back(static_cast<Shape>(sh), static_cast<SizeClass>(sz));
      }
    }
  }
  return out;
}

std::string_view to_string(Shape s) { return kShapeNames[static_cast<int>(s)]; }
std::string_view to_string(SizeClass s) { return kSizeNames[static_cast<int>(s)]; }

std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::ok: return "ok";
    case ExclusionReason::touch_order_error: return "touch_order_error";
    case ExclusionReason::excessive_duration: return "excessive_duration";
    case ExclusionReason::missing_touch: return "missing_touch";
  }
  return "unknown";
}

void check_recording(const Recording& r) {
  if (r.frames.empty()) throw DataError("recording has no frames");
  if (!valid_identifier(r.user_id) || !valid_identifier(r.session_id) ||
      !valid_identifier(r.trial_id)) {
    throw DataError("recording identifiers must be non-empty and free of ',', '=' and "
                    "whitespace");
  }
  if (!(r.rate_hz > 0.0) || !std::isfinite(r.rate_hz)) {
    throw DataError("recording rate must be positive");
  }
  if (!r.object_position.allFinite()) throw DataError("object position is not finite");
  for (std::size_t k = 0; k < r.frames.size(); ++k) {
    const auto& f = r.frames[k];
    if (f.frame_index < 0) throw DataError("negative frame index");
    if (k > 0 && f.frame_index <= r.frames[k - 1].frame_index) {
      throw DataError("frame index not strictly increasing at frame " +
                      std::to_string(f.frame_index));
    }
    for (const auto& p : f.sensors) {
      if (!p.allFinite() || p.cwiseAbs().maxCoeff() >= kCoordinateBound) {
        throw DataError("sensor coordinate out of range at frame " +
                        std::to_string(f.frame_index));
      }
    }
  }
}

TrackingFrame parse_frame_row(std::string_view row, std::size_t line) {
  if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
  const auto cols = split(row, ',');
  if (cols.size() != kColumnCount) {
    throw ParseError(line, "expected " + std::to_string(kColumnCount) + " columns, got " +
                               std::to_string(cols.size()));
  }
  TrackingFrame f;
  f.frame_index = parse_int(cols[0], line, "frame");
  if (f.frame_index < 0) throw ParseError(line, "negative frame index");
  for (int t = 0; t < 3; ++t) {
    const auto c = cols[1 + t];
    if (c == "0") {
      f.touch[t] = false;
    } else if (c == "1") {
      f.touch[t] = true;
    } else {
      throw ParseError(line, "touch state must be 0 or 1");
    }
  }
  for (int s = 0; s < kSensorCount; ++s) {
    for (int a = 0; a < 3; ++a) {
      f.sensors[s][a] = parse_double(cols[4 + 3 * s + a], line, "position");
    }
  }
  return f;
}

Recording parse_recording(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 2) throw ParseError(lines.size() + 1, "missing header lines");

  Recording r;
  auto meta = lines[0];
  if (!meta.empty() && meta.back() == '\r') meta.remove_suffix(1);
  const auto fields = split(meta, ' ');
  if (fields.size() < 2 || fields[0] != kMagic || fields[1] != "v1") {
    throw ParseError(1, "expected '#GRSPREC v1' metadata line");
  }
  bool have_user = false, have_session = false, have_trial = false, have_object = false,
       have_rate = false;
  std::array<bool, 3> have_pos{};
  for (std::size_t i = 2; i < fields.size(); ++i) {
    const auto eq = fields[i].find('=');
    if (eq == std::string_view::npos) throw ParseError(1, "malformed metadata field");
    const auto key = fields[i].substr(0, eq);
    const auto value = fields[i].substr(eq + 1);
    if (key == "user") {
      r.user_id = value, have_user = true;
    } else if (key == "session") {
      r.session_id = value, have_session = true;
    } else if (key == "trial") {
      r.trial_id = value, have_trial = true;
    } else if (key == "object") {
      try {
        r.object = ObjectLabel::parse(value);
      } catch (const DataError& e) {
        throw ParseError(1, e.what());
      }
      have_object = true;
    } else if (key == "rate") {
      r.rate_hz = parse_double(value, 1, "rate"), have_rate = true;
    } else if (key == "object_x" || key == "object_y" || key == "object_z") {
      const int axis = key.back() - 'x';
      r.object_position[axis] = parse_double(value, 1, key);
      have_pos[axis] = true;
    } else {
      throw ParseError(1, "unknown metadata key '" + std::string(key) + "'");
    }
  }
  if (!(have_user && have_session && have_trial && have_object && have_rate &&
        have_pos[0] && have_pos[1] && have_pos[2])) {
    throw ParseError(1, "incomplete metadata line");
  }
  if (r.rate_hz != kTrackerRateHz) throw ParseError(1, "unsupported rate");

  auto header = lines[1];
  if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
  if (header != column_header()) throw ParseError(2, "unexpected column header");

  r.frames.reserve(lines.size() - 2);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    auto f = parse_frame_row(lines[i], i + 1);
    if (!r.frames.empty() && f.frame_index <= r.frames.back().frame_index) {
      throw ParseError(i + 1, "frame index not strictly increasing");
    }
    r.frames.push_back(f);
  }
  try {
    check_recording(r);
  } catch (const ParseError&) {
    throw;
  } catch (const DataError& e) {
    throw ParseError(1, e.what());
  }
  return r;
}

std::string format_frame_row(const TrackingFrame& f) {
  std::string out;
  out.reserve(400);
  out += std::to_string(f.frame_index);
  for (bool t : f.touch) out += t ? ",1" : ",0";
  for (const auto& p : f.sensors) {
    for (int a = 0; a < 3; ++a) {
      out += ',';
      append_fixed(out, p[a], 4);
    }
  }
  return out;
}

std::string write_recording(const Recording& r) {
  check_recording(r);
  std::string out;
  out.reserve(64 + r.frames.size() * 400);
  out += std::string(kMagic) + " v1 user=" + r.user_id + " session=" + r.session_id +
         " trial=" + r.trial_id + " object=" + r.object.name() + " rate=";
  out += std::to_string(static_cast<long long>(r.rate_hz));
  const char* keys[] = {" object_x=", " object_y=", " object_z="};
  for (int a = 0; a < 3; ++a) {
    out += keys[a];
    append_fixed(out, r.object_position[a], 4);
  }
  out += '\n';
  out += column_header();
  out += '\n';
  for (const auto& f : r.frames) {
    out += format_frame_row(f);
    out += '\n';
  }
  return out;
}

Recording read_recording_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_recording(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.filename().string() + ": " + e.what());
  }
}

void write_recording_file(const std::filesystem::path& path, const Recording& r) {
  const auto text = write_recording(r);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

PhaseSegment segment_r2g(const Recording& r) {
  bool s1_initial = false, s2_initial = false;
  const auto s1 = debounced_edges(r.frames, Touch::rest, s1_initial);
  const auto s2 = debounced_edges(r.frames, Touch::object, s2_initial);

  std::optional<std::size_t> release;
  bool s1_state = s1_initial;
  for (const auto& e : s1) {
    if (s1_state && !e.state) {
      release = e.frame;
      break;
    }
    s1_state = e.state;
  }

  // Object contact registered before the hand left the rest surface.
  const std::size_t horizon = release ? *release : r.frames.size();
  if (s2_initial) {
    throw SegmentationError(ExclusionReason::touch_order_error,
                            "object touched before rest release");
  }
  for (const auto& e : s2) {
    if (e.frame >= horizon) break;
    if (e.state) {
      throw SegmentationError(ExclusionReason::touch_order_error,
                              "object touched before rest release");
    }
  }
  if (!release) {
    throw SegmentationError(ExclusionReason::missing_touch, "no rest release event");
  }
  for (const auto& e : s2) {
    if (e.frame > *release && e.state) {
      return PhaseSegment{*release, e.frame, r.object_position};
    }
  }
  throw SegmentationError(ExclusionReason::missing_touch, "no object contact event");
}

ExclusionReport validate_recording(const Recording& r, double max_duration_s) {
  PhaseSegment seg;
  try {
    check_recording(r);
    seg = segment_r2g(r);
  } catch (const SegmentationError& e) {
    return {true, e.reason()};
  } catch (const DataError&) {
    return {true, ExclusionReason::missing_touch};
  }
  const double duration = static_cast<double>(seg.length()) / r.rate_hz;
  if (duration > max_duration_s) return {true, ExclusionReason::excessive_duration};
  return {false, ExclusionReason::ok};
}

}  // namespace reachcast
