// SPDX-License-Identifier: Apache-2.0
#include "reachcast/features.hpp"

#include <algorithm>
#include <cctype>

namespace reachcast {

std::string_view to_string(FeatureSet s) {
  switch (s) {
    case FeatureSet::vh: return "VH";
    case FeatureSet::vh_fp: return "VH_FP";
    case FeatureSet::vh_fp_pp: return "VH_FP_PP";
  }
  return "?";
}

FeatureSet parse_feature_set(std::string_view s) {
  std::string norm;
  for (char c : s) {
    norm += c == '+' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  for (auto set : {FeatureSet::vh, FeatureSet::vh_fp, FeatureSet::vh_fp_pp}) {
    if (norm == to_string(set)) return set;
  }
  throw DataError("unknown feature set '" + std::string(s) + "'");
}

PolygonVectors polygon_vectors(const TrackingFrame& frame) {
  PolygonVectors out;
  const Vec3& ref = frame.hand();
  for (int i = 0; i < kFingerCount; ++i) {
    out.fingertip[i] = frame.sensors[sensor::kFingertip + i] - ref;
    out.proximal[i] = frame.sensors[sensor::kProximal + i] - ref;
  }
  return out;
}

FeatureVector assemble_features(const TrackingFrame& frame, const HandSpeed& speed,
                                FeatureSet set) {
  if (speed.frame_index != frame.frame_index) {
    throw DataError("hand speed for frame " + std::to_string(speed.frame_index) +
                    " paired with frame " + std::to_string(frame.frame_index));
  }
  FeatureVector v(feature_dim(set));
  v[0] = speed.mps;
  if (set == FeatureSet::vh) return v;
  const auto poly = polygon_vectors(frame);
  for (int i = 0; i < kFingerCount; ++i) v.segment<3>(1 + 3 * i) = poly.fingertip[i];
  if (set == FeatureSet::vh_fp) return v;
  for (int i = 0; i < kFingerCount; ++i) v.segment<3>(16 + 3 * i) = poly.proximal[i];
  return v;
}

double grip_aperture(const TrackingFrame& frame) {
  return (frame.sensors[sensor::kFingertip + 0] - frame.sensors[sensor::kFingertip + 1])
      .norm();
}

std::vector<std::string> feature_names(FeatureSet set) {
  static constexpr std::array<std::string_view, kFingerCount> fingers = {
      "thumb", "index", "middle", "ring", "little"};
  std::vector<std::string> names{"v_h"};
  const int polygons = set == FeatureSet::vh ? 0 : (set == FeatureSet::vh_fp ? 1 : 2);
  for (int p = 0; p < polygons; ++p) {
    for (auto f : fingers) {
      for (char axis : {'x', 'y', 'z'}) {
        names.push_back(std::string(p == 0 ? "fp_" : "pp_") + std::string(f) + "_" + axis);
      }
    }
  }
  return names;
}

}  // namespace reachcast
