// SPDX-License-Identifier: Apache-2.0
//
// Hand polygon model. Feature layout (fixed):
//   [0]      hand speed ν_h, m/s
//   [1..15]  fingertip (FP) offsets from the hand reference, thumb..little, xyz mm
//   [16..30] proximal-phalanx (PP) offsets, same order
#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "reachcast/capture.hpp"
#include "reachcast/preprocessing.hpp"

namespace reachcast {

enum class FeatureSet : std::uint8_t { vh = 0, vh_fp = 1, vh_fp_pp = 2 };

constexpr int feature_dim(FeatureSet s) {
  switch (s) {
    case FeatureSet::vh: return 1;
    case FeatureSet::vh_fp: return 16;
    case FeatureSet::vh_fp_pp: return 31;
  }
  return 0;
}

/// "VH", "VH_FP", "VH_FP_PP"
std::string_view to_string(FeatureSet s);
/// Accepts the canonical names and the "VH+FP" spelling, case-insensitive.
FeatureSet parse_feature_set(std::string_view s);

using FeatureVector = Eigen::VectorXd;

struct PolygonVectors {
  std::array<Vec3, kFingerCount> fingertip;
  std::array<Vec3, kFingerCount> proximal;
};

/// Offsets of fingertip and proximal sensors from the hand reference sensor.
/// World axes are kept; only the translation is removed.
PolygonVectors polygon_vectors(const TrackingFrame& frame);

/// Throws DataError if `speed` belongs to a different frame.
FeatureVector assemble_features(const TrackingFrame& frame, const HandSpeed& speed,
                                FeatureSet set);

inline FeatureVector assemble_features(const ProcessedFrame& p, FeatureSet set) {
  return assemble_features(p.frame, p.speed, set);
}

/// Thumb-to-index fingertip distance in mm. Diagnostic only.
double grip_aperture(const TrackingFrame& frame);

/// Column names for the layout: "v_h", "fp_thumb_x", ..., "pp_little_z".
std::vector<std::string> feature_names(FeatureSet set);

}  // namespace reachcast
