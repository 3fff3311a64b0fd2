// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "reachcast/features.hpp"
#include "reachcast/synthgen.hpp"
#include "support.hpp"

using namespace reachcast;
using reachcast::testing::sample_trial;

namespace {

TrackingFrame random_frame(Rng& rng) {
  TrackingFrame f;
  f.frame_index = 7;
  for (auto& s : f.sensors) s = Vec3(rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(0, 300));
  return f;
}

}  // namespace

TEST_CASE("polygon vectors") {
  TrackingFrame f;
  f.sensors.fill(Vec3(10, 20, 30));
  const auto zero = polygon_vectors(f);
  for (int i = 0; i < kFingerCount; ++i) {
    CHECK(zero.fingertip[i] == Vec3::Zero());
    CHECK(zero.proximal[i] == Vec3::Zero());
  }
  f.sensors[sensor::kFingertip + 2] += Vec3(10, 0, 0);
  CHECK(polygon_vectors(f).fingertip[2] == Vec3(10, 0, 0));
  f.sensors[sensor::kProximal + 4] += Vec3(0, -3, 1);
  CHECK(polygon_vectors(f).proximal[4] == Vec3(0, -3, 1));
}

TEST_CASE("feature layout") {
  Rng rng(3);
  const TrackingFrame f = random_frame(rng);
  const HandSpeed v{7, 0.42};
  const auto vh = assemble_features(f, v, FeatureSet::vh);
  REQUIRE(vh.size() == 1);
  CHECK(vh[0] == 0.42);

  const auto fp = assemble_features(f, v, FeatureSet::vh_fp);
  REQUIRE(fp.size() == 16);
  CHECK(fp[0] == 0.42);
  for (int i = 0; i < 5; ++i) {
    for (int a = 0; a < 3; ++a) CHECK(fp[1 + 3 * i + a] == f.sensors[i][a] - f.sensors[11][a]);
  }
  const auto all = assemble_features(f, v, FeatureSet::vh_fp_pp);
  REQUIRE(all.size() == 31);
  CHECK(all.head(16) == fp);
  for (int i = 0; i < 5; ++i) {
    for (int a = 0; a < 3; ++a) CHECK(all[16 + 3 * i + a] == f.sensors[5 + i][a] - f.sensors[11][a]);
  }
  CHECK(all.allFinite());

  CHECK_THROWS_AS(assemble_features(f, HandSpeed{8, 0.42}, FeatureSet::vh), DataError);

  const auto names = feature_names(FeatureSet::vh_fp_pp);
  REQUIRE(names.size() == 31);
  CHECK(names[0] == "v_h");
  CHECK(names[1] == "fp_thumb_x");
  CHECK(names[15] == "fp_little_z");
  CHECK(names[16] == "pp_thumb_x");
  CHECK(names[30] == "pp_little_z");
  CHECK(feature_names(FeatureSet::vh_fp).size() == 16);
}

TEST_CASE("feature set names") {
  CHECK(parse_feature_set("VH") == FeatureSet::vh);
  CHECK(parse_feature_set("vh+fp") == FeatureSet::vh_fp);
  CHECK(parse_feature_set("VH_FP_PP") == FeatureSet::vh_fp_pp);
  CHECK(to_string(FeatureSet::vh_fp) == "VH_FP");
  CHECK_THROWS_AS(parse_feature_set("FP"), DataError);
}

TEST_CASE("translation invariance is exact for representable shifts") {
  Rng rng(9);
  for (int n = 0; n < 50; ++n) {
    TrackingFrame f;
    f.frame_index = 1;
    // Quarter-millimeter grid keeps every sum exact.
    for (auto& s : f.sensors) {
      for (int a = 0; a < 3; ++a) s[a] = static_cast<double>(static_cast<int>(rng.below(4000)) - 2000) * 0.25;
    }
    TrackingFrame g = f;
    const Vec3 t(500, -200, 40);
    for (auto& s : g.sensors) s += t;
    const HandSpeed v{1, rng.uniform()};
    CHECK(assemble_features(f, v, FeatureSet::vh_fp_pp) == assemble_features(g, v, FeatureSet::vh_fp_pp));
  }
}

TEST_CASE("rotation changes offsets but keeps fingertip distances") {
  Rng rng(4);
  const TrackingFrame f = random_frame(rng);
  TrackingFrame g = f;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix();
  for (auto& s : g.sensors) s = rot * s;
  const auto a = polygon_vectors(f);
  const auto b = polygon_vectors(g);
  CHECK((a.fingertip[0] - b.fingertip[0]).norm() > 1e-3);
  CHECK(grip_aperture(g) == doctest::Approx(grip_aperture(f)).epsilon(1e-12));
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      CHECK((b.fingertip[i] - b.fingertip[j]).norm() ==
            doctest::Approx((a.fingertip[i] - a.fingertip[j]).norm()).epsilon(1e-12));
    }
  }
}

TEST_CASE("grip aperture") {
  TrackingFrame f;
  f.sensors[0] = Vec3(0, 0, 0);
  f.sensors[1] = Vec3(30, 0, 0);
  CHECK(grip_aperture(f) == 30.0);
  f.sensors[1] = f.sensors[0];
  CHECK(grip_aperture(f) == 0.0);
}

TEST_CASE("grip aperture at grasp on generated trials") {
  for (std::uint64_t seed = 1; seed <= 18; ++seed) {
    const auto label = ObjectLabel::all(ObjectKind::synthetic)[seed % 9];
    const auto trial = sample_trial(seed, label, 0.3);
    const auto& noisy = trial.recording.frames[trial.schedule.grasp_frame];
    const auto& clean = trial.clean.frames[trial.schedule.grasp_frame];
    const double size = object_width_mm(label);
    CHECK(std::abs(grip_aperture(clean) - (size + kClosingSlackMm)) < 1e-9);
    CHECK(std::abs(grip_aperture(noisy) - (size + kClosingSlackMm)) < 5.0);
  }
}
