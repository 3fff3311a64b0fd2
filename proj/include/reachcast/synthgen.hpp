// SPDX-License-Identifier: Apache-2.0
//
// Synthetic reach-to-grasp recordings with known ground truth: a
// minimum-jerk hand transport whose duration follows Fitts' law, a
// size-dependent grip aperture, finger engagement by object size, smooth
// tracker noise and optional dropped frames.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "reachcast/capture.hpp"

namespace reachcast {

struct UserProfile {
  std::string user_id;
  double speed_scale = 1.0;  // multiplies movement time
  double hand_scale = 1.0;   // multiplies finger geometry
  double aperture_margin_mm = 20.0;
  std::uint64_t style_seed = 0;

  /// speed ~ N(1, 0.15²) clamped to [0.7, 1.4], hand scale U[0.85, 1.15],
  /// margin U[15, 30].
  static UserProfile sample(std::string user_id, std::uint64_t seed);
};

struct SynthObject {
  ObjectLabel label;
  Vec3 position = Vec3::Zero();
  double width_mm = 40.0;
};

/// Width of the object's grasped extent (synthetic: the size class).
double object_width_mm(const ObjectLabel& label);

/// Object placed so a hand of nominal size travels `distance_mm` from the
/// rest pad to the grasp pose.
SynthObject place_object(const ObjectLabel& label, double distance_mm = 320.0);

/// Hand reference position on the rest pad.
Vec3 rest_position();

enum class ObjectSet { real, synthetic, both };
std::string_view to_string(ObjectSet s);
ObjectSet parse_object_set(std::string_view s);

struct GenConfig {
  int users = 16;
  int trials_per_object = 3;
  double rate_hz = kTrackerRateHz;
  double noise_mm = 0.3;
  double dropout_probability = 0.0;
  std::uint64_t seed = 0;
  ObjectSet objects = ObjectSet::synthetic;
  double distance_mm = 320.0;

  /// Throws std::invalid_argument.
  void validate() const;
};

inline constexpr double kFittsA = 0.25;  // s
inline constexpr double kFittsB = 0.12;  // s/bit

/// speed_scale * (a + b * log2(2D / W)).
double fitts_time(double distance_mm, double width_mm, double a = kFittsA, double b = kFittsB,
                  double speed_scale = 1.0);

/// 10τ³ - 15τ⁴ + 6τ⁵.
double min_jerk_progress(double tau);

/// Position at time t of a minimum-jerk move from p0 to p1 over T seconds.
/// Throws std::domain_error for t outside [0, T].
Vec3 min_jerk(double t, double T, const Vec3& p0, const Vec3& p1);

inline constexpr double kRestApertureMm = 15.0;
inline constexpr double kPeakAperturePhase = 0.65;
inline constexpr double kClosingSlackMm = 2.0;

/// Rest aperture -> size + margin at τ = 0.65 -> size + 2 mm at τ = 1, as
/// two quintic segments with zero slope at the joints.
double aperture_profile(double tau, double size_mm, double margin_mm);

struct TrialSchedule {
  std::size_t start_frame = 0;  // first frame off the rest pad
  std::size_t grasp_frame = 0;  // first frame touching the object
  double movement_time_s = 0.0;
  double speed_scale = 1.0;  // user speed times the trial's tempo jitter
  double distance_mm = 0.0;  // hand travel, used for Fitts' law
  Vec3 hand_start = Vec3::Zero();
  Vec3 hand_end = Vec3::Zero();
};

struct TrialOptions {
  double rate_hz = kTrackerRateHz;
  double noise_mm = 0.3;
};

struct GeneratedTrial {
  Recording recording;  // with tracker noise
  Recording clean;      // same motion, no noise
  TrialSchedule schedule;
};

/// Throws DataError if the object sits on the rest pad.
GeneratedTrial generate_trial(const UserProfile& user, const SynthObject& object,
                              std::uint64_t seed, const TrialOptions& options = {});

struct DropoutResult {
  Recording recording;
  std::vector<std::size_t> deleted;  // source frame offsets
  std::vector<std::size_t> source;   // source offset of every kept frame
};

/// Deletes interior frames with probability p, never two adjacent ones, and
/// renumbers frame indices so the stream looks uniform.
DropoutResult inject_dropouts(const Recording& r, double p, std::uint64_t seed);

struct CorpusTrial {
  std::string file;
  Recording recording;
  TrialSchedule schedule;
  std::size_t dropouts = 0;
};

struct Corpus {
  GenConfig config;
  std::vector<UserProfile> users;
  std::vector<CorpusTrial> trials;
};

/// users x objects x trials, every trial seeded from (seed, user, object, rep).
Corpus generate_corpus(const GenConfig& config);

/// CSV with one row of ground truth per trial.
void write_corpus_manifest(const Corpus& corpus, std::ostream& out);

/// Writes every recording plus manifest.csv into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace reachcast
