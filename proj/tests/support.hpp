// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit tests.
#pragma once

#include <string>
#include <vector>

#include "reachcast/capture.hpp"
#include "reachcast/synthgen.hpp"

namespace reachcast::testing {

/// A still hand with every sensor at `pose`, S1 pressed for frames
/// [0, release) and S2 pressed from `contact` on (0 disables an event).
inline Recording still_recording(std::size_t frames, std::size_t release, std::size_t contact,
                                 const Vec3& pose = Vec3(0, 0, 100)) {
  Recording r;
  r.user_id = "u01";
  r.session_id = "s1";
  r.trial_id = "t1";
  r.object = ObjectLabel(Shape::box, SizeClass::medium);
  r.object_position = Vec3(400, 0, 60);
  r.frames.resize(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    auto& f = r.frames[k];
    f.frame_index = static_cast<std::int64_t>(k);
    f.sensors.fill(pose);
    f.touch[0] = release > 0 && k < release;
    f.touch[1] = contact > 0 && k >= contact;
  }
  return r;
}

inline GeneratedTrial sample_trial(std::uint64_t seed, ObjectLabel label = ObjectLabel(Shape::box, SizeClass::medium),
                                   double noise_mm = 0.3) {
  const UserProfile user = UserProfile::sample("u01", seed);
  TrialOptions opt;
  opt.noise_mm = noise_mm;
  GeneratedTrial t = generate_trial(user, place_object(label), seed, opt);
  for (Recording* r : {&t.recording, &t.clean}) {
    r->user_id = "u01";
    r->session_id = "s1";
    r->trial_id = label.name() + "_1";
  }
  return t;
}

}  // namespace reachcast::testing
