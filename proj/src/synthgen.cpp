// SPDX-License-Identifier: Apache-2.0
#include "reachcast/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <Eigen/Geometry>

namespace reachcast {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHoldSeconds = 0.15;
constexpr double kFingerPhase = 0.35;  // finger engagement completes by this τ
constexpr int kNoiseTerms = 6;
// Spread of where the hand settles on the rest pad, per trial.
constexpr double kRestSpreadMm = 8.0;
constexpr double kRestSpreadZMm = 2.0;

// Hand frame: x forward, y toward the index side, z up; mm at hand scale 1.
const Vec3 kGraspCenter(95.0, 0.0, -35.0);
const std::array<Vec3, kFingerCount> kKnuckles = {
    Vec3(30.0, -35.0, -25.0), Vec3(70.0, 15.0, -10.0), Vec3(72.0, 0.0, -10.0),
    Vec3(68.0, -15.0, -10.0), Vec3(60.0, -28.0, -12.0)};
const std::array<Vec3, 3> kCurled = {Vec3(55.0, 8.0, -60.0), Vec3(50.0, -6.0, -58.0),
                                     Vec3(42.0, -18.0, -52.0)};
const Vec3 kThumbMetacarpal(15.0, -30.0, -20.0);
constexpr double kProximalFraction = 0.55;
constexpr double kMetacarpalFraction = 0.25;
constexpr double kRestSpreadDeg = 25.0;
constexpr double kFingerDropMm = 6.0;

struct GraspTemplate {
  double width_mm;
  int fingers;       // engaged fingers, thumb first
  double spread_deg;  // angular spacing of the engaged fingers
  double axis_deg;    // grasp-axis rotation about the vertical
};

GraspTemplate real_template(RealObject o) {
  switch (o) {
    case RealObject::pen: return {10.0, 2, 0.0, 0.0};
    case RealObject::glue: return {25.0, 3, 20.0, 30.0};
    case RealObject::bottle: return {65.0, 5, 30.0, 0.0};
    case RealObject::rubiks_cube: return {57.0, 5, 15.0, 15.0};
    case RealObject::egg_vulcano: return {45.0, 3, 35.0, -20.0};
    case RealObject::toy: return {35.0, 4, 25.0, 45.0};
    case RealObject::scissors: return {15.0, 2, 0.0, 60.0};
  }
  return {30.0, 2, 0.0, 0.0};
}

GraspTemplate grasp_template(const ObjectLabel& label) {
  if (!label.is_synthetic()) return real_template(label.real());
  const auto s = label.synthetic();
  static constexpr int kFingers[] = {2, 3, 5};
  static constexpr double kSpread[] = {32.0, 14.0, 22.0};  // sphere, box, cylinder
  return {size_mm(s.size), kFingers[static_cast<int>(s.size)],
          kSpread[static_cast<int>(s.shape)], 0.0};
}

// Per-user constants drawn from the style seed.
struct GraspStyle {
  Vec3 center_offset;
  std::array<Vec3, kFingerCount> finger_offset;
  double spread_scale;
  double curl_scale;
};

GraspStyle style_of(const UserProfile& user) {
  Rng rng(derive_seed(user.style_seed, 0x57));
  GraspStyle s;
  for (int a = 0; a < 3; ++a) s.center_offset[a] = rng.uniform(-4.0, 4.0);
  for (auto& f : s.finger_offset) {
    for (int a = 0; a < 3; ++a) f[a] = rng.uniform(-3.0, 3.0);
  }
  s.spread_scale = rng.uniform(0.8, 1.2);
  s.curl_scale = rng.uniform(0.85, 1.15);
  return s;
}

Vec3 on_circle(double angle_deg) {
  const double a = angle_deg * kPi / 180.0;
  return {std::sin(a), std::cos(a), 0.0};
}

// Fingertip offsets from the hand reference at movement phase τ.
std::array<Vec3, kFingerCount> fingertips(double tau, const GraspTemplate& g,
                                          const GraspStyle& style, const UserProfile& user,
                                          const std::array<Vec3, kFingerCount>& jitter) {
  const double hs = user.hand_scale;
  const double aperture = aperture_profile(tau, g.width_mm, user.aperture_margin_mm);
  const double finger_w = min_jerk_progress(std::min(tau / kFingerPhase, 1.0));
  const double axis = g.axis_deg * finger_w;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(axis * kPi / 180.0, Vec3::UnitZ()).toRotationMatrix();
  const Vec3 center = hs * kGraspCenter + style.center_offset;
  const double r = 0.5 * aperture;
  const Vec3 u = Vec3::UnitY();

  std::array<Vec3, kFingerCount> tips;
  tips[0] = center - r * (rot * u);
  tips[1] = center + r * (rot * u);
  for (int j = 2; j < kFingerCount; ++j) {
    const Vec3 drop(0.0, 0.0, -kFingerDropMm * (j - 1) * hs);
    const Vec3 rest = center + 0.5 * kRestApertureMm * on_circle(kRestSpreadDeg * (j - 1)) + drop;
    if (j < g.fingers) {
      const double spread = kRestSpreadDeg + (g.spread_deg * style.spread_scale - kRestSpreadDeg) * finger_w;
      tips[j] = center + r * (rot * on_circle(spread * (j - 1))) + drop;
    } else {
      const Vec3 curled = hs * style.curl_scale * kCurled[j - 2];
      tips[j] = rest + (curled - rest) * finger_w;
    }
  }
  for (int j = 0; j < kFingerCount; ++j) {
    // Thumb and index keep the exact aperture.
    tips[j] += (j < 2 ? Vec3::Zero() : Vec3(style.finger_offset[j] + jitter[j]));
  }
  return tips;
}

double quantize(double x) { return std::round(x * 1e4) / 1e4; }

// Smooth tracker drift: a few random sinusoids per channel with marginal
// std sigma, plus white jitter at one hundredth of sigma.
class TrackerNoise {
 public:
  TrackerNoise(double sigma, double rate_hz, Rng& rng) : sigma_(sigma), rate_(rate_hz) {
    const double amp = sigma * std::sqrt(2.0 / kNoiseTerms);
    for (auto& channel : terms_) {
      for (auto& t : channel) {
        t = {amp, 2.0 * kPi * rng.uniform(0.5, 3.0), rng.uniform(0.0, 2.0 * kPi)};
      }
    }
  }

  double sample(int channel, std::size_t frame, Rng& rng) const {
    if (sigma_ == 0.0) return 0.0;
    const double t = static_cast<double>(frame) / rate_;
    double v = 0.0;
    for (const auto& term : terms_[channel]) v += term.amp * std::sin(term.omega * t + term.phase);
    return v + 0.01 * sigma_ * rng.normal();
  }

 private:
  struct Term {
    double amp, omega, phase;
  };
  double sigma_;
  double rate_;
  std::array<std::array<Term, kNoiseTerms>, 3 * kSensorCount> terms_{};
};

}  // namespace

UserProfile UserProfile::sample(std::string user_id, std::uint64_t seed) {
  Rng rng(seed);
  UserProfile u;
  u.user_id = std::move(user_id);
  u.speed_scale = std::clamp(1.0 + 0.15 * rng.normal(), 0.7, 1.4);
  u.hand_scale = rng.uniform(0.85, 1.15);
  u.aperture_margin_mm = rng.uniform(15.0, 30.0);
  u.style_seed = rng.next();
  return u;
}

double object_width_mm(const ObjectLabel& label) { return grasp_template(label).width_mm; }

Vec3 rest_position() { return {0.0, 0.0, 100.0}; }

SynthObject place_object(const ObjectLabel& label, double distance_mm) {
  SynthObject o;
  o.label = label;
  o.position = rest_position() + Vec3(distance_mm, 0.0, 0.0) + kGraspCenter;
  for (int a = 0; a < 3; ++a) o.position[a] = quantize(o.position[a]);
  o.width_mm = object_width_mm(label);
  return o;
}

std::string_view to_string(ObjectSet s) {
  switch (s) {
    case ObjectSet::real: return "real";
    case ObjectSet::synthetic: return "synthetic";
    case ObjectSet::both: return "both";
  }
  return "?";
}

ObjectSet parse_object_set(std::string_view s) {
  for (auto v : {ObjectSet::real, ObjectSet::synthetic, ObjectSet::both}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("object set must be real, synthetic or both");
}

void GenConfig::validate() const {
  if (users < 1 || trials_per_object < 1) throw std::invalid_argument("counts must be positive");
  if (!(rate_hz > 0.0)) throw std::invalid_argument("rate must be positive");
  if (!(noise_mm >= 0.0)) throw std::invalid_argument("noise must be non-negative");
  if (!(dropout_probability >= 0.0 && dropout_probability < 1.0)) {
    throw std::invalid_argument("dropout probability must be in [0, 1)");
  }
  if (!(distance_mm > 0.0)) throw std::invalid_argument("distance must be positive");
}

double fitts_time(double distance_mm, double width_mm, double a, double b, double speed_scale) {
  if (!(distance_mm > 0.0) || !(width_mm > 0.0)) {
    throw std::invalid_argument("fitts_time: distance and width must be positive");
  }
  return speed_scale * (a + b * std::log2(2.0 * distance_mm / width_mm));
}

double min_jerk_progress(double tau) {
  const double t3 = tau * tau * tau;
  return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

Vec3 min_jerk(double t, double T, const Vec3& p0, const Vec3& p1) {
  if (!(T > 0.0) || t < 0.0 || t > T) throw std::domain_error("min_jerk: t outside [0, T]");
  return p0 + (p1 - p0) * min_jerk_progress(t / T);
}

double aperture_profile(double tau, double size, double margin) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double peak = size + margin;
  if (tau <= kPeakAperturePhase) {
    return kRestApertureMm + (peak - kRestApertureMm) * min_jerk_progress(tau / kPeakAperturePhase);
  }
  const double s = (tau - kPeakAperturePhase) / (1.0 - kPeakAperturePhase);
  return peak + (size + kClosingSlackMm - peak) * min_jerk_progress(s);
}

GeneratedTrial generate_trial(const UserProfile& user, const SynthObject& object,
                              std::uint64_t seed, const TrialOptions& options) {
  const double rate = options.rate_hz;
  Rng timing(derive_seed(seed, 1));
  Rng posture(derive_seed(seed, 2));
  Rng noise_rng(derive_seed(seed, 3));

  const GraspTemplate tmpl = [&] {
    auto g = grasp_template(object.label);
    g.width_mm = object.width_mm;
    return g;
  }();
  const GraspStyle style = style_of(user);

  TrialSchedule sched;
  sched.hand_start = rest_position();
  sched.hand_start[0] += kRestSpreadMm * posture.normal();
  sched.hand_start[1] += kRestSpreadMm * posture.normal();
  sched.hand_start[2] += kRestSpreadZMm * posture.normal();
  const Vec3 center = user.hand_scale * kGraspCenter + style.center_offset;
  sched.hand_end = object.position - center;
  if ((object.position - rest_position()).norm() < 1.0 || (object.position - sched.hand_start).norm() < 1.0 ||
      (sched.hand_end - sched.hand_start).norm() < 1.0) {
    throw DataError("object placed at the start position");
  }
  sched.distance_mm = (sched.hand_end - sched.hand_start).norm();
  sched.speed_scale = user.speed_scale * std::clamp(1.0 + 0.03 * timing.normal(), 0.9, 1.1);
  sched.movement_time_s =
      fitts_time(sched.distance_mm, tmpl.width_mm, kFittsA, kFittsB, sched.speed_scale);

  const auto rest_frames = static_cast<std::size_t>(std::lround((0.2 + timing.uniform(0.0, 0.2)) * rate));
  const auto move_frames = static_cast<std::size_t>(std::lround(sched.movement_time_s * rate));
  const auto hold_frames = static_cast<std::size_t>(std::lround(kHoldSeconds * rate));
  sched.start_frame = rest_frames;
  sched.grasp_frame = rest_frames + move_frames;
  const std::size_t n = sched.grasp_frame + hold_frames + 1;
  const double move_s = static_cast<double>(move_frames) / rate;

  std::array<Vec3, kFingerCount> jitter;
  for (auto& j : jitter) {
    for (int a = 0; a < 3; ++a) j[a] = posture.uniform(-1.0, 1.0);
  }
  const TrackerNoise noise(options.noise_mm, rate, noise_rng);

  GeneratedTrial out;
  out.schedule = sched;
  Recording& clean = out.clean;
  clean.user_id = user.user_id;
  clean.object = object.label;
  clean.rate_hz = rate;
  clean.object_position = object.position;
  clean.frames.resize(n);
  Recording noisy = clean;

  for (std::size_t k = 0; k < n; ++k) {
    double tau = 0.0;
    if (k >= sched.grasp_frame) {
      tau = 1.0;
    } else if (k > sched.start_frame) {
      tau = static_cast<double>(k - sched.start_frame) / rate / move_s;
    }
    const Vec3 hand = sched.hand_start + (sched.hand_end - sched.hand_start) * min_jerk_progress(tau);
    const auto tips = fingertips(tau, tmpl, style, user, jitter);

    std::array<Vec3, kSensorCount> s;
    for (int i = 0; i < kFingerCount; ++i) {
      s[sensor::kFingertip + i] = hand + tips[i];
      const Vec3 base = user.hand_scale * kKnuckles[i];
      s[sensor::kProximal + i] = hand + base + kProximalFraction * (tips[i] - base);
    }
    const Vec3 tm = user.hand_scale * kThumbMetacarpal;
    s[sensor::kThumbMetacarpal] = hand + tm + kMetacarpalFraction * (tips[0] - tm);
    s[sensor::kHandReference] = hand;

    TrackingFrame& cf = clean.frames[k];
    TrackingFrame& nf = noisy.frames[k];
    cf.frame_index = nf.frame_index = static_cast<std::int64_t>(k);
    cf.touch = nf.touch = {k < sched.start_frame, k >= sched.grasp_frame, false};
    for (int i = 0; i < kSensorCount; ++i) {
      for (int a = 0; a < 3; ++a) {
        cf.sensors[i][a] = quantize(s[i][a]);
        nf.sensors[i][a] = quantize(s[i][a] + noise.sample(3 * i + a, k, noise_rng));
      }
    }
  }
  out.recording = std::move(noisy);
  return out;
}

DropoutResult inject_dropouts(const Recording& r, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
  DropoutResult out;
  out.recording = r;
  out.recording.frames.clear();
  const std::size_t n = r.frames.size();
  Rng rng(derive_seed(seed, 0xd7));
  bool previous_deleted = false;
  for (std::size_t k = 0; k < n; ++k) {
    const bool interior = k > 0 && k + 1 < n;
    // Always draw so deletion positions depend only on the seed.
    const bool hit = rng.uniform() < p;
    if (interior && hit && !previous_deleted) {
      out.deleted.push_back(k);
      previous_deleted = true;
      continue;
    }
    previous_deleted = false;
    out.source.push_back(k);
    TrackingFrame f = r.frames[k];
    f.frame_index = r.frames.front().frame_index + static_cast<std::int64_t>(out.recording.frames.size());
    out.recording.frames.push_back(f);
  }
  return out;
}

Corpus generate_corpus(const GenConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  std::vector<ObjectLabel> objects;
  if (config.objects != ObjectSet::synthetic) {
    for (const auto& o : ObjectLabel::all(ObjectKind::real)) objects.push_back(o);
  }
  if (config.objects != ObjectSet::real) {
    for (const auto& o : ObjectLabel::all(ObjectKind::synthetic)) objects.push_back(o);
  }
  TrialOptions opts;
  opts.rate_hz = config.rate_hz;
  opts.noise_mm = config.noise_mm;
  for (int u = 0; u < config.users; ++u) {
    char id[16];
    std::snprintf(id, sizeof(id), "u%02d", u + 1);
    corpus.users.push_back(UserProfile::sample(id, derive_seed(config.seed, 0xa5, u)));
  }
  for (int u = 0; u < config.users; ++u) {
    const auto& user = corpus.users[u];
    for (const auto& label : objects) {
      const auto object = place_object(label, config.distance_mm);
      const std::uint64_t object_key =
          static_cast<std::uint64_t>(label.kind()) * 100 + static_cast<std::uint64_t>(label.class_id());
      for (int rep = 1; rep <= config.trials_per_object; ++rep) {
        const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(u) + 1, object_key + 1,
                                               static_cast<std::uint64_t>(rep));
        auto trial = generate_trial(user, object, seed, opts);
        CorpusTrial t;
        t.schedule = trial.schedule;
        t.recording = std::move(trial.recording);
        t.recording.session_id = "s" + std::to_string(rep);
        t.recording.trial_id = label.name() + "_" + std::to_string(rep);
        if (config.dropout_probability > 0.0) {
          auto d = inject_dropouts(t.recording, config.dropout_probability, seed);
          t.dropouts = d.deleted.size();
          auto shift = [&d](std::size_t frame) {
            return frame - static_cast<std::size_t>(std::lower_bound(d.deleted.begin(), d.deleted.end(), frame) -
                                                    d.deleted.begin());
          };
          t.schedule.start_frame = shift(t.schedule.start_frame);
          t.schedule.grasp_frame = shift(t.schedule.grasp_frame);
          t.recording = std::move(d.recording);
        }
        t.file = user.user_id + "_" + t.recording.session_id + "_" + label.name() + ".csv";
        corpus.trials.push_back(std::move(t));
      }
    }
  }
  return corpus;
}

void write_corpus_manifest(const Corpus& corpus, std::ostream& out) {
  out << "file,user,session,trial,object,kind,class_id,size_id,shape_id,width_mm,"
         "speed_scale,hand_scale,aperture_margin_mm,movement_time_s,start_frame,grasp_frame,"
         "frames,dropouts\n";
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& t : corpus.trials) {
    const auto& r = t.recording;
    const auto user = std::find_if(corpus.users.begin(), corpus.users.end(),
                                   [&](const UserProfile& u) { return u.user_id == r.user_id; });
    const bool syn = r.object.is_synthetic();
    out << t.file << ',' << r.user_id << ',' << r.session_id << ',' << r.trial_id << ','
        << r.object.name() << ',' << (syn ? "synthetic" : "real") << ',' << r.object.class_id()
        << ',' << (syn ? r.object.size_id() : -1) << ',' << (syn ? r.object.shape_id() : -1) << ','
        << num(object_width_mm(r.object)) << ',' << num(t.schedule.speed_scale) << ','
        << num(user->hand_scale) << ',' << num(user->aperture_margin_mm) << ','
        << num(t.schedule.movement_time_s) << ',' << t.schedule.start_frame << ','
        << t.schedule.grasp_frame << ',' << r.frames.size() << ',' << t.dropouts << '\n';
  }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& t : corpus.trials) write_recording_file(dir / t.file, t.recording);
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
  write_corpus_manifest(corpus, manifest);
}

}  // namespace reachcast
