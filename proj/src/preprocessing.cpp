// SPDX-License-Identifier: Apache-2.0
#include "reachcast/preprocessing.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace reachcast {

std::complex<double> FirFilter::response(double hz) const {
  const double omega = 2.0 * std::numbers::pi * hz / rate_hz;
  std::complex<double> sum{0.0, 0.0};
  for (std::size_t n = 0; n < taps.size(); ++n) {
    sum += taps[n] * std::polar(1.0, -omega * static_cast<double>(n));
  }
  return sum;
}

double FirFilter::magnitude_db(double hz) const {
  return 20.0 * std::log10(std::abs(response(hz)));
}

FirFilter design_lowpass_fir(int order, double cutoff_hz, double rate_hz) {
  if (order < 1) throw std::invalid_argument("filter order must be >= 1");
  if (!(rate_hz > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= rate_hz / 2.0) {
    throw std::invalid_argument("cutoff must lie in (0, Nyquist)");
  }
  FirFilter f;
  f.order = order;
  f.cutoff_hz = cutoff_hz;
  f.rate_hz = rate_hz;
  f.taps.resize(static_cast<std::size_t>(order) + 1);

  const double fc = 2.0 * cutoff_hz / rate_hz;
  const double centre = order / 2.0;
  for (int n = 0; n <= order; ++n) {
    const double window =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(order));
    const double x = fc * (n - centre);
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    f.taps[n] = window * sinc;
  }
  double total = 0.0;
  for (double t : f.taps) total += t;
  for (auto& t : f.taps) t /= total;
  // cos(2πn/N) and cos(2π(N-n)/N) can differ in the last bit.
  for (int n = 0; n <= order / 2; ++n) f.taps[order - n] = f.taps[n];
  return f;
}

FirChannel::FirChannel(const FirFilter& filter)
    : taps_(filter.taps), ring_(filter.taps.size(), 0.0) {}

std::optional<double> FirChannel::step(double x) {
  head_ = (head_ + 1) % ring_.size();
  ring_[head_] = x;
  if (seen_ < ring_.size()) ++seen_;
  if (!primed()) return std::nullopt;
  double y = 0.0;
  std::size_t slot = head_;
  for (std::size_t n = 0; n < taps_.size(); ++n) {
    y += taps_[n] * ring_[slot];
    slot = slot == 0 ? ring_.size() - 1 : slot - 1;
  }
  return y;
}

void FirChannel::reset() {
  std::fill(ring_.begin(), ring_.end(), 0.0);
  head_ = 0;
  seen_ = 0;
}

double compute_velocity(const Vec3& p_prev, const Vec3& p_curr, double rate_hz) {
  return rate_hz * (p_curr - p_prev).norm() / 1000.0;
}

std::optional<double> SpikeRepair::push(double v) {
  std::optional<double> out;
  if (pending_) {
    const double current = *pending_;
    double emitted = current;
    if (previous_ && current - *previous_ > threshold_ && v - current < -threshold_) {
      emitted = 0.5 * (*previous_ + v);
      ++repaired_;
    }
    out = emitted;
    previous_ = current;
  }
  pending_ = v;
  return out;
}

std::optional<double> SpikeRepair::flush() {
  auto out = pending_;
  if (pending_) previous_ = pending_;
  pending_.reset();
  return out;
}

void SpikeRepair::reset() {
  previous_.reset();
  pending_.reset();
  repaired_ = 0;
}

std::vector<double> repair_spikes(std::span<const double> speeds, double threshold) {
  SpikeRepair repair(threshold);
  std::vector<double> out;
  out.reserve(speeds.size());
  for (double v : speeds) {
    if (auto r = repair.push(v)) out.push_back(*r);
  }
  if (auto r = repair.flush()) out.push_back(*r);
  return out;
}

StreamPreprocessor::StreamPreprocessor(const PreprocessConfig& config)
    : config_(config),
      filter_(design_lowpass_fir(config.order, config.cutoff_hz, config.rate_hz)),
      position_channels_(3 * kSensorCount, FirChannel(filter_)),
      speed_channel_(filter_),
      repair_(config.spike_threshold) {}

void StreamPreprocessor::reset() {
  for (auto& c : position_channels_) c.reset();
  speed_channel_.reset();
  repair_.reset();
  previous_.reset();
  lookahead_.reset();
}

std::optional<ProcessedFrame> StreamPreprocessor::push(const TrackingFrame& frame) {
  if (previous_ && frame.frame_index <= previous_->frame_index) {
    throw DataError("frame index not strictly increasing in stream");
  }
  if (!previous_) {
    previous_ = frame;
    return std::nullopt;
  }
  const double speed = compute_velocity(previous_->hand(), frame.hand(), config_.rate_hz);
  previous_ = frame;

  const auto repaired = repair_.push(speed);
  std::optional<ProcessedFrame> out;
  if (repaired) {
    // lookahead_ is the frame whose speed was just released by the repair.
    const TrackingFrame& current = *lookahead_;
    ProcessedFrame p;
    p.frame.frame_index = current.frame_index;
    p.frame.touch = current.touch;
    bool primed = true;
    for (int s = 0; s < kSensorCount; ++s) {
      for (int a = 0; a < 3; ++a) {
        const auto y = position_channels_[3 * s + a].step(current.sensors[s][a]);
        if (y) {
          p.frame.sensors[s][a] = *y;
        } else {
          primed = false;
        }
      }
    }
    const auto v = speed_channel_.step(*repaired);
    if (primed && v) {
      p.speed = HandSpeed{current.frame_index, *v};
      out = p;
    }
  }
  lookahead_ = frame;
  return out;
}

PreprocessResult preprocess_stream(std::span<const TrackingFrame> frames,
                                   const PreprocessConfig& config) {
  StreamPreprocessor pre(config);
  PreprocessResult result;
  result.frames.reserve(frames.size());
  for (const auto& f : frames) {
    if (auto p = pre.push(f)) result.frames.push_back(std::move(*p));
  }
  result.primed = !result.frames.empty();
  if (!result.primed) {
    result.report = "not primed: " + std::to_string(frames.size()) +
                    " frames, first output needs " + std::to_string(pre.warmup_frames());
  }
  return result;
}

}  // namespace reachcast
