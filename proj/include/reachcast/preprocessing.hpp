// SPDX-License-Identifier: Apache-2.0
//
// Causal preprocessing of the tracking stream: hand speed from finite
// differences, single-frame dropout spike repair and linear-phase FIR
// low-pass filtering of every channel.
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reachcast/capture.hpp"

namespace reachcast {

/// Windowed-sinc low-pass FIR. `order + 1` taps, symmetric, unit DC gain.
///
/// Note on naming: the capture setup calls its order-25 filter "Type 1",
/// but 26 taps is an even length, which is conventionally Type 2. The
/// design here simply follows the order it is given.
struct FirFilter {
  std::vector<double> taps;
  int order = 0;
  double cutoff_hz = 0.0;
  double rate_hz = 0.0;

  double group_delay_samples() const { return order / 2.0; }
  std::complex<double> response(double hz) const;
  double magnitude_db(double hz) const;
};

/// Hamming-windowed sinc, normalized so the taps sum to one.
/// Throws std::invalid_argument for order < 1 or cutoff outside (0, rate/2).
FirFilter design_lowpass_fir(int order, double cutoff_hz, double rate_hz);

/// Streaming state for one scalar channel: ring buffer of the last
/// order+1 inputs. Produces output once primed.
class FirChannel {
 public:
  explicit FirChannel(const FirFilter& filter);

  std::optional<double> step(double x);
  bool primed() const { return seen_ >= taps_.size(); }
  void reset();

 private:
  std::vector<double> taps_;
  std::vector<double> ring_;
  std::size_t head_ = 0;  // slot of the most recent sample
  std::size_t seen_ = 0;
};

/// Hand speed in m/s from two positions in mm.
double compute_velocity(const Vec3& p_prev, const Vec3& p_curr,
                        double rate_hz = kTrackerRateHz);

inline constexpr double kSpikeThreshold = 0.1;  // m/s per frame

/// One-frame-lookahead spike repair. A sample is replaced by the mean of its
/// two neighbors when it rises by more than the threshold and the next
/// sample falls by more than the threshold. Output lags input by one frame.
class SpikeRepair {
 public:
  explicit SpikeRepair(double threshold = kSpikeThreshold) : threshold_(threshold) {}

  /// Feeds ν(t_k); returns the repaired ν(t_{k-1}) once available.
  std::optional<double> push(double v);
  /// Emits the pending sample unchanged (end of stream).
  std::optional<double> flush();
  void reset();

  std::size_t repaired_count() const { return repaired_; }

 private:
  double threshold_;
  std::optional<double> previous_;
  std::optional<double> pending_;
  std::size_t repaired_ = 0;
};

/// Offline convenience over SpikeRepair: repairs a whole series, flushing
/// the final sample unchanged.
std::vector<double> repair_spikes(std::span<const double> speeds,
                                  double threshold = kSpikeThreshold);

struct PreprocessConfig {
  int order = 25;
  double cutoff_hz = 25.0;
  double rate_hz = kTrackerRateHz;
  double spike_threshold = kSpikeThreshold;
};

struct HandSpeed {
  std::int64_t frame_index = 0;
  double mps = 0.0;
};

/// A frame after filtering. `frame` holds filtered sensor positions and the
/// raw touch states; every channel carries the same group delay.
struct ProcessedFrame {
  TrackingFrame frame;
  HandSpeed speed;
};

/// Stage order: (1) raw hand speed from the reference sensor, (2) spike
/// repair, (3) FIR on the 36 position channels and the repaired speed.
/// The output for frame j is emitted when frame j+1 arrives.
class StreamPreprocessor {
 public:
  explicit StreamPreprocessor(const PreprocessConfig& config = {});

  std::optional<ProcessedFrame> push(const TrackingFrame& frame);
  void reset();

  const FirFilter& filter() const { return filter_; }
  /// Frames consumed up to and including the one that yields the first
  /// output: one for the first speed difference, order+1 to prime the
  /// filter and one lookahead frame.
  std::size_t warmup_frames() const { return static_cast<std::size_t>(filter_.order) + 3; }

 private:
  PreprocessConfig config_;
  FirFilter filter_;
  std::vector<FirChannel> position_channels_;
  FirChannel speed_channel_;
  SpikeRepair repair_;
  std::optional<TrackingFrame> previous_;
  std::optional<TrackingFrame> lookahead_;
};

struct PreprocessResult {
  std::vector<ProcessedFrame> frames;
  bool primed = false;
  std::string report;
};

PreprocessResult preprocess_stream(std::span<const TrackingFrame> frames,
                                   const PreprocessConfig& config = {});

}  // namespace reachcast
