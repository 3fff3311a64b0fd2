// SPDX-License-Identifier: Apache-2.0
//
// Frame-by-frame inference: preprocessing, feature assembly, a fixed-size
// FIFO of standardized feature vectors and one forward pass per frame.
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "reachcast/capture.hpp"
#include "reachcast/neural.hpp"
#include "reachcast/preprocessing.hpp"

namespace reachcast {

struct RuntimePrediction {
  std::int64_t frame_index = 0;  // frame the newest window sample belongs to
  Eigen::VectorXd values;        // regression in mm/ms, or class probabilities
  int predicted_class = -1;      // classification only
};

class StreamingPredictor {
 public:
  /// The model must outlive the predictor.
  explicit StreamingPredictor(const Model& model, const PreprocessConfig& config = {});

  std::optional<RuntimePrediction> push(const TrackingFrame& frame);
  void reset();

  /// Frames consumed before the first prediction:
  /// window + filter priming (order + 1) + 1 lookahead.
  std::size_t warmup_frames() const;
  std::size_t frames_seen() const { return frames_seen_; }

 private:
  const Model& model_;
  StreamPreprocessor pre_;
  std::vector<Eigen::VectorXd> ring_;  // standardized features, window slots
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
  std::size_t frames_seen_ = 0;
  StepBatch steps_;
};

}  // namespace reachcast
