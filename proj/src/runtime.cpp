// SPDX-License-Identifier: Apache-2.0
#include "reachcast/runtime.hpp"

#include "reachcast/features.hpp"

namespace reachcast {

StreamingPredictor::StreamingPredictor(const Model& model, const PreprocessConfig& config)
    : model_(model),
      pre_(config),
      ring_(static_cast<std::size_t>(model.config.window)),
      steps_(static_cast<std::size_t>(model.config.window)) {
  if (model.norm.features.size() != static_cast<std::size_t>(model.config.input_dim)) {
    throw DataError("model has no feature statistics for its input dimension");
  }
  if (feature_dim(model.config.features) != model.config.input_dim) {
    throw DataError("model input dimension does not match its feature set");
  }
}

void StreamingPredictor::reset() {
  pre_.reset();
  head_ = filled_ = frames_seen_ = 0;
}

std::size_t StreamingPredictor::warmup_frames() const {
  return static_cast<std::size_t>(model_.config.window) + pre_.warmup_frames() - 1;
}

std::optional<RuntimePrediction> StreamingPredictor::push(const TrackingFrame& frame) {
  ++frames_seen_;
  const auto processed = pre_.push(frame);
  if (!processed) return std::nullopt;
  const std::size_t L = ring_.size();
  ring_[head_] = model_.norm.features.apply(assemble_features(*processed, model_.config.features));
  head_ = (head_ + 1) % L;
  filled_ = std::min(filled_ + 1, L);
  if (filled_ < L) return std::nullopt;

  // Oldest sample first.
  for (std::size_t t = 0; t < L; ++t) steps_[t] = ring_[(head_ + t) % L];
  RuntimePrediction out;
  out.frame_index = processed->frame.frame_index;
  const Eigen::VectorXd y = forward(model_, steps_, Mode::infer).col(0);
  if (is_regression(model_.config.task)) {
    out.values = model_.norm.targets.invert(y);
  } else {
    out.values = y;
    Eigen::Index k = 0;
    y.maxCoeff(&k);
    out.predicted_class = static_cast<int>(k);
  }
  return out;
}

}  // namespace reachcast
