// SPDX-License-Identifier: Apache-2.0
//
// Single-layer LSTM sequence model with a dropout -> FC(ReLU) -> output
// head, trained with BPTT, L2 regularization, global-norm clipping and Adam.
// Everything runs in double precision; batches are column-major (one column
// per window) so each time step is a pair of matrix products.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "reachcast/common.hpp"
#include "reachcast/dataset.hpp"

namespace reachcast {

enum class HeadKind : std::uint8_t { linear, softmax };

struct ModelConfig {
  Task task = Task::distance_time;
  FeatureSet features = FeatureSet::vh_fp;
  int input_dim = 16;
  int hidden = 64;
  int fc_size = 16;
  int outputs = 2;
  int window = 25;
  double dropout = 0.2;

  HeadKind head() const { return is_regression(task) ? HeadKind::linear : HeadKind::softmax; }
  /// Throws std::invalid_argument on non-positive sizes or a head that does
  /// not fit the task.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Hidden size 64 for regression, 128 for classification; FC 16; dropout 0.2.
ModelConfig default_config(Task task, FeatureSet features, int window,
                           ObjectKind kind = ObjectKind::synthetic);

struct LstmParams {
  Eigen::MatrixXd input_weights;      // 4H x D, row blocks i, f, g, o
  Eigen::MatrixXd recurrent_weights;  // 4H x H
  Eigen::VectorXd bias;               // 4H
};

struct HeadParams {
  Eigen::MatrixXd fc_weights;   // F x H
  Eigen::VectorXd fc_bias;      // F
  Eigen::MatrixXd out_weights;  // O x F
  Eigen::VectorXd out_bias;     // O
};

/// All trainable arrays. Also used for gradients and Adam moments.
struct Parameters {
  LstmParams lstm;
  HeadParams head;

  static Parameters zeros(const ModelConfig& config);

  static constexpr std::size_t kArrayCount = 7;
  std::array<std::span<double>, kArrayCount> arrays();
  std::array<std::span<const double>, kArrayCount> arrays() const;

  std::size_t count() const;
  double squared_norm() const;
  bool all_finite() const;

  friend bool operator==(const Parameters& a, const Parameters& b);
};
using Gradients = Parameters;

/// 4(HD + H² + H) + (FH + F) + (OF + O).
std::size_t count_parameters(const ModelConfig& config);

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  std::vector<double> loss_history;
  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct Model {
  ModelConfig config;
  Parameters params;
  NormalizationStats norm;
  TrainingMeta meta;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Uniform ±sqrt(1/fan_in) weights, forget-gate bias 1, other biases 0.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// One D x B matrix per time step.
using StepBatch = std::vector<Eigen::MatrixXd>;

struct LstmCache {
  std::vector<Eigen::MatrixXd> inputs;     // D x B
  std::vector<Eigen::MatrixXd> gates;      // 4H x B, activated
  std::vector<Eigen::MatrixXd> cells;      // H x B
  std::vector<Eigen::MatrixXd> cell_tanh;  // H x B
  std::vector<Eigen::MatrixXd> hidden;     // H x B
};

/// Runs the recurrence from h0 = c0 = 0 and returns h_L (H x B).
Eigen::MatrixXd lstm_forward(const LstmParams& p, const StepBatch& steps,
                             LstmCache* cache = nullptr);
/// Single sequence given as L x D.
Eigen::VectorXd lstm_forward(const LstmParams& p, const Eigen::MatrixXd& sequence);

enum class Mode { train, infer };

struct ForwardCache {
  LstmCache lstm;
  Eigen::MatrixXd mask;     // H x B, inverted-dropout scaling folded in
  Eigen::MatrixXd dropped;  // H x B
  Eigen::MatrixXd fc_pre;   // F x B
  Eigen::MatrixXd fc_act;   // F x B
  Eigen::MatrixXd output;   // O x B (linear outputs or probabilities)
  std::size_t batch = 0;
};

/// h_L -> dropout (train mode only) -> FC + ReLU -> linear or softmax head.
/// `dropout_rng` is required in train mode with a positive dropout rate.
Eigen::MatrixXd forward(const Model& model, const StepBatch& steps, Mode mode,
                        Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr);

/// Inference on one standardized L x D window.
Eigen::VectorXd predict(const Model& model, const Eigen::MatrixXd& window);

/// Column-wise softmax with max subtraction.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);

/// RMSE over every entry of the minibatch.
double loss_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
/// Mean of -log p[label] over the batch; throws if a column is not a
/// probability vector.
double loss_xent(const Eigen::MatrixXd& probs, std::span<const int> labels);

struct Targets {
  Eigen::MatrixXd values;   // regression, O x B
  std::vector<int> labels;  // classification
};

/// Exact gradient of (data loss + l2 * Σθ²) for the batch held in `cache`.
/// Returns the data loss. Throws std::logic_error if the cache does not
/// match the batch.
double backward(const Model& model, const ForwardCache& cache, const Targets& targets,
                double l2, Gradients& grads);

double global_norm(const Gradients& g);
/// Rescales so the global L2 norm is at most `threshold`; returns the norm
/// before clipping.
double clip_gradients(Gradients& g, double threshold = 1.0);

struct AdamState {
  Parameters first;
  Parameters second;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const Parameters& p);
};

/// Bias-corrected Adam update.
void adam_step(Parameters& params, const Gradients& grads, AdamState& state, double lr);

struct TrainOptions {
  int epochs = 60;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double l2 = 1e-4;
  double clip_threshold = 1.0;
  std::uint64_t seed = 0;
};

/// Supplies standardized minibatches by example index.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual void gather(std::span<const std::size_t> ids, StepBatch& steps,
                      Targets& targets) const = 0;
};

/// Windows of a dataset, standardized with `stats`.
class DatasetSource final : public ExampleSource {
 public:
  DatasetSource(const Dataset& data, std::vector<std::size_t> windows,
                const NormalizationStats& stats, Task task);

  std::size_t size() const override { return windows_.size(); }
  void gather(std::span<const std::size_t> ids, StepBatch& steps,
              Targets& targets) const override;
  std::size_t window(std::size_t i) const { return windows_[i]; }

 private:
  const Dataset& data_;
  std::vector<std::size_t> windows_;
  const NormalizationStats& stats_;
  Task task_;
};

/// Shuffles the example order once, then runs `epochs` passes of
/// minibatches in that fixed order (the last partial batch is kept).
/// Appends per-epoch mean training loss to model.meta.loss_history.
void train(Model& model, const ExampleSource& data, const TrainOptions& options);

/// Continues training on an adaptation set with a fresh optimizer state.
/// Defaults to 50 epochs. Throws DataError if the set is empty.
void transfer_train(Model& model, const ExampleSource& data, TrainOptions options);

inline TrainOptions transfer_defaults() {
  TrainOptions o;
  o.epochs = 50;
  return o;
}

/// Inference outputs for every example (O x N), batched.
Eigen::MatrixXd predict_all(const Model& model, const ExampleSource& data,
                            std::size_t batch = 256);

// Model file

class ModelFormatError : public DataError {
 public:
  enum class Kind { magic, version, checksum, shape, truncated };
  ModelFormatError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Little-endian binary: "GPM1", version, config, normalization stats,
/// parameters as f32, training metadata, CRC32.
std::vector<std::uint8_t> save_model(const Model& model);
Model load_model(std::span<const std::uint8_t> bytes);

void save_model_file(const std::string& path, const Model& model);
Model load_model_file(const std::string& path);

}  // namespace reachcast
