// SPDX-License-Identifier: Apache-2.0
//
// Metrics, cross-validation and leave-one-group-out protocols, transfer
// learning to a held-out user, and frame-by-frame runtime simulation.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "reachcast/dataset.hpp"
#include "reachcast/neural.hpp"

namespace reachcast {

/// Mean |pred - target|. Throws DataError on empty or unequal input.
double mae(std::span<const double> pred, std::span<const double> target);
/// Percentage of equal entries.
double accuracy(std::span<const int> pred, std::span<const int> labels);
/// Rows are true classes, columns predictions.
Eigen::MatrixXi confusion(std::span<const int> pred, std::span<const int> labels, int classes);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

enum class Protocol { kfold, l1uo, l1so, l1oo };
std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view s);

struct Metric {
  std::string name;  // mae_distance_mm, mae_time_ms, accuracy_pct
  std::vector<double> per_fold;
  double mean = 0.0;
  double std = 0.0;
};

struct MetricsReport {
  Task task = Task::distance;
  Protocol protocol = Protocol::kfold;
  FeatureSet features = FeatureSet::vh_fp;
  int window = 25;
  std::vector<std::string> fold_keys;
  std::vector<Metric> metrics;
  Eigen::MatrixXi confusion;  // summed over folds
  double wall_seconds = 0.0;

  const Metric& metric(std::string_view name) const;
};

struct EvalOptions {
  TrainOptions train;  // its seed is replaced by one derived per split
  std::uint64_t seed = 0;
  int folds = 4;
  int threads = 0;  // 0: REACHCAST_THREADS, else hardware concurrency
  int hidden = 0;   // 0: 64 for regression, 128 for classification
};

/// REACHCAST_THREADS if set and positive, else hardware concurrency.
int evaluation_threads(int requested = 0);

/// The single object kind of the dataset; throws DataError if mixed.
ObjectKind dataset_object_kind(const Dataset& data);

std::vector<DatasetSplit> protocol_splits(const Dataset& data, Protocol protocol, int folds,
                                          std::uint64_t seed);

/// Model for one split with normalization from its training windows only.
Model train_split(const Dataset& data, const DatasetSplit& split, Task task,
                  const EvalOptions& options, std::uint64_t split_seed);

/// Predictions for dataset windows in original units (regression) or class
/// probabilities, one column per window.
Eigen::MatrixXd evaluate_windows(const Model& model, const Dataset& data,
                                 std::span<const std::size_t> windows);

/// Metric values for one set of windows (in the order of metric names).
std::vector<double> score_windows(const Model& model, const Dataset& data,
                                  std::span<const std::size_t> windows,
                                  Eigen::MatrixXi* confusion_out = nullptr);

std::vector<std::string> metric_names(Task task);

/// Trains one model per split (in parallel), evaluates the held-out part and
/// aggregates. Models are returned in split order when `models` is given.
MetricsReport run_protocol(const Dataset& data, Task task, Protocol protocol,
                           const EvalOptions& options, std::vector<Model>* models = nullptr);

struct TransferRow {
  std::size_t size = 0;  // adaptation windows; 0 is the L1UO baseline
  std::vector<double> before;
  std::vector<double> after;
};

struct TransferReport {
  std::string user;
  Task task = Task::distance;
  std::vector<std::string> metric_names;
  std::size_t evaluation_windows = 0;
  std::vector<TransferRow> rows;
};

/// Adapts a model trained without `user` (the given base, or a fresh L1UO
/// model) with windows from the user's earlier sessions and evaluates on
/// the user's last session.
TransferReport run_transfer(const Dataset& data, Task task, const std::string& user,
                            std::span<const std::size_t> sizes, const EvalOptions& options,
                            const Model* base = nullptr);

struct CurveBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  double below() const { return mean - std; }
};

/// One prediction of the runtime simulation with its ground truth.
struct RuntimePoint {
  std::size_t trial = 0;
  std::int64_t frame = 0;
  double distance_mm = 0.0;
  double time_ms = 0.0;
  Eigen::VectorXd values;
  int label = -1;
  int predicted = -1;
};

struct RuntimeTrace {
  Task task = Task::distance;
  std::vector<RuntimePoint> points;
  /// Frames each trial consumed (from R2G start) before its first prediction.
  std::vector<std::size_t> first_prediction_frames;
};

/// Streams each recording's reach from its R2G start through the deployed
/// pipeline and records every prediction up to the grasp frame.
RuntimeTrace simulate_runtime(const Model& model, std::span<const Recording> recordings);

enum class CurveKind { distance_by_time, time_by_distance, accuracy_by_time };
std::string_view to_string(CurveKind k);

/// Contiguous bins from 0 up to the largest key. Regression curves bin the
/// absolute error, accuracy curves the 0/100 correctness.
std::vector<CurveBin> bin_curve(const RuntimeTrace& trace, CurveKind kind, double width);

/// Curves that apply to the trace's task, with 50 ms / 25 mm bins by default.
std::vector<std::pair<CurveKind, std::vector<CurveBin>>> runtime_curves(
    const RuntimeTrace& trace, double time_bin_ms = 50.0, double distance_bin_mm = 25.0);

/// protocol,task,features,window,fold,metric,value
void write_report_csv(const MetricsReport& report, std::ostream& out, bool header = true);
/// One JSON object per bin.
void write_curves_jsonl(const std::vector<std::pair<CurveKind, std::vector<CurveBin>>>& curves,
                        std::ostream& out);

}  // namespace reachcast
