// SPDX-License-Identifier: Apache-2.0
//
// Labeled fixed-length windows over preprocessed reach-to-grasp segments,
// window-count balancing, normalization statistics and evaluation splits.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "reachcast/capture.hpp"
#include "reachcast/features.hpp"
#include "reachcast/preprocessing.hpp"

namespace reachcast {

enum class Task : std::uint8_t {
  distance = 0,
  time = 1,
  distance_time = 2,  // merged two-output regression
  object = 3,
  size = 4,
  shape = 5
};

std::string_view to_string(Task t);
Task parse_task(std::string_view s);

constexpr bool is_regression(Task t) {
  return t == Task::distance || t == Task::time || t == Task::distance_time;
}
constexpr int target_count(Task t) {
  return t == Task::distance_time ? 2 : (is_regression(t) ? 1 : 0);
}
/// Number of softmax classes; the object task depends on the object kind.
int class_count(Task t, ObjectKind kind);

struct Provenance {
  std::string user;
  std::string session;
  std::string trial;
  ObjectLabel object;
  std::string source;
};

struct WindowLabel {
  double distance_mm = 0.0;
  double time_to_grasp_ms = 0.0;
  int object_id = -1;
  int size_id = -1;  // synthetic objects only
  int shape_id = -1;
};

/// Standardized regression targets for `task`, in label units (mm, ms).
Eigen::VectorXd regression_targets(const WindowLabel& label, Task task);
/// Class index for a classification task; throws DataError if undefined.
int class_label(const WindowLabel& label, Task task);

/// One preprocessed R2G segment. Sample n has features.col(n) and the
/// labels of recording frame frame_offset[n].
struct Sequence {
  Provenance provenance;
  std::size_t start_frame = 0;
  std::size_t grasp_frame = 0;
  std::vector<std::int64_t> frame_offset;
  Eigen::MatrixXd features;  // D x N
  std::vector<double> distance_mm;
  std::vector<double> time_ms;

  std::size_t size() const { return frame_offset.size(); }
};

/// Runs the streaming preprocessor over frames [start, grasp + 1] (the frame
/// after contact is the spike-repair lookahead) and keeps samples up to the
/// grasp frame. Labels come from the unfiltered reference sensor.
Sequence build_sequence(const Recording& r, const PhaseSegment& segment, FeatureSet set,
                        const PreprocessConfig& config = {}, std::string source = {});

struct BuildReport {
  std::size_t accepted = 0;
  std::vector<std::pair<std::string, ExclusionReason>> excluded;
};

/// Validates, segments and preprocesses every recording; excluded trials are
/// listed in `report`.
std::vector<Sequence> build_sequences(std::span<const Recording> recordings, FeatureSet set,
                                      const PreprocessConfig& config = {},
                                      BuildReport* report = nullptr,
                                      std::span<const std::string> sources = {});

/// A window of `length` consecutive samples ending at sample `end`.
struct Window {
  std::uint32_t sequence = 0;
  std::uint32_t end = 0;
  friend bool operator==(const Window&, const Window&) = default;
};

/// Windows starting at offsets 0, stride, 2*stride, ... Empty if the
/// sequence is shorter than `length`.
std::vector<Window> make_windows(const Sequence& seq, std::uint32_t sequence_index,
                                 int length, int stride);

WindowLabel label_at(const Sequence& seq, std::size_t sample);

/// Number of windows a uniform stride yields over the given lengths.
std::size_t count_windows(std::span<const std::size_t> lengths, int length, int stride);

struct BalanceReport {
  int stride = 1;
  std::size_t available = 0;  // windows at the chosen stride
  std::size_t count = 0;      // windows kept
  std::size_t target = 0;
  bool shortfall = false;     // even stride 1 is below target
  std::size_t short_sequences = 0;
};

/// Picks one stride for the whole corpus so the window count lands within
/// ±5% of target; if no stride does, takes the smallest stride above the
/// target and drops a seeded random subset.
BalanceReport choose_stride(std::span<const std::size_t> lengths, int length,
                            std::size_t target);

struct Dataset {
  FeatureSet features = FeatureSet::vh_fp;
  int window = 25;
  std::vector<Sequence> sequences;
  std::vector<Window> windows;
  BalanceReport balance;

  std::size_t size() const { return windows.size(); }
  int dim() const { return feature_dim(features); }
  WindowLabel label(std::size_t i) const;
  const Provenance& provenance(std::size_t i) const {
    return sequences[windows[i].sequence].provenance;
  }
  /// length x D block of the window's raw features, transposed view.
  auto window_features(std::size_t i) const {
    const auto& w = windows[i];
    return sequences[w.sequence].features.middleCols(w.end + 1 - window, window);
  }
  std::int64_t end_frame(std::size_t i) const {
    const auto& w = windows[i];
    return sequences[w.sequence].frame_offset[w.end];
  }
};

Dataset balance_windows(std::vector<Sequence> sequences, FeatureSet set, int length,
                        std::size_t target_count, std::uint64_t seed);

/// Every window at the given stride, no balancing.
Dataset all_windows(std::vector<Sequence> sequences, FeatureSet set, int length, int stride);

/// Per-channel z-score statistics. Constant channels get std = 1 and are
/// flagged.
struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<std::uint8_t> constant;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    return (x - mean).cwiseQuotient(stddev);
  }
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const {
    return z.cwiseProduct(stddev) + mean;
  }
  std::size_t size() const { return static_cast<std::size_t>(mean.size()); }
  friend bool operator==(const ChannelStats& a, const ChannelStats& b) {
    return a.mean == b.mean && a.stddev == b.stddev && a.constant == b.constant;
  }
};

/// Column-wise statistics of a D x N sample matrix (population std).
ChannelStats channel_stats(const Eigen::MatrixXd& samples);

struct NormalizationStats {
  ChannelStats features;
  ChannelStats targets;  // empty for classification
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Statistics over the samples of the training windows only (each window
/// contributes all of its samples).
NormalizationStats compute_norm_stats(const Dataset& data,
                                      std::span<const std::size_t> train, Task task);

struct DatasetSplit {
  std::string key;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Shuffle once with `seed`, cut into k near-equal parts; fold i validates on
/// part i. Part sizes differ by at most one, larger parts first.
std::vector<DatasetSplit> split_kfold(std::size_t n, int k, std::uint64_t seed);

enum class GroupKey { user, session, object };
std::string_view to_string(GroupKey k);
std::string group_of(const Provenance& p, GroupKey key);

/// One split per group, sorted by group name.
std::vector<DatasetSplit> split_leave_one_out(const Dataset& data, GroupKey key);

/// One CSV row per window.
void write_dataset_manifest(const Dataset& data, std::ostream& out);

}  // namespace reachcast
