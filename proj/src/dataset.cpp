// SPDX-License-Identifier: Apache-2.0
#include "reachcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

namespace reachcast {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::distance: return "distance";
    case Task::time: return "time";
    case Task::distance_time: return "distance_time";
    case Task::object: return "object";
    case Task::size: return "size";
    case Task::shape: return "shape";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  for (auto t : {Task::distance, Task::time, Task::distance_time, Task::object, Task::size,
                 Task::shape}) {
    if (s == to_string(t)) return t;
  }
  throw DataError("unknown task '" + std::string(s) + "'");
}

int class_count(Task t, ObjectKind kind) {
  switch (t) {
    case Task::object:
      return kind == ObjectKind::real ? kRealObjectCount : kSyntheticObjectCount;
    case Task::size: return kSizeCount;
    case Task::shape: return kShapeCount;
    default: return 0;
  }
}

Eigen::VectorXd regression_targets(const WindowLabel& label, Task task) {
  switch (task) {
    case Task::distance: return Eigen::VectorXd::Constant(1, label.distance_mm);
    case Task::time: return Eigen::VectorXd::Constant(1, label.time_to_grasp_ms);
    case Task::distance_time: {
      Eigen::VectorXd v(2);
      v << label.distance_mm, label.time_to_grasp_ms;
      return v;
    }
    default: throw DataError("task has no regression targets");
  }
}

int class_label(const WindowLabel& label, Task task) {
  int id = -1;
  switch (task) {
    case Task::object: id = label.object_id; break;
    case Task::size: id = label.size_id; break;
    case Task::shape: id = label.shape_id; break;
    default: throw DataError("task has no class label");
  }
  if (id < 0) throw DataError("class label undefined for this object");
  return id;
}

Sequence build_sequence(const Recording& r, const PhaseSegment& segment, FeatureSet set,
                        const PreprocessConfig& config, std::string source) {
  if (segment.grasp_frame >= r.frames.size() || segment.start_frame >= segment.grasp_frame) {
    throw DataError("segment outside recording");
  }
  Sequence seq;
  seq.provenance = {r.user_id, r.session_id, r.trial_id, r.object,
                    source.empty() ? r.trial_id : std::move(source)};
  seq.start_frame = segment.start_frame;
  seq.grasp_frame = segment.grasp_frame;

  const std::size_t last = std::min(segment.grasp_frame + 1, r.frames.size() - 1);
  StreamPreprocessor pre(config);
  std::vector<FeatureVector> columns;
  columns.reserve(segment.length() + 1);
  for (std::size_t k = segment.start_frame; k <= last; ++k) {
    auto p = pre.push(r.frames[k]);
    if (!p) continue;
    // Output for frame k-1 is released by frame k.
    const std::size_t offset = k - 1;
    if (offset > segment.grasp_frame) break;
    const auto& raw = r.frames[offset];
    columns.push_back(assemble_features(*p, set));
    seq.frame_offset.push_back(static_cast<std::int64_t>(offset));
    seq.distance_mm.push_back((raw.hand() - segment.object_position).norm());
    seq.time_ms.push_back(static_cast<double>(segment.grasp_frame - offset) / r.rate_hz *
                          1000.0);
  }
  seq.features.resize(feature_dim(set), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t n = 0; n < columns.size(); ++n) {
    seq.features.col(static_cast<Eigen::Index>(n)) = columns[n];
  }
  return seq;
}

std::vector<Sequence> build_sequences(std::span<const Recording> recordings, FeatureSet set,
                                      const PreprocessConfig& config, BuildReport* report,
                                      std::span<const std::string> sources) {
  std::vector<Sequence> out;
  out.reserve(recordings.size());
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    const auto& r = recordings[i];
    const std::string source = i < sources.size() ? sources[i] : r.trial_id;
    const auto verdict = validate_recording(r);
    if (verdict.excluded) {
      if (report) report->excluded.emplace_back(source, verdict.reason);
      continue;
    }
    out.push_back(build_sequence(r, segment_r2g(r), set, config, source));
    if (report) ++report->accepted;
  }
  return out;
}

std::vector<Window> make_windows(const Sequence& seq, std::uint32_t sequence_index,
                                 int length, int stride) {
  if (length < 1 || stride < 1) throw std::invalid_argument("length and stride must be >= 1");
  std::vector<Window> out;
  const auto n = seq.size();
  const auto L = static_cast<std::size_t>(length);
  for (std::size_t start = 0; start + L <= n; start += static_cast<std::size_t>(stride)) {
    out.push_back({sequence_index, static_cast<std::uint32_t>(start + L - 1)});
  }
  return out;
}

WindowLabel label_at(const Sequence& seq, std::size_t sample) {
  WindowLabel l;
  l.distance_mm = seq.distance_mm[sample];
  l.time_to_grasp_ms = seq.time_ms[sample];
  const auto& obj = seq.provenance.object;
  l.object_id = obj.class_id();
  if (obj.is_synthetic()) {
    l.size_id = obj.size_id();
    l.shape_id = obj.shape_id();
  }
  return l;
}

WindowLabel Dataset::label(std::size_t i) const {
  const auto& w = windows[i];
  return label_at(sequences[w.sequence], w.end);
}

std::size_t count_windows(std::span<const std::size_t> lengths, int length, int stride) {
  std::size_t total = 0;
  const auto L = static_cast<std::size_t>(length);
  for (auto n : lengths) {
    if (n >= L) total += (n - L) / static_cast<std::size_t>(stride) + 1;
  }
  return total;
}

BalanceReport choose_stride(std::span<const std::size_t> lengths, int length,
                            std::size_t target) {
  BalanceReport rep;
  rep.target = target;
  for (auto n : lengths) {
    if (n < static_cast<std::size_t>(length)) ++rep.short_sequences;
  }
  const auto at_one = count_windows(lengths, length, 1);
  if (at_one < target) {
    rep.stride = 1;
    rep.available = rep.count = at_one;
    rep.shortfall = true;
    return rep;
  }
  int best = 1;
  const std::size_t longest = lengths.empty() ? 1 : *std::max_element(lengths.begin(), lengths.end());
  for (int s = 2; static_cast<std::size_t>(s) <= longest; ++s) {
    if (count_windows(lengths, length, s) < target) break;
    best = s;
  }
  const auto hi = count_windows(lengths, length, best);
  const auto lo = count_windows(lengths, length, best + 1);
  const double t = static_cast<double>(target);
  if (static_cast<double>(hi) <= 1.05 * t) {
    rep.stride = best;
    rep.available = rep.count = hi;
  } else if (static_cast<double>(lo) >= 0.95 * t && static_cast<double>(lo) <= 1.05 * t) {
    rep.stride = best + 1;
    rep.available = rep.count = lo;
  } else {
    rep.stride = best;
    rep.available = hi;
    rep.count = target;
  }
  return rep;
}

Dataset balance_windows(std::vector<Sequence> sequences, FeatureSet set, int length,
                        std::size_t target_count, std::uint64_t seed) {
  if (sequences.empty()) throw DataError("cannot balance an empty corpus");
  std::vector<std::size_t> lengths;
  lengths.reserve(sequences.size());
  for (const auto& s : sequences) lengths.push_back(s.size());
  const auto rep = choose_stride(lengths, length, target_count);

  Dataset d = all_windows(std::move(sequences), set, length, rep.stride);
  if (d.windows.size() > rep.count) {
    std::vector<std::size_t> idx(d.windows.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, 0xba1a));
    shuffle(idx.begin(), idx.end(), rng);
    idx.resize(rep.count);
    std::sort(idx.begin(), idx.end());
    std::vector<Window> kept;
    kept.reserve(idx.size());
    for (auto i : idx) kept.push_back(d.windows[i]);
    d.windows = std::move(kept);
  }
  d.balance = rep;
  return d;
}

Dataset all_windows(std::vector<Sequence> sequences, FeatureSet set, int length, int stride) {
  Dataset d;
  d.features = set;
  d.window = length;
  d.sequences = std::move(sequences);
  for (std::size_t i = 0; i < d.sequences.size(); ++i) {
    if (d.sequences[i].features.rows() != feature_dim(set)) {
      throw DataError("sequence feature dimension does not match the feature set");
    }
    const auto w = make_windows(d.sequences[i], static_cast<std::uint32_t>(i), length, stride);
    d.windows.insert(d.windows.end(), w.begin(), w.end());
    if (d.sequences[i].size() < static_cast<std::size_t>(length)) ++d.balance.short_sequences;
  }
  d.balance.stride = stride;
  d.balance.available = d.balance.count = d.balance.target = d.windows.size();
  return d;
}

ChannelStats channel_stats(const Eigen::MatrixXd& samples) {
  ChannelStats s;
  const auto dims = samples.rows();
  const auto n = static_cast<double>(samples.cols());
  s.mean = Eigen::VectorXd::Zero(dims);
  s.stddev = Eigen::VectorXd::Ones(dims);
  s.constant.assign(static_cast<std::size_t>(dims), 0);
  if (samples.cols() == 0) return s;
  s.mean = samples.rowwise().sum() / n;
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double var = (samples.row(d).array() - s.mean[d]).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd <= 1e-12 * std::max(1.0, std::abs(s.mean[d]))) {
      s.stddev[d] = 1.0;
      s.constant[static_cast<std::size_t>(d)] = 1;
    } else {
      s.stddev[d] = sd;
    }
  }
  return s;
}

NormalizationStats compute_norm_stats(const Dataset& data, std::span<const std::size_t> train,
                                      Task task) {
  const auto L = data.window;
  Eigen::MatrixXd samples(data.dim(), static_cast<Eigen::Index>(train.size()) * L);
  for (std::size_t i = 0; i < train.size(); ++i) {
    samples.middleCols(static_cast<Eigen::Index>(i) * L, L) = data.window_features(train[i]);
  }
  NormalizationStats stats;
  stats.features = channel_stats(samples);
  if (is_regression(task)) {
    Eigen::MatrixXd targets(target_count(task), static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      targets.col(static_cast<Eigen::Index>(i)) = regression_targets(data.label(train[i]), task);
    }
    stats.targets = channel_stats(targets);
  }
  return stats;
}

std::vector<DatasetSplit> split_kfold(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  if (static_cast<std::size_t>(k) > n) throw DataError("more folds than windows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xf01d));
  shuffle(order.begin(), order.end(), rng);

  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::vector<std::size_t> bounds{0};
  for (int i = 0; i < k; ++i) {
    bounds.push_back(bounds.back() + base + (static_cast<std::size_t>(i) < extra ? 1 : 0));
  }
  std::vector<DatasetSplit> splits(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    auto& s = splits[static_cast<std::size_t>(i)];
    s.key = "fold" + std::to_string(i);
    for (std::size_t j = 0; j < n; ++j) {
      const bool val = j >= bounds[i] && j < bounds[i + 1];
      (val ? s.validation : s.train).push_back(order[j]);
    }
  }
  return splits;
}

std::string_view to_string(GroupKey k) {
  switch (k) {
    case GroupKey::user: return "user";
    case GroupKey::session: return "session";
    case GroupKey::object: return "object";
  }
  return "?";
}

std::string group_of(const Provenance& p, GroupKey key) {
  switch (key) {
    case GroupKey::user: return p.user;
    case GroupKey::session: return p.session;
    case GroupKey::object: return p.object.name();
  }
  return {};
}

std::vector<DatasetSplit> split_leave_one_out(const Dataset& data, GroupKey key) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    groups[group_of(data.provenance(i), key)].push_back(i);
  }
  if (groups.size() < 2) {
    throw DataError("leave-one-" + std::string(to_string(key)) + "-out needs >= 2 groups");
  }
  std::vector<DatasetSplit> splits;
  for (const auto& [name, members] : groups) {
    DatasetSplit s;
    s.key = name;
    s.validation = members;
    for (const auto& [other, m] : groups) {
      if (other != name) s.train.insert(s.train.end(), m.begin(), m.end());
    }
    std::sort(s.train.begin(), s.train.end());
    splits.push_back(std::move(s));
  }
  return splits;
}

void write_dataset_manifest(const Dataset& data, std::ostream& out) {
  out << "user,session,trial,object,end_frame,distance_mm,time_ms,object_id,size_id,"
         "shape_id,source,offset\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data.provenance(i);
    const auto l = data.label(i);
    out << p.user << ',' << p.session << ',' << p.trial << ',' << p.object.name() << ','
        << data.end_frame(i) << ',' << l.distance_mm << ',' << l.time_to_grasp_ms << ','
        << l.object_id << ',' << l.size_id << ',' << l.shape_id << ',' << p.source << ','
        << (data.windows[i].end + 1 - static_cast<std::uint32_t>(data.window)) << '\n';
  }
}

}  // namespace reachcast
