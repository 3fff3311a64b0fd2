// SPDX-License-Identifier: Apache-2.0
#include "reachcast/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include <json.hpp>

#include "reachcast/runtime.hpp"

namespace reachcast {

using Eigen::Index;

double mae(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty() || pred.size() != target.size()) {
    throw DataError("mae needs two non-empty series of equal length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double accuracy(std::span<const int> pred, std::span<const int> labels) {
  if (pred.empty() || pred.size() != labels.size()) {
    throw DataError("accuracy needs two non-empty series of equal length");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

Eigen::MatrixXi confusion(std::span<const int> pred, std::span<const int> labels, int classes) {
  if (pred.size() != labels.size()) throw DataError("confusion needs equal lengths");
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes || pred[i] < 0 || pred[i] >= classes) {
      throw DataError("class index out of range");
    }
    ++m(labels[i], pred[i]);
  }
  return m;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  double s = 0.0;
  for (double v : values) s += v;
  r.mean = s / static_cast<double>(values.size());
  if (values.size() > 1) {
    double q = 0.0;
    for (double v : values) q += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(q / static_cast<double>(values.size() - 1));
  }
  return r;
}

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::kfold: return "kfold";
    case Protocol::l1uo: return "l1uo";
    case Protocol::l1so: return "l1so";
    case Protocol::l1oo: return "l1oo";
  }
  return "?";
}

Protocol parse_protocol(std::string_view s) {
  for (auto p : {Protocol::kfold, Protocol::l1uo, Protocol::l1so, Protocol::l1oo}) {
    if (s == to_string(p)) return p;
  }
  throw std::invalid_argument("protocol must be kfold, l1uo, l1so or l1oo");
}

const Metric& MetricsReport::metric(std::string_view name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return m;
  }
  throw std::out_of_range("no metric " + std::string(name));
}

int evaluation_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("REACHCAST_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

ObjectKind dataset_object_kind(const Dataset& data) {
  if (data.sequences.empty()) throw DataError("dataset is empty");
  const ObjectKind kind = data.sequences.front().provenance.object.kind();
  for (const auto& s : data.sequences) {
    if (s.provenance.object.kind() != kind) {
      throw DataError("dataset mixes real and synthetic objects");
    }
  }
  return kind;
}

std::vector<DatasetSplit> protocol_splits(const Dataset& data, Protocol protocol, int folds,
                                          std::uint64_t seed) {
  switch (protocol) {
    case Protocol::kfold: return split_kfold(data.size(), folds, seed);
    case Protocol::l1uo: return split_leave_one_out(data, GroupKey::user);
    case Protocol::l1so: return split_leave_one_out(data, GroupKey::session);
    case Protocol::l1oo: return split_leave_one_out(data, GroupKey::object);
  }
  throw std::invalid_argument("unknown protocol");
}

std::vector<std::string> metric_names(Task task) {
  switch (task) {
    case Task::distance: return {"mae_distance_mm"};
    case Task::time: return {"mae_time_ms"};
    case Task::distance_time: return {"mae_distance_mm", "mae_time_ms"};
    default: return {"accuracy_pct"};
  }
}

namespace {

ModelConfig config_for(const Dataset& data, Task task, const EvalOptions& options) {
  const ObjectKind kind = task == Task::object ? dataset_object_kind(data) : ObjectKind::synthetic;
  ModelConfig c = default_config(task, data.features, data.window, kind);
  if (options.hidden > 0) c.hidden = options.hidden;
  return c;
}

// Checks that every window has a label for the task before any training.
void check_labels(const Dataset& data, Task task) {
  if (data.size() == 0) throw DataError("dataset has no windows");
  if (is_regression(task)) return;
  if (task == Task::object) dataset_object_kind(data);
  for (const auto& s : data.sequences) {
    WindowLabel l;
    l.object_id = s.provenance.object.class_id();
    if (s.provenance.object.is_synthetic()) {
      l.size_id = s.provenance.object.size_id();
      l.shape_id = s.provenance.object.shape_id();
    }
    class_label(l, task);
  }
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Model train_split(const Dataset& data, const DatasetSplit& split, Task task,
                  const EvalOptions& options, std::uint64_t split_seed) {
  if (split.train.empty()) throw DataError("split '" + split.key + "' has no training windows");
  Model model = init_model(config_for(data, task, options), derive_seed(split_seed, 1));
  model.norm = compute_norm_stats(data, split.train, task);
  TrainOptions t = options.train;
  t.seed = split_seed;
  const DatasetSource source(data, split.train, model.norm, task);
  train(model, source, t);
  return model;
}

Eigen::MatrixXd evaluate_windows(const Model& model, const Dataset& data,
                                 std::span<const std::size_t> windows) {
  const DatasetSource source(data, {windows.begin(), windows.end()}, model.norm,
                             model.config.task);
  Eigen::MatrixXd out = predict_all(model, source);
  if (is_regression(model.config.task)) {
    for (Index j = 0; j < out.cols(); ++j) out.col(j) = model.norm.targets.invert(out.col(j));
  }
  return out;
}

std::vector<double> score_windows(const Model& model, const Dataset& data,
                                  std::span<const std::size_t> windows,
                                  Eigen::MatrixXi* confusion_out) {
  const Task task = model.config.task;
  const Eigen::MatrixXd pred = evaluate_windows(model, data, windows);
  const std::size_t n = windows.size();
  std::vector<double> scores;
  if (is_regression(task)) {
    for (Index o = 0; o < pred.rows(); ++o) {
      std::vector<double> p(n), t(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = pred(o, static_cast<Index>(i));
        t[i] = regression_targets(data.label(windows[i]), task)[o];
      }
      scores.push_back(mae(p, t));
    }
  } else {
    std::vector<int> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      Index k = 0;
      pred.col(static_cast<Index>(i)).maxCoeff(&k);
      p[i] = static_cast<int>(k);
      t[i] = class_label(data.label(windows[i]), task);
    }
    scores.push_back(accuracy(p, t));
    if (confusion_out) *confusion_out = confusion(p, t, static_cast<int>(pred.rows()));
  }
  return scores;
}

MetricsReport run_protocol(const Dataset& data, Task task, Protocol protocol,
                           const EvalOptions& options, std::vector<Model>* models) {
  const auto t0 = std::chrono::steady_clock::now();
  check_labels(data, task);
  const auto splits = protocol_splits(data, protocol, options.folds, options.seed);

  std::vector<std::vector<double>> scores(splits.size());
  std::vector<Eigen::MatrixXi> confusions(splits.size());
  std::vector<Model> trained(splits.size());
  parallel_for(splits.size(), evaluation_threads(options.threads), [&](std::size_t i) {
    const std::uint64_t split_seed = derive_seed(options.seed, 0x5e, fnv1a(splits[i].key));
    trained[i] = train_split(data, splits[i], task, options, split_seed);
    scores[i] = score_windows(trained[i], data, splits[i].validation, &confusions[i]);
  });

  MetricsReport report;
  report.task = task;
  report.protocol = protocol;
  report.features = data.features;
  report.window = data.window;
  const auto names = metric_names(task);
  for (std::size_t m = 0; m < names.size(); ++m) {
    Metric metric;
    metric.name = names[m];
    for (std::size_t i = 0; i < splits.size(); ++i) metric.per_fold.push_back(scores[i][m]);
    const auto ms = mean_std(metric.per_fold);
    metric.mean = ms.mean;
    metric.std = ms.std;
    report.metrics.push_back(std::move(metric));
  }
  for (std::size_t i = 0; i < splits.size(); ++i) {
    report.fold_keys.push_back(splits[i].key);
    if (confusions[i].size() == 0) continue;
    if (report.confusion.size() == 0) {
      report.confusion = confusions[i];
    } else {
      report.confusion += confusions[i];
    }
  }
  if (models) *models = std::move(trained);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

TransferReport run_transfer(const Dataset& data, Task task, const std::string& user,
                            std::span<const std::size_t> sizes, const EvalOptions& options,
                            const Model* base) {
  check_labels(data, task);
  std::map<std::string, std::vector<std::size_t>> by_session;
  DatasetSplit l1uo;
  l1uo.key = user;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data.provenance(i);
    if (p.user == user) {
      by_session[p.session].push_back(i);
    } else {
      l1uo.train.push_back(i);
    }
  }
  if (by_session.empty()) throw DataError("no windows for user '" + user + "'");
  if (by_session.size() < 2) {
    throw DataError("user '" + user + "' needs two sessions for adaptation and evaluation");
  }
  const std::vector<std::size_t> evaluation = std::prev(by_session.end())->second;
  std::vector<std::size_t> pool;
  for (auto it = by_session.begin(); it != std::prev(by_session.end()); ++it) {
    pool.insert(pool.end(), it->second.begin(), it->second.end());
  }
  std::sort(pool.begin(), pool.end());

  Model trained_base;
  if (!base) {
    trained_base = train_split(data, l1uo, task, options,
                               derive_seed(options.seed, 0x5e, fnv1a(user)));
    base = &trained_base;
  }
  if (base->config.task != task) throw DataError("base model was trained for another task");

  TransferReport report;
  report.user = user;
  report.task = task;
  report.metric_names = metric_names(task);
  report.evaluation_windows = evaluation.size();
  const auto baseline = score_windows(*base, data, evaluation);
  for (std::size_t size : sizes) {
    TransferRow row;
    row.size = size;
    row.before = baseline;
    if (size == 0) {
      row.after = baseline;
      report.rows.push_back(std::move(row));
      continue;
    }
    if (pool.size() < size) {
      throw DataError("user '" + user + "' has " + std::to_string(pool.size()) +
                      " adaptation windows, " + std::to_string(size) + " requested");
    }
    std::vector<std::size_t> sample = pool;
    Rng rng(derive_seed(options.seed, 0x7a, fnv1a(user), size));
    shuffle(sample.begin(), sample.end(), rng);
    sample.resize(size);
    std::sort(sample.begin(), sample.end());

    Model adapted = *base;
    TrainOptions t = options.train;
    t.epochs = transfer_defaults().epochs;
    t.seed = derive_seed(options.seed, 0x7b, fnv1a(user), size);
    const DatasetSource source(data, sample, adapted.norm, task);
    transfer_train(adapted, source, t);
    row.after = score_windows(adapted, data, evaluation);
    report.rows.push_back(std::move(row));
  }
  return report;
}

RuntimeTrace simulate_runtime(const Model& model, std::span<const Recording> recordings) {
  RuntimeTrace trace;
  trace.task = model.config.task;
  StreamingPredictor predictor(model);
  for (std::size_t i = 0; i < recordings.size(); ++i) {
    const Recording& r = recordings[i];
    if (validate_recording(r).excluded) continue;
    const PhaseSegment seg = segment_r2g(r);
    int label = -1;
    if (!is_regression(trace.task)) {
      WindowLabel l;
      l.object_id = r.object.class_id();
      if (r.object.is_synthetic()) {
        l.size_id = r.object.size_id();
        l.shape_id = r.object.shape_id();
      }
      label = class_label(l, trace.task);
    }
    predictor.reset();
    const std::size_t last = std::min(seg.grasp_frame + 1, r.frames.size() - 1);
    bool first = true;
    for (std::size_t k = seg.start_frame; k <= last; ++k) {
      auto p = predictor.push(r.frames[k]);
      if (!p) continue;
      const std::size_t offset = k - 1;
      if (offset > seg.grasp_frame) break;
      if (first) {
        trace.first_prediction_frames.push_back(k - seg.start_frame + 1);
        first = false;
      }
      RuntimePoint pt;
      pt.trial = i;
      pt.frame = r.frames[offset].frame_index;
      pt.distance_mm = (r.frames[offset].hand() - seg.object_position).norm();
      pt.time_ms = static_cast<double>(seg.grasp_frame - offset) / r.rate_hz * 1000.0;
      pt.values = std::move(p->values);
      pt.label = label;
      pt.predicted = p->predicted_class;
      trace.points.push_back(std::move(pt));
    }
  }
  return trace;
}

std::string_view to_string(CurveKind k) {
  switch (k) {
    case CurveKind::distance_by_time: return "distance_by_time";
    case CurveKind::time_by_distance: return "time_by_distance";
    case CurveKind::accuracy_by_time: return "accuracy_by_time";
  }
  return "?";
}

std::vector<CurveBin> bin_curve(const RuntimeTrace& trace, CurveKind kind, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("bin width must be positive");
  const Task task = trace.task;
  int distance_row = -1, time_row = -1;
  if (task == Task::distance || task == Task::distance_time) distance_row = 0;
  if (task == Task::time) time_row = 0;
  if (task == Task::distance_time) time_row = 1;
  if ((kind == CurveKind::distance_by_time && distance_row < 0) ||
      (kind == CurveKind::time_by_distance && time_row < 0) ||
      (kind == CurveKind::accuracy_by_time && is_regression(task))) {
    throw DataError("curve " + std::string(to_string(kind)) + " does not apply to task " +
                    std::string(to_string(task)));
  }
  std::vector<double> sum, sq;
  std::vector<std::size_t> count;
  for (const auto& p : trace.points) {
    double key = 0.0, value = 0.0;
    switch (kind) {
      case CurveKind::distance_by_time:
        key = p.time_ms;
        value = std::abs(p.values[distance_row] - p.distance_mm);
        break;
      case CurveKind::time_by_distance:
        key = p.distance_mm;
        value = std::abs(p.values[time_row] - p.time_ms);
        break;
      case CurveKind::accuracy_by_time:
        key = p.time_ms;
        value = p.predicted == p.label ? 100.0 : 0.0;
        break;
    }
    const auto b = static_cast<std::size_t>(std::floor(key / width));
    if (b >= count.size()) {
      sum.resize(b + 1, 0.0);
      sq.resize(b + 1, 0.0);
      count.resize(b + 1, 0);
    }
    sum[b] += value;
    sq[b] += value * value;
    ++count[b];
  }
  std::vector<CurveBin> bins(count.size());
  for (std::size_t b = 0; b < bins.size(); ++b) {
    auto& bin = bins[b];
    bin.lo = static_cast<double>(b) * width;
    bin.hi = static_cast<double>(b + 1) * width;
    bin.count = count[b];
    if (bin.count == 0) continue;
    const double n = static_cast<double>(bin.count);
    bin.mean = sum[b] / n;
    bin.std = std::sqrt(std::max(0.0, sq[b] / n - bin.mean * bin.mean));
  }
  return bins;
}

std::vector<std::pair<CurveKind, std::vector<CurveBin>>> runtime_curves(
    const RuntimeTrace& trace, double time_bin_ms, double distance_bin_mm) {
  std::vector<std::pair<CurveKind, std::vector<CurveBin>>> out;
  const Task t = trace.task;
  if (t == Task::distance || t == Task::distance_time) {
    out.emplace_back(CurveKind::distance_by_time,
                     bin_curve(trace, CurveKind::distance_by_time, time_bin_ms));
  }
  if (t == Task::time || t == Task::distance_time) {
    out.emplace_back(CurveKind::time_by_distance,
                     bin_curve(trace, CurveKind::time_by_distance, distance_bin_mm));
  }
  if (!is_regression(t)) {
    out.emplace_back(CurveKind::accuracy_by_time,
                     bin_curve(trace, CurveKind::accuracy_by_time, time_bin_ms));
  }
  return out;
}

void write_report_csv(const MetricsReport& report, std::ostream& out, bool header) {
  if (header) out << "protocol,task,features,window,fold,metric,value\n";
  const std::string prefix = std::string(to_string(report.protocol)) + "," +
                             std::string(to_string(report.task)) + "," +
                             std::string(to_string(report.features)) + "," +
                             std::to_string(report.window) + ",";
  char buf[64];
  auto row = [&](const std::string& fold, const std::string& metric, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    out << prefix << fold << ',' << metric << ',' << buf << '\n';
  };
  for (const auto& m : report.metrics) {
    for (std::size_t i = 0; i < m.per_fold.size(); ++i) row(report.fold_keys[i], m.name, m.per_fold[i]);
    row("mean", m.name, m.mean);
    row("std", m.name, m.std);
  }
}

void write_curves_jsonl(const std::vector<std::pair<CurveKind, std::vector<CurveBin>>>& curves,
                        std::ostream& out) {
  for (const auto& [kind, bins] : curves) {
    for (const auto& b : bins) {
      nlohmann::json j;
      j["curve"] = to_string(kind);
      j["bin_lo"] = b.lo;
      j["bin_hi"] = b.hi;
      j["mean"] = b.mean;
      j["std"] = b.std;
      j["count"] = b.count;
      j["mean_minus_std"] = b.below();
      out << j.dump() << '\n';
    }
  }
}

}  // namespace reachcast
