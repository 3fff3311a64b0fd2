// SPDX-License-Identifier: Apache-2.0
#include "reachcast/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reachcast/dataset.hpp"
#include "reachcast/evaluation.hpp"
#include "reachcast/features.hpp"
#include "reachcast/neural.hpp"
#include "reachcast/preprocessing.hpp"
#include "reachcast/runtime.hpp"
#include "reachcast/synthgen.hpp"

namespace reachcast {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Every option of the subcommand with its effective value.
void write_config(const CLI::App& sub, const fs::path& dir) {
  std::map<std::string, std::string> values;
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help") continue;
    std::string name = opt->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    values[name] = value;
  }
  std::ofstream out(dir / "config.txt", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "config.txt").string());
  out << "command=" << sub.get_name() << '\n';
  for (const auto& [k, v] : values) out << k << '=' << v << '\n';
}

fs::path prepare_out(const std::string& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  fs::create_directories(dir);
  return dir;
}

std::vector<Recording> load_recordings(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory '" + dir + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv" &&
        e.path().filename() != "manifest.csv") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no recordings in '" + dir + "'");
  std::vector<Recording> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_recording_file(f));
  return out;
}

struct DataOptions {
  std::string data;
  std::string task = "distance_time";
  std::string features = "VH_FP";
  int window = 25;
  std::size_t target_windows = 35000;
  std::uint64_t seed = 0;
  int epochs = 60;
  double lr = 1e-3;
  int batch = 32;
  int hidden = 0;

  void add(CLI::App* sub) {
    sub->add_option("--data", data, "Directory of recordings")->required();
    sub->add_option("--task", task, "distance|time|distance_time|object|size|shape");
    sub->add_option("--features", features, "VH|VH_FP|VH_FP_PP");
    sub->add_option("--window", window, "Window length in samples")->check(CLI::Range(1, 10000));
    sub->add_option("--target-windows", target_windows, "Balanced window count");
    sub->add_option("--seed", seed, "Seed");
    sub->add_option("--epochs", epochs, "Training epochs")->check(CLI::Range(0, 100000));
    sub->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--batch", batch, "Minibatch size")->check(CLI::Range(1, 1 << 20));
    sub->add_option("--hidden", hidden, "LSTM size (0: task default)")->check(CLI::Range(0, 4096));
  }

  Task parsed_task() const {
    try {
      return parse_task(task);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
  }
  FeatureSet parsed_features() const {
    try {
      return parse_feature_set(features);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
  }
  EvalOptions eval() const {
    EvalOptions o;
    o.seed = seed;
    o.train.epochs = epochs;
    o.train.learning_rate = lr;
    o.train.batch_size = batch;
    o.hidden = hidden;
    return o;
  }
  Dataset dataset(const std::vector<Recording>& recs, std::ostream& err) const {
    BuildReport report;
    auto seqs = build_sequences(recs, parsed_features(), {}, &report);
    for (const auto& [trial, reason] : report.excluded) {
      err << "excluded " << trial << ": " << to_string(reason) << '\n';
    }
    if (seqs.empty()) throw DataError("no usable recordings");
    Dataset d = balance_windows(std::move(seqs), parsed_features(), window, target_windows, seed);
    if (d.balance.shortfall) {
      err << "note: " << d.size() << " windows available, fewer than the target "
          << target_windows << '\n';
    }
    return d;
  }
};

std::vector<std::string> class_names(const ModelConfig& c) {
  std::vector<std::string> names;
  switch (c.task) {
    case Task::size:
      for (auto s : {SizeClass::small, SizeClass::medium, SizeClass::large}) names.emplace_back(to_string(s));
      break;
    case Task::shape:
      for (auto s : {Shape::sphere, Shape::box, Shape::cylinder}) names.emplace_back(to_string(s));
      break;
    case Task::object: {
      const auto kind = c.outputs == kRealObjectCount ? ObjectKind::real : ObjectKind::synthetic;
      for (const auto& o : ObjectLabel::all(kind)) names.push_back(o.name());
      break;
    }
    default: break;
  }
  if (names.size() != static_cast<std::size_t>(c.outputs)) {
    names.clear();
    for (int i = 0; i < c.outputs; ++i) names.push_back(std::to_string(i));
  }
  return names;
}

int run_filter(int order, double cutoff, double rate, std::ostream& out) {
  FirFilter f;
  try {
    f = design_lowpass_fir(order, cutoff, rate);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  char buf[64];
  for (double t : f.taps) {
    std::snprintf(buf, sizeof(buf), "%.17g", t);
    out << buf << '\n';
  }
  out << "hz,db\n";
  const int steps = 48;
  for (int i = 0; i <= steps; ++i) {
    const double hz = 0.5 * rate * i / steps;
    out << fmt(hz, 1) << ',' << fmt(f.magnitude_db(hz), 3) << '\n';
  }
  return 0;
}

int run_predict(const std::string& model_path, const std::string& features, std::istream& in,
                std::ostream& out, std::ostream& err) {
  const Model model = load_model_file(model_path);
  if (!features.empty() && parse_feature_set(features) != model.config.features) {
    throw DataError("model expects feature set " + std::string(to_string(model.config.features)) +
                    ", got " + features);
  }
  StreamingPredictor predictor(model);
  const bool regression = is_regression(model.config.task);
  const auto names = class_names(model.config);

  std::string line;
  std::size_t line_no = 0, predictions = 0, skipped = 0;
  double total_ms = 0.0, worst_ms = 0.0;
  std::string row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#' || line.rfind("frame", 0) == 0) continue;
    TrackingFrame frame;
    try {
      frame = parse_frame_row(line, line_no);
    } catch (const DataError& e) {
      err << "warning: skipped " << e.what() << '\n';
      ++skipped;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<RuntimePrediction> p;
    try {
      p = predictor.push(frame);
    } catch (const DataError& e) {
      err << "warning: skipped line " << line_no << ": " << e.what() << '\n';
      ++skipped;
      continue;
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    total_ms += ms;
    worst_ms = std::max(worst_ms, ms);
    if (!p) continue;
    ++predictions;
    row = std::to_string(p->frame_index);
    if (regression) {
      for (Eigen::Index i = 0; i < p->values.size(); ++i) row += "," + fmt(p->values[i]);
    } else {
      row += "," + names[static_cast<std::size_t>(p->predicted_class)];
      row += "," + fmt(100.0 * p->values[p->predicted_class], 2);
      for (Eigen::Index i = 0; i < p->values.size(); ++i) row += "," + fmt(p->values[i], 6);
    }
    out << row << '\n';
  }
  const std::size_t frames = predictor.frames_seen();
  if (predictions == 0) {
    err << "warm-up: " << frames << " frames received, the first prediction needs "
        << predictor.warmup_frames() << '\n';
  }
  err << "frames=" << frames << " predictions=" << predictions << " skipped=" << skipped;
  if (frames > 0) {
    err << " mean_latency_ms=" << fmt(total_ms / static_cast<double>(frames), 4)
        << " max_latency_ms=" << fmt(worst_ms, 4);
  }
  err << '\n';
  return 0;
}

int run_features(const std::string& input, const std::string& features, const std::string& out_dir,
                 std::ostream& out) {
  FeatureSet set;
  try {
    set = parse_feature_set(features);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  const Recording r = read_recording_file(input);
  const auto verdict = validate_recording(r);
  if (verdict.excluded) throw DataError("recording excluded: " + std::string(to_string(verdict.reason)));
  const Sequence seq = build_sequence(r, segment_r2g(r), set);
  std::ofstream file;
  std::ostream* dst = &out;
  if (!out_dir.empty()) {
    const fs::path dir = prepare_out(out_dir);
    file.open(dir / "features.csv", std::ios::binary);
    if (!file) throw DataError("cannot write features.csv");
    dst = &file;
  }
  *dst << "frame,distance_mm,time_ms";
  for (const auto& n : feature_names(set)) *dst << ',' << n;
  *dst << '\n';
  for (std::size_t n = 0; n < seq.size(); ++n) {
    *dst << r.frames[static_cast<std::size_t>(seq.frame_offset[n])].frame_index << ','
         << fmt(seq.distance_mm[n], 4) << ',' << fmt(seq.time_ms[n], 4);
    for (Eigen::Index d = 0; d < seq.features.rows(); ++d) {
      *dst << ',' << fmt(seq.features(d, static_cast<Eigen::Index>(n)), 6);
    }
    *dst << '\n';
  }
  return 0;
}

// Held-out trials for runtime curves under k-fold (which splits windows,
// not trials): every fourth trial in a seeded order.
std::vector<std::pair<CurveKind, std::vector<CurveBin>>> holdout_curves(
    const std::vector<Recording>& recs, const DataOptions& opt, Task task, std::ostream& err) {
  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(opt.seed, 0xc0));
  shuffle(order.begin(), order.end(), rng);
  std::vector<Recording> train_recs, test_recs;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i % 4 == 3 ? test_recs : train_recs).push_back(recs[order[i]]);
  }
  if (test_recs.empty() || train_recs.empty()) return {};
  const Dataset d = opt.dataset(train_recs, err);
  DatasetSplit all;
  all.key = "holdout";
  all.train.resize(d.size());
  std::iota(all.train.begin(), all.train.end(), 0);
  const Model m = train_split(d, all, task, opt.eval(), derive_seed(opt.seed, 0xc1));
  return runtime_curves(simulate_runtime(m, test_recs));
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::istream& in, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Reach-to-grasp distance, time and object prediction", "reachcast"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic recordings");
  GenConfig gen;
  std::string set = "synthetic";
  std::string synth_out;
  synth->add_option("--users", gen.users, "Number of users")->check(CLI::Range(1, 10000));
  synth->add_option("--set", set, "real|synthetic|both");
  synth->add_option("--reps", gen.trials_per_object, "Trials per object")->check(CLI::Range(1, 1000));
  synth->add_option("--seed", gen.seed, "Master seed");
  synth->add_option("--noise", gen.noise_mm, "Tracker noise sigma in mm")->check(CLI::NonNegativeNumber);
  synth->add_option("--dropout", gen.dropout_probability, "Frame dropout probability")
      ->check(CLI::Range(0.0, 0.999999));
  synth->add_option("--distance", gen.distance_mm, "Hand travel in mm")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on all windows");
  DataOptions train_opt;
  std::string train_out;
  train_opt.add(train_cmd);
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Cross-validation or leave-one-group-out evaluation");
  DataOptions eval_opt;
  std::string protocol = "kfold";
  int folds = 4;
  bool curves = true;
  std::string eval_out;
  eval_opt.add(eval_cmd);
  eval_cmd->add_option("--protocol", protocol, "kfold|l1uo|l1so|l1oo");
  eval_cmd->add_option("--folds", folds, "k for kfold")->check(CLI::Range(2, 1000));
  eval_cmd->add_option("--curves", curves, "Write runtime curves");
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();

  // transfer
  auto* transfer_cmd = app.add_subcommand("transfer", "Adapt a model to a held-out user");
  DataOptions transfer_opt;
  std::string user, base_model, transfer_out;
  std::vector<std::size_t> sizes{50, 150, 250};
  transfer_opt.add(transfer_cmd);
  transfer_cmd->add_option("--user", user, "Held-out user id")->required();
  transfer_cmd->add_option("--sizes", sizes, "Adaptation window counts")->delimiter(',');
  transfer_cmd->add_option("--model", base_model, "Base model trained without the user");
  transfer_cmd->add_option("--out", transfer_out, "Output directory")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Stream frames from stdin, one prediction per frame");
  std::string model_path, predict_features;
  predict_cmd->add_option("--model", model_path, "Model file")->required();
  predict_cmd->add_option("--features", predict_features, "Expected feature set");

  // features
  auto* features_cmd = app.add_subcommand("features", "Print the feature stream of a recording");
  std::string feat_input, feat_set = "VH_FP", feat_out;
  features_cmd->add_option("--input", feat_input, "Recording file")->required();
  features_cmd->add_option("--features", feat_set, "VH|VH_FP|VH_FP_PP");
  features_cmd->add_option("--out", feat_out, "Output directory (default: stdout)");

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Print FIR taps and magnitude response");
  int order = 25;
  double cutoff = 25.0, rate = kTrackerRateHz;
  filter_cmd->add_option("--order", order, "Filter order");
  filter_cmd->add_option("--cutoff", cutoff, "Cut-off in Hz");
  filter_cmd->add_option("--rate", rate, "Sample rate in Hz");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*synth) {
      gen.objects = parse_object_set(set);
      const fs::path dir = prepare_out(synth_out);
      const Corpus corpus = generate_corpus(gen);
      write_corpus(corpus, dir);
      write_config(*synth, dir);
      out << corpus.trials.size() << " recordings written to " << dir.string() << '\n';
      return 0;
    }
    if (*train_cmd) {
      const Task task = train_opt.parsed_task();
      const fs::path dir = prepare_out(train_out);
      const auto recs = load_recordings(train_opt.data);
      const Dataset d = train_opt.dataset(recs, err);
      DatasetSplit all;
      all.key = "all";
      all.train.resize(d.size());
      std::iota(all.train.begin(), all.train.end(), 0);
      const Model m = train_split(d, all, task, train_opt.eval(), train_opt.seed);
      save_model_file((dir / "model.gpm").string(), m);
      std::ofstream loss(dir / "loss.csv", std::ios::binary);
      loss << "epoch,loss\n";
      for (std::size_t e = 0; e < m.meta.loss_history.size(); ++e) {
        loss << e + 1 << ',' << fmt(m.meta.loss_history[e], 6) << '\n';
      }
      std::ofstream manifest(dir / "windows.csv", std::ios::binary);
      write_dataset_manifest(d, manifest);
      write_config(*train_cmd, dir);
      out << "trained on " << d.size() << " windows, final loss "
          << fmt(m.meta.loss_history.empty() ? 0.0 : m.meta.loss_history.back(), 6) << '\n';
      return 0;
    }
    if (*eval_cmd) {
      const Task task = eval_opt.parsed_task();
      Protocol p;
      try {
        p = parse_protocol(protocol);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const fs::path dir = prepare_out(eval_out);
      const auto recs = load_recordings(eval_opt.data);
      const Dataset d = eval_opt.dataset(recs, err);
      EvalOptions o = eval_opt.eval();
      o.folds = folds;
      std::vector<Model> models;
      const MetricsReport report = run_protocol(d, task, p, o, &models);
      std::ofstream csv(dir / "report.csv", std::ios::binary);
      write_report_csv(report, csv);
      if (curves) {
        std::vector<std::pair<CurveKind, std::vector<CurveBin>>> c;
        if (p == Protocol::kfold) {
          c = holdout_curves(recs, eval_opt, task, err);
        } else {
          // Each group's model streams that group's recordings.
          const auto splits = protocol_splits(d, p, folds, o.seed);
          const GroupKey key = p == Protocol::l1uo ? GroupKey::user
                               : p == Protocol::l1so ? GroupKey::session : GroupKey::object;
          RuntimeTrace merged;
          merged.task = task;
          for (std::size_t i = 0; i < splits.size(); ++i) {
            std::vector<Recording> held;
            for (const auto& r : recs) {
              const Provenance prov{r.user_id, r.session_id, r.trial_id, r.object, {}};
              if (group_of(prov, key) == splits[i].key) held.push_back(r);
            }
            auto t = simulate_runtime(models[i], held);
            for (auto& pt : t.points) merged.points.push_back(std::move(pt));
          }
          c = runtime_curves(merged);
        }
        std::ofstream jsonl(dir / "curves.jsonl", std::ios::binary);
        write_curves_jsonl(c, jsonl);
      }
      write_config(*eval_cmd, dir);
      for (const auto& m : report.metrics) {
        out << m.name << " mean=" << fmt(m.mean) << " std=" << fmt(m.std) << '\n';
      }
      return 0;
    }
    if (*transfer_cmd) {
      const Task task = transfer_opt.parsed_task();
      const fs::path dir = prepare_out(transfer_out);
      const auto recs = load_recordings(transfer_opt.data);
      const Dataset d = transfer_opt.dataset(recs, err);
      std::optional<Model> base;
      if (!base_model.empty()) base = load_model_file(base_model);
      std::vector<std::size_t> all_sizes{0};
      for (auto s : sizes) {
        if (s == 0) throw UsageError("adaptation sizes must be positive");
        all_sizes.push_back(s);
      }
      const TransferReport report =
          run_transfer(d, task, user, all_sizes, transfer_opt.eval(), base ? &*base : nullptr);
      std::ofstream csv(dir / "transfer.csv", std::ios::binary);
      csv << "user,size,metric,before,after\n";
      for (const auto& row : report.rows) {
        for (std::size_t m = 0; m < report.metric_names.size(); ++m) {
          csv << report.user << ',' << row.size << ',' << report.metric_names[m] << ','
              << fmt(row.before[m], 6) << ',' << fmt(row.after[m], 6) << '\n';
          if (row.size > 0) {
            out << "size " << row.size << ' ' << report.metric_names[m] << ' '
                << fmt(row.before[m]) << " -> " << fmt(row.after[m]) << '\n';
          }
        }
      }
      write_config(*transfer_cmd, dir);
      return 0;
    }
    if (*predict_cmd) return run_predict(model_path, predict_features, in, out, err);
    if (*features_cmd) return run_features(feat_input, feat_set, feat_out, out);
    if (*filter_cmd) return run_filter(order, cutoff, rate, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace reachcast
