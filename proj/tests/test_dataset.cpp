// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "reachcast/dataset.hpp"
#include "reachcast/synthgen.hpp"
#include "support.hpp"

using namespace reachcast;
using reachcast::testing::sample_trial;

namespace {

Sequence fake_sequence(std::size_t n, const std::string& user, ObjectLabel object, Rng& rng,
                       int dim = 16) {
  Sequence s;
  s.provenance = {user, "s1", object.name() + "_1", object, {}};
  s.start_frame = 100;
  s.grasp_frame = 100 + n - 1;
  s.features = Eigen::MatrixXd(dim, static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < s.features.cols(); ++j) {
    for (Eigen::Index d = 0; d < dim; ++d) s.features(d, j) = rng.uniform(-3, 3) * (d + 1);
  }
  for (std::size_t i = 0; i < n; ++i) {
    s.frame_offset.push_back(static_cast<std::int64_t>(s.start_frame + i));
    s.distance_mm.push_back(300.0 * static_cast<double>(n - 1 - i) / static_cast<double>(n));
    s.time_ms.push_back(static_cast<double>(n - 1 - i) / 960.0 * 1000.0);
  }
  return s;
}

std::vector<Sequence> fake_corpus(int users, int objects, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sequence> out;
  const auto labels = ObjectLabel::all(ObjectKind::synthetic);
  for (int u = 0; u < users; ++u) {
    for (int o = 0; o < objects; ++o) {
      char id[8];
      std::snprintf(id, sizeof(id), "u%02d", u + 1);
      out.push_back(fake_sequence(length + rng.below(40), id, labels[static_cast<std::size_t>(o)], rng));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("windows: count, ends and labels") {
  Rng rng(1);
  const Sequence s = fake_sequence(100, "u01", ObjectLabel(Shape::box, SizeClass::small), rng);
  const auto w = make_windows(s, 0, 25, 25);
  REQUIRE(w.size() == 4);
  CHECK(w.back().end == 99);
  CHECK(w[0].end == 24);
  CHECK(label_at(s, 99).time_to_grasp_ms == 0.0);
  const Sequence longer = fake_sequence(400, "u01", ObjectLabel(Shape::box, SizeClass::small), rng);
  CHECK(label_at(longer, 399 - 288).time_to_grasp_ms == doctest::Approx(300.0).epsilon(1e-12));
  CHECK(make_windows(s, 0, 101, 1).empty());
  CHECK(make_windows(s, 0, 25, 1).size() == 76);
}

TEST_CASE("sequence from a recording: labels and bounds") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto trial = sample_trial(seed, ObjectLabel::all(ObjectKind::synthetic)[seed]);
    const Recording& r = trial.recording;
    const PhaseSegment seg = segment_r2g(r);
    const Sequence s = build_sequence(r, seg, FeatureSet::vh_fp);
    REQUIRE(s.size() > 0);
    CHECK(s.features.rows() == 16);
    CHECK(static_cast<std::size_t>(s.features.cols()) == s.size());
    CHECK(static_cast<std::size_t>(s.frame_offset.front()) == seg.start_frame + 26);
    CHECK(static_cast<std::size_t>(s.frame_offset.back()) == seg.grasp_frame);
    for (std::size_t n = 0; n < s.size(); ++n) {
      const auto off = static_cast<std::size_t>(s.frame_offset[n]);
      CHECK(off >= seg.start_frame);
      CHECK(off <= seg.grasp_frame);
      const double d = (r.frames[off].hand() - r.object_position).norm();
      CHECK(s.distance_mm[n] == d);
      CHECK(s.time_ms[n] == doctest::Approx(static_cast<double>(seg.grasp_frame - off) / 960.0 * 1000.0));
      CHECK(s.distance_mm[n] >= 0.0);
      CHECK((s.time_ms[n] == 0.0) == (off == seg.grasp_frame));
    }
    // Time labels fall by stride / rate between consecutive windows.
    const auto w = make_windows(s, 0, 25, 7);
    for (std::size_t i = 1; i < w.size(); ++i) {
      const double step = label_at(s, w[i - 1].end).time_to_grasp_ms - label_at(s, w[i].end).time_to_grasp_ms;
      CHECK(step == doctest::Approx(7.0 / 960.0 * 1000.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("build_sequences reports exclusions") {
  auto a = sample_trial(1);
  auto b = sample_trial(2);
  for (auto& f : b.recording.frames) f.touch[1] = false;
  BuildReport report;
  const std::vector<Recording> recs{a.recording, b.recording};
  const auto seqs = build_sequences(recs, FeatureSet::vh, {}, &report);
  CHECK(seqs.size() == 1);
  CHECK(report.accepted == 1);
  REQUIRE(report.excluded.size() == 1);
  CHECK(report.excluded[0].second == ExclusionReason::missing_touch);
}

TEST_CASE("balance: count lands near the target") {
  // 763 segments of about 700 samples.
  Rng rng(2);
  std::vector<std::size_t> lengths(763);
  for (auto& n : lengths) n = 600 + rng.below(200);
  const auto rep = choose_stride(lengths, 25, 35000);
  CHECK(rep.count >= 33250);
  CHECK(rep.count <= 36750);
  CHECK_FALSE(rep.shortfall);
  CHECK(count_windows(lengths, 25, rep.stride) >= rep.count);

  for (std::size_t target : {500u, 2000u, 8000u, 12345u}) {
    const auto r = choose_stride(lengths, 25, target);
    CHECK(std::abs(static_cast<double>(r.count) - static_cast<double>(target)) <= 0.05 * static_cast<double>(target));
  }
}

TEST_CASE("balance: shortfall and determinism") {
  Rng rng(3);
  std::vector<Sequence> one{fake_sequence(25, "u01", ObjectLabel(Shape::box, SizeClass::small), rng)};
  const Dataset d = balance_windows(one, FeatureSet::vh_fp, 25, 10, 1);
  CHECK(d.size() == 1);
  CHECK(d.balance.shortfall);

  const auto corpus = fake_corpus(4, 3, 200, 5);
  const Dataset a = balance_windows(corpus, FeatureSet::vh_fp, 25, 700, 9);
  const Dataset b = balance_windows(corpus, FeatureSet::vh_fp, 25, 700, 9);
  CHECK(a.windows == b.windows);
  CHECK(std::abs(static_cast<double>(a.size()) - 700.0) <= 35.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& w = a.windows[i];
    CHECK(w.end + 1 >= 25);
    CHECK(w.end < a.sequences[w.sequence].size());
  }
}

TEST_CASE("normalization statistics") {
  Eigen::MatrixXd x(3, 50);
  Rng rng(4);
  for (Eigen::Index j = 0; j < 50; ++j) {
    x(0, j) = rng.uniform(-10, 10);
    x(1, j) = 4.5;
    x(2, j) = 1000 + rng.uniform();
  }
  const auto s = channel_stats(x);
  CHECK(s.constant == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(s.stddev[1] == 1.0);
  for (Eigen::Index j = 0; j < 50; ++j) {
    const Eigen::VectorXd z = s.apply(x.col(j));
    CHECK(z[1] == 0.0);
    CHECK((s.invert(z) - x.col(j)).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (int n = 0; n < 20; ++n) {
    Eigen::VectorXd v(3);
    for (int d = 0; d < 3; ++d) v[d] = rng.uniform(-1e3, 1e3);
    CHECK((s.invert(s.apply(v)) - v).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("normalization over training windows only") {
  const auto corpus = fake_corpus(3, 3, 120, 6);
  const Dataset d = all_windows(corpus, FeatureSet::vh_fp, 25, 10);
  const auto split = split_kfold(d.size(), 4, 1)[0];
  const auto stats = compute_norm_stats(d, split.train, Task::distance_time);

  // Independent pass: every sample of every training window.
  std::vector<Eigen::VectorXd> samples;
  std::vector<Eigen::VectorXd> targets;
  for (auto i : split.train) {
    const auto block = d.window_features(i);
    for (Eigen::Index t = 0; t < block.cols(); ++t) samples.push_back(block.col(t));
    const auto l = d.label(i);
    Eigen::VectorXd y(2);
    y << l.distance_mm, l.time_to_grasp_ms;
    targets.push_back(y);
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(16), sq = Eigen::VectorXd::Zero(16);
  for (const auto& v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  for (const auto& v : samples) sq += (stats.features.apply(v)).cwiseAbs2();
  Eigen::VectorXd zmean = Eigen::VectorXd::Zero(16);
  for (const auto& v : samples) zmean += stats.features.apply(v);
  zmean /= static_cast<double>(samples.size());
  sq /= static_cast<double>(samples.size());
  CHECK((stats.features.mean - mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(zmean.cwiseAbs().maxCoeff() < 1e-9);
  CHECK((sq.array().sqrt() - 1.0).abs().maxCoeff() < 1e-9);

  Eigen::VectorXd tmean = Eigen::VectorXd::Zero(2);
  for (const auto& y : targets) tmean += y;
  tmean /= static_cast<double>(targets.size());
  CHECK((stats.targets.mean - tmean).cwiseAbs().maxCoeff() < 1e-9);

  // Held-out windows do not move the statistics.
  auto modified_corpus = corpus;
  std::set<std::uint32_t> train_seqs;
  for (auto i : split.train) train_seqs.insert(d.windows[i].sequence);
  for (std::uint32_t s = 0; s < modified_corpus.size(); ++s) {
    if (!train_seqs.count(s)) modified_corpus[s].features.array() += 1e6;
  }
  const Dataset d2 = all_windows(modified_corpus, FeatureSet::vh_fp, 25, 10);
  if (train_seqs.size() < corpus.size()) {
    CHECK(compute_norm_stats(d2, split.train, Task::distance_time) == stats);
  }
}

TEST_CASE("k-fold splits") {
  const auto ten = split_kfold(10, 4, 3);
  REQUIRE(ten.size() == 4);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> all;
  for (const auto& s : ten) {
    sizes.push_back(s.validation.size());
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    CHECK(s.train.size() + s.validation.size() == 10);
    std::vector<std::size_t> both = s.train;
    both.insert(both.end(), s.validation.begin(), s.validation.end());
    std::sort(both.begin(), both.end());
    CHECK(std::adjacent_find(both.begin(), both.end()) == both.end());
  }
  CHECK(sizes == std::vector<std::size_t>{3, 3, 2, 2});
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);

  for (const auto& s : split_kfold(35000, 4, 1)) CHECK(s.validation.size() == 8750);
  CHECK(split_kfold(100, 4, 5)[2].validation == split_kfold(100, 4, 5)[2].validation);
  CHECK(split_kfold(100, 4, 5)[0].validation != split_kfold(100, 4, 6)[0].validation);
  CHECK_THROWS(split_kfold(3, 4, 1));
  CHECK_THROWS(split_kfold(10, 1, 1));
}

TEST_CASE("leave-one-group-out splits") {
  const auto corpus = fake_corpus(16, 9, 60, 7);
  const Dataset d = all_windows(corpus, FeatureSet::vh_fp, 25, 10);
  const auto users = split_leave_one_out(d, GroupKey::user);
  CHECK(users.size() == 16);
  const auto objects = split_leave_one_out(d, GroupKey::object);
  CHECK(objects.size() == 9);
  for (const auto key : {GroupKey::user, GroupKey::object}) {
    for (const auto& s : split_leave_one_out(d, key)) {
      CHECK(s.train.size() + s.validation.size() == d.size());
      std::set<std::string> tr, va;
      for (auto i : s.train) tr.insert(group_of(d.provenance(i), key));
      for (auto i : s.validation) va.insert(group_of(d.provenance(i), key));
      CHECK(va.size() == 1);
      CHECK(*va.begin() == s.key);
      CHECK_FALSE(tr.count(s.key));
    }
  }
  CHECK(users.front().key == "u01");
  CHECK(users.back().key == "u16");

  const auto single = fake_corpus(1, 3, 60, 8);
  CHECK_THROWS_AS(split_leave_one_out(all_windows(single, FeatureSet::vh_fp, 25, 10), GroupKey::user),
                  DataError);
}

TEST_CASE("task names and class labels") {
  for (auto t : {Task::distance, Task::time, Task::distance_time, Task::object, Task::size, Task::shape}) {
    CHECK(parse_task(to_string(t)) == t);
  }
  CHECK_THROWS_AS(parse_task("speed"), DataError);
  CHECK(target_count(Task::distance_time) == 2);
  CHECK(class_count(Task::object, ObjectKind::real) == 7);
  CHECK(class_count(Task::object, ObjectKind::synthetic) == 9);
  CHECK(class_count(Task::size, ObjectKind::synthetic) == 3);
  WindowLabel real;
  real.object_id = 2;
  CHECK(class_label(real, Task::object) == 2);
  CHECK_THROWS_AS(class_label(real, Task::size), DataError);
}

TEST_CASE("manifest has one row per window") {
  const auto corpus = fake_corpus(2, 2, 60, 9);
  const Dataset d = all_windows(corpus, FeatureSet::vh_fp, 25, 10);
  std::ostringstream out;
  write_dataset_manifest(d, out);
  const std::string text = out.str();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == d.size() + 1);
}
