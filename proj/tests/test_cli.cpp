// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "reachcast/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args, const std::string& input = {}) {
  args.insert(args.begin(), "reachcast");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  Run r;
  r.code = reachcast::dispatch(static_cast<int>(argv.size()), argv.data(), in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("reachcast_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

// Recording rows without the header.
std::string body(const fs::path& csv) {
  const auto all = lines(slurp(csv));
  std::string out;
  for (std::size_t i = 1; i < all.size(); ++i) out += all[i] + "\n";
  return out;
}

std::map<std::string, std::vector<std::string>> manifest(const fs::path& dir) {
  const auto rows = lines(slurp(dir / "manifest.csv"));
  std::map<std::string, std::vector<std::string>> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split(rows[i]);
    out[cells[0]] = cells;
  }
  return out;
}

std::size_t column(const fs::path& dir, const std::string& name) {
  const auto head = split(lines(slurp(dir / "manifest.csv")).at(0));
  for (std::size_t i = 0; i < head.size(); ++i) {
    if (head[i] == name) return i;
  }
  FAIL("missing manifest column " << name);
  return 0;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == 1);
  CHECK(run({"nonsense"}).code == 1);
  const auto bad = run({"filter", "--order", "25", "--bogus", "1"});
  CHECK(bad.code == 1);
  CHECK_FALSE(bad.err.empty());
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"synth", "--users", "2"}).code == 1);  // --out is required
  CHECK(run({"synth", "--noise", "-1", "--out", scratch("neg").string()}).code == 1);
  CHECK(run({"train", "--data", "x", "--task", "walking", "--out", scratch("t").string()}).code == 1);
}

TEST_CASE("filter prints taps and response") {
  const auto r = run({"filter", "--order", "25", "--cutoff", "25", "--rate", "960"});
  REQUIRE(r.code == 0);
  const auto out = lines(r.out);
  std::size_t header = 0;
  while (header < out.size() && out[header] != "hz,db") ++header;
  CHECK(header == 26);
  double sum = 0;
  for (std::size_t i = 0; i < 26; ++i) sum += std::stod(out[i]);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(out.size() > header + 1);
  CHECK(out[header + 1] == "0.0,0.000");
}

TEST_CASE("synth writes the corpus and its config") {
  const auto dir = scratch("synth");
  const auto r = run({"synth", "--users", "2", "--set", "synthetic", "--reps", "1", "--seed", "7", "--out", dir.string()});
  REQUIRE(r.code == 0);
  std::size_t csv = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv" && e.path().filename() != "manifest.csv") ++csv;
  }
  CHECK(csv == 18);
  CHECK(fs::exists(dir / "manifest.csv"));
  const std::string config = slurp(dir / "config.txt");
  CHECK(config.find("command=synth\n") == 0);
  CHECK(config.find("seed=7\n") != std::string::npos);
  CHECK(config.find("users=2\n") != std::string::npos);
  CHECK(config.find("noise=") != std::string::npos);

  const auto again = scratch("synth_again");
  REQUIRE(run({"synth", "--users", "2", "--reps", "1", "--seed", "7", "--out", again.string()}).code == 0);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    CHECK(slurp(e.path()) == slurp(again / e.path().filename()));
  }
}

TEST_CASE("data errors exit with 2") {
  const auto empty = scratch("empty");
  fs::create_directories(empty);
  CHECK(run({"train", "--data", empty.string(), "--out", scratch("e_out").string()}).code == 2);

  const auto junk = scratch("junk");
  fs::create_directories(junk);
  std::ofstream(junk / "a.csv") << "this is not a recording\n";
  CHECK(run({"features", "--input", (junk / "a.csv").string()}).code == 2);
  CHECK(run({"predict", "--model", (junk / "a.csv").string()}).code == 2);
}

namespace {

// One trained model shared by the end-to-end cases.
struct Trained {
  fs::path data;
  fs::path dir;
  std::string model;
  int code = -1;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    r.data = scratch("e2e_data");
    r.dir = scratch("e2e_model");
    if (run({"synth", "--users", "4", "--reps", "2", "--seed", "7", "--out", r.data.string()}).code != 0) return r;
    r.code = run({"train", "--data", r.data.string(), "--task", "time", "--target-windows", "4000", "--epochs",
                  "30", "--hidden", "32", "--out", r.dir.string()})
                 .code;
    r.model = (r.dir / "model.gpm").string();
    return r;
  }();
  return t;
}

}  // namespace

TEST_CASE("train, predict and features end to end") {
  const auto& t = trained();
  REQUIRE(t.code == 0);
  const auto& data = t.data;
  const auto& model_dir = t.dir;
  const std::string& model = t.model;
  for (const char* f : {"model.gpm", "loss.csv", "windows.csv", "config.txt"}) CHECK(fs::exists(model_dir / f));
  CHECK(lines(slurp(model_dir / "loss.csv")).size() == 31);
  const std::string config = slurp(model_dir / "config.txt");
  CHECK(config.find("command=train\n") == 0);
  CHECK(config.find("epochs=30\n") != std::string::npos);
  CHECK(config.find("window=25\n") != std::string::npos);

  SUBCASE("warm-up") {
    const auto rows = lines(body(data / "u01_s1_box_medium.csv"));
    std::string first;
    for (int i = 0; i < 24; ++i) first += rows[static_cast<std::size_t>(i)] + "\n";
    const auto r = run({"predict", "--model", model}, first);
    CHECK(r.code == 0);
    CHECK(r.out.empty());
    CHECK(r.err.find("warm-up") != std::string::npos);
  }

  SUBCASE("replay is deterministic and skips bad rows") {
    std::string input = body(data / "u02_s1_cylinder_large.csv");
    const auto a = run({"predict", "--model", model}, input);
    const auto b = run({"predict", "--model", model}, input);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK_FALSE(a.out.empty());
    const auto pos = input.find('\n', input.size() / 2);
    input.insert(pos + 1, "1,2,3\n");
    const auto c = run({"predict", "--model", model}, input);
    CHECK(c.code == 0);
    CHECK(c.err.find("skipped") != std::string::npos);
    CHECK(run({"predict", "--model", model, "--features", "VH"}, input).code == 2);
  }

  SUBCASE("time to grasp falls as the hand approaches") {
    // A user the model never saw.
    const auto held = scratch("e2e_held");
    REQUIRE(run({"synth", "--users", "1", "--reps", "1", "--seed", "99", "--out", held.string()}).code == 0);
    const auto start_col = column(held, "start_frame");
    const auto grasp_col = column(held, "grasp_frame");
    std::size_t pairs = 0, falling = 0;
    for (const auto& [file, row] : manifest(held)) {
      const long start = std::stol(row[start_col]);
      const long grasp = std::stol(row[grasp_col]);
      const auto r = run({"predict", "--model", model}, body(held / file));
      REQUIRE(r.code == 0);
      bool have = false;
      double prev = 0;
      for (const auto& l : lines(r.out)) {
        const auto cells = split(l);
        REQUIRE(cells.size() == 2);
        const long frame = std::stol(cells[0]);
        // From the first window that lies entirely inside the reach.
        if (frame < start + 52 || frame > grasp) continue;
        const double t = std::stod(cells[1]);
        if (have) {
          ++pairs;
          if (t < prev) ++falling;
        }
        prev = t;
        have = true;
      }
    }
    REQUIRE(pairs > 3000);
    INFO("falling " << falling << " of " << pairs);
    CHECK(static_cast<double>(falling) >= 0.95 * static_cast<double>(pairs));
  }

  SUBCASE("features command") {
    const auto r = run({"features", "--input", (data / "u01_s1_box_medium.csv").string(), "--features", "VH"});
    REQUIRE(r.code == 0);
    const auto out = lines(r.out);
    CHECK(out.at(0) == "frame,distance_mm,time_ms,v_h");
    CHECK(out.size() > 100);
  }
}
