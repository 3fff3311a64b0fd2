// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "reachcast/neural.hpp"

namespace reachcast {

namespace {

using Eigen::Index;
using Kind = ModelFormatError::Kind;

constexpr char kMagic[4] = {'G', 'P', 'M', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U u = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void u32(std::size_t v) { le(static_cast<std::uint32_t>(v)); }
  void f64_array(const Eigen::VectorXd& v) {
    u32(static_cast<std::size_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) le(v[i]);
  }
  void u8_array(const std::vector<std::uint8_t>& v) {
    u32(v.size());
    bytes(v.data(), v.size());
  }
  template <class M>
  void f32_matrix(const M& m) {
    u32(static_cast<std::size_t>(m.rows()));
    u32(static_cast<std::size_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) le(static_cast<float>(m(i, j)));
    }
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  template <class T>
  T le() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  Eigen::VectorXd f64_array(const char* what) {
    const std::uint32_t n = u32();
    need(std::size_t{n} * 8, what);
    Eigen::VectorXd v(n);
    for (std::uint32_t i = 0; i < n; ++i) v[i] = le<double>();
    return v;
  }
  std::vector<std::uint8_t> u8_array(const char* what) {
    const std::uint32_t n = u32();
    need(n, what);
    std::vector<std::uint8_t> v(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  void f32_block(Eigen::Ref<Eigen::MatrixXd> dst, const char* name) {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    if (rows != dst.rows() || cols != dst.cols()) {
      throw ModelFormatError(Kind::shape, std::string("array ") + name + " declared " +
                                              std::to_string(rows) + "x" + std::to_string(cols) +
                                              ", config implies " + std::to_string(dst.rows()) +
                                              "x" + std::to_string(dst.cols()));
    }
    need(std::size_t{rows} * cols * 4, name);
    for (Index i = 0; i < dst.rows(); ++i) {
      for (Index j = 0; j < dst.cols(); ++j) dst(i, j) = static_cast<double>(le<float>());
    }
  }
  std::size_t position() const { return pos_; }
  std::size_t size() const { return b_.size(); }

 private:
  void need(std::size_t n, const char* what = "field") const {
    if (n > b_.size() - pos_) {
      throw ModelFormatError(Kind::truncated, std::string("model file ends inside ") + what);
    }
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, b.data(), static_cast<uInt>(b.size())));
}

// The shortest decimal that round-trips the f32 value, read back as f64, so
// 0.2 stored as f32 loads as the double 0.2.
double widen(float f) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), f);
  double d = 0.0;
  std::from_chars(buf, res.ptr, d);
  return d;
}

constexpr const char* kGateNames[4] = {"i", "f", "g", "o"};

}  // namespace

std::vector<std::uint8_t> save_model(const Model& model) {
  const auto& c = model.config;
  c.validate();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::size_t>(c.task));
  w.u32(static_cast<std::size_t>(c.features));
  for (int v : {c.input_dim, c.hidden, c.fc_size, c.outputs, c.window}) w.u32(static_cast<std::size_t>(v));
  w.le(static_cast<float>(c.dropout));

  for (const ChannelStats* s : {&model.norm.features, &model.norm.targets}) {
    w.f64_array(s->mean);
    w.f64_array(s->stddev);
    w.u8_array(s->constant);
  }

  const auto& P = model.params;
  const Index H = c.hidden;
  for (int g = 0; g < 4; ++g) w.f32_matrix(P.lstm.input_weights.middleRows(g * H, H));
  for (int g = 0; g < 4; ++g) w.f32_matrix(P.lstm.recurrent_weights.middleRows(g * H, H));
  for (int g = 0; g < 4; ++g) w.f32_matrix(P.lstm.bias.segment(g * H, H));
  w.f32_matrix(P.head.fc_weights);
  w.f32_matrix(P.head.fc_bias);
  w.f32_matrix(P.head.out_weights);
  w.f32_matrix(P.head.out_bias);

  w.le(model.meta.seed);
  w.u32(model.meta.epochs);
  w.f64_array(Eigen::Map<const Eigen::VectorXd>(model.meta.loss_history.data(),
                                                static_cast<Index>(model.meta.loss_history.size())));
  w.le(crc_of(w.data()));
  return std::move(w.data());
}

Model load_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ModelFormatError(Kind::magic, "not a model file (bad magic)");
  }
  if (bytes.size() < 12) throw ModelFormatError(Kind::checksum, "model file checksum mismatch");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (tail.u32() != crc_of(body)) {
    throw ModelFormatError(Kind::checksum, "model file checksum mismatch");
  }

  Reader r(body);
  r.u32();  // magic, checked above
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw ModelFormatError(Kind::version, "unsupported model file version " + std::to_string(version));
  }
  Model m;
  auto& c = m.config;
  const std::uint32_t task = r.u32();
  const std::uint32_t features = r.u32();
  if (task > static_cast<std::uint32_t>(Task::shape) ||
      features > static_cast<std::uint32_t>(FeatureSet::vh_fp_pp)) {
    throw ModelFormatError(Kind::shape, "unknown task or feature set id");
  }
  c.task = static_cast<Task>(task);
  c.features = static_cast<FeatureSet>(features);
  int* dims[] = {&c.input_dim, &c.hidden, &c.fc_size, &c.outputs, &c.window};
  for (int* d : dims) {
    const std::uint32_t v = r.u32();
    if (v == 0 || v > (1u << 20)) throw ModelFormatError(Kind::shape, "implausible model dimension");
    *d = static_cast<int>(v);
  }
  c.dropout = widen(r.le<float>());
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ModelFormatError(Kind::shape, e.what());
  }
  if (c.input_dim != feature_dim(c.features)) {
    throw ModelFormatError(Kind::shape, "input dimension does not match the feature set");
  }

  for (ChannelStats* s : {&m.norm.features, &m.norm.targets}) {
    s->mean = r.f64_array("normalization means");
    s->stddev = r.f64_array("normalization deviations");
    s->constant = r.u8_array("normalization flags");
    if (s->stddev.size() != s->mean.size() || s->constant.size() != s->size()) {
      throw ModelFormatError(Kind::shape, "normalization arrays disagree in length");
    }
  }
  if (m.norm.features.size() != static_cast<std::size_t>(c.input_dim)) {
    throw ModelFormatError(Kind::shape, "feature statistics do not match the input dimension");
  }
  const std::size_t expected_targets = is_regression(c.task) ? static_cast<std::size_t>(c.outputs) : 0;
  if (m.norm.targets.size() != expected_targets) {
    throw ModelFormatError(Kind::shape, "target statistics do not match the head");
  }

  m.params = Parameters::zeros(c);
  auto& P = m.params;
  const Index H = c.hidden;
  std::string name;
  for (int g = 0; g < 4; ++g) {
    name = std::string("W_") + kGateNames[g];
    r.f32_block(P.lstm.input_weights.middleRows(g * H, H), name.c_str());
  }
  for (int g = 0; g < 4; ++g) {
    name = std::string("U_") + kGateNames[g];
    r.f32_block(P.lstm.recurrent_weights.middleRows(g * H, H), name.c_str());
  }
  for (int g = 0; g < 4; ++g) {
    name = std::string("b_") + kGateNames[g];
    r.f32_block(P.lstm.bias.segment(g * H, H), name.c_str());
  }
  r.f32_block(P.head.fc_weights, "FC_W");
  r.f32_block(P.head.fc_bias, "FC_b");
  r.f32_block(P.head.out_weights, "OUT_W");
  r.f32_block(P.head.out_bias, "OUT_b");

  m.meta.seed = r.le<std::uint64_t>();
  m.meta.epochs = r.u32();
  const Eigen::VectorXd history = r.f64_array("loss history");
  m.meta.loss_history.assign(history.data(), history.data() + history.size());
  if (r.position() != r.size()) {
    throw ModelFormatError(Kind::shape, "trailing bytes after the training metadata");
  }
  return m;
}

void save_model_file(const std::string& path, const Model& model) {
  const auto bytes = save_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing model file '" + path + "'");
}

Model load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return load_model(bytes);
}

}  // namespace reachcast
