// SPDX-License-Identifier: Apache-2.0
#include "reachcast/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace reachcast {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

template <class Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return (1.0 + (-x).exp()).inverse();
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void ModelConfig::validate() const {
  require(input_dim > 0 && hidden > 0 && fc_size > 0 && outputs > 0 && window > 0,
          "model dimensions must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout rate must be in [0, 1)");
  if (is_regression(task)) {
    require(outputs == target_count(task), "regression head size does not match task");
  } else {
    require(outputs >= 2, "softmax head needs at least two classes");
  }
}

ModelConfig default_config(Task task, FeatureSet features, int window, ObjectKind kind) {
  ModelConfig c;
  c.task = task;
  c.features = features;
  c.input_dim = feature_dim(features);
  c.hidden = is_regression(task) ? 64 : 128;
  c.fc_size = 16;
  c.outputs = is_regression(task) ? target_count(task) : class_count(task, kind);
  c.window = window;
  c.dropout = 0.2;
  return c;
}

Parameters Parameters::zeros(const ModelConfig& c) {
  const Index D = c.input_dim, H = c.hidden, F = c.fc_size, O = c.outputs;
  Parameters p;
  p.lstm.input_weights = MatrixXd::Zero(4 * H, D);
  p.lstm.recurrent_weights = MatrixXd::Zero(4 * H, H);
  p.lstm.bias = VectorXd::Zero(4 * H);
  p.head.fc_weights = MatrixXd::Zero(F, H);
  p.head.fc_bias = VectorXd::Zero(F);
  p.head.out_weights = MatrixXd::Zero(O, F);
  p.head.out_bias = VectorXd::Zero(O);
  return p;
}

namespace {
template <class M>
std::span<double> as_span(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <class M>
std::span<const double> as_cspan(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
}  // namespace

std::array<std::span<double>, Parameters::kArrayCount> Parameters::arrays() {
  return {as_span(lstm.input_weights), as_span(lstm.recurrent_weights), as_span(lstm.bias),
          as_span(head.fc_weights),    as_span(head.fc_bias),           as_span(head.out_weights),
          as_span(head.out_bias)};
}

std::array<std::span<const double>, Parameters::kArrayCount> Parameters::arrays() const {
  return {as_cspan(lstm.input_weights), as_cspan(lstm.recurrent_weights), as_cspan(lstm.bias),
          as_cspan(head.fc_weights),    as_cspan(head.fc_bias),
          as_cspan(head.out_weights),   as_cspan(head.out_bias)};
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (auto a : arrays()) n += a.size();
  return n;
}

double Parameters::squared_norm() const {
  double s = 0.0;
  for (auto a : arrays()) {
    for (double x : a) s += x * x;
  }
  return s;
}

bool Parameters::all_finite() const {
  for (auto a : arrays()) {
    for (double x : a) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

bool operator==(const Parameters& a, const Parameters& b) {
  auto sa = a.arrays();
  auto sb = b.arrays();
  for (std::size_t i = 0; i < Parameters::kArrayCount; ++i) {
    if (!std::equal(sa[i].begin(), sa[i].end(), sb[i].begin(), sb[i].end())) return false;
  }
  return true;
}

std::size_t count_parameters(const ModelConfig& c) {
  const std::size_t D = c.input_dim, H = c.hidden, F = c.fc_size, O = c.outputs;
  return 4 * (H * D + H * H + H) + (F * H + F) + (O * F + O);
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  m.params = Parameters::zeros(config);
  m.meta.seed = seed;
  Rng rng(derive_seed(seed, 0x1417));
  auto fill = [&rng](MatrixXd& w, double fan_in) {
    const double r = std::sqrt(1.0 / fan_in);
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-r, r);
    }
  };
  const int H = config.hidden;
  // Gate pre-activations see x and h together.
  fill(m.params.lstm.input_weights, config.input_dim + H);
  fill(m.params.lstm.recurrent_weights, config.input_dim + H);
  m.params.lstm.bias.segment(H, H).setOnes();
  fill(m.params.head.fc_weights, H);
  fill(m.params.head.out_weights, config.fc_size);
  return m;
}

MatrixXd lstm_forward(const LstmParams& p, const StepBatch& steps, LstmCache* cache) {
  const Index H = p.recurrent_weights.cols();
  const Index D = p.input_weights.cols();
  if (steps.empty()) throw std::invalid_argument("lstm_forward: empty sequence");
  if (p.input_weights.rows() != 4 * H || p.recurrent_weights.rows() != 4 * H ||
      p.bias.size() != 4 * H) {
    throw std::invalid_argument("lstm_forward: inconsistent parameter shapes");
  }
  const Index B = steps.front().cols();
  for (const auto& x : steps) {
    if (x.rows() != D || x.cols() != B) throw std::invalid_argument("lstm_forward: input shape");
  }
  const std::size_t L = steps.size();
  if (cache) {
    cache->inputs.resize(L);
    cache->gates.resize(L);
    cache->cells.resize(L);
    cache->cell_tanh.resize(L);
    cache->hidden.resize(L);
  }

  MatrixXd h = MatrixXd::Zero(H, B);
  MatrixXd c = MatrixXd::Zero(H, B);
  MatrixXd z(4 * H, B);
  MatrixXd tc(H, B);
  for (std::size_t t = 0; t < L; ++t) {
    z.noalias() = p.input_weights * steps[t];
    if (t > 0) z.noalias() += p.recurrent_weights * h;
    z.colwise() += p.bias;
    z.topRows(2 * H) = sigmoid(z.topRows(2 * H).array()).matrix();
    z.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
    z.bottomRows(H) = sigmoid(z.bottomRows(H).array()).matrix();

    c.array() = z.middleRows(H, H).array() * c.array() +
                z.topRows(H).array() * z.middleRows(2 * H, H).array();
    tc.array() = c.array().tanh();
    h.array() = z.bottomRows(H).array() * tc.array();
    if (cache) {
      cache->inputs[t] = steps[t];
      cache->gates[t] = z;
      cache->cells[t] = c;
      cache->cell_tanh[t] = tc;
      cache->hidden[t] = h;
    }
  }
  return h;
}

VectorXd lstm_forward(const LstmParams& p, const MatrixXd& sequence) {
  StepBatch steps(static_cast<std::size_t>(sequence.rows()));
  for (Index t = 0; t < sequence.rows(); ++t) steps[t] = sequence.row(t).transpose();
  return lstm_forward(p, steps);
}

MatrixXd softmax(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    out.col(j) = (logits.col(j).array() - m).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

MatrixXd forward(const Model& model, const StepBatch& steps, Mode mode, Rng* dropout_rng,
                 ForwardCache* cache) {
  const auto& cfg = model.config;
  const auto& P = model.params;
  if (steps.size() != static_cast<std::size_t>(cfg.window)) {
    throw std::invalid_argument("forward: window length does not match the model");
  }
  if (steps.front().rows() != cfg.input_dim) {
    throw std::invalid_argument("forward: feature dimension does not match the model");
  }
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  const MatrixXd h = lstm_forward(P.lstm, steps, cache ? &fc.lstm : nullptr);
  const Index B = h.cols();
  fc.batch = static_cast<std::size_t>(B);

  if (mode == Mode::train && cfg.dropout > 0.0) {
    if (!dropout_rng) throw std::invalid_argument("forward: train mode needs a dropout rng");
    const double keep = 1.0 - cfg.dropout;
    fc.mask.resize(h.rows(), B);
    for (Index j = 0; j < B; ++j) {
      for (Index i = 0; i < h.rows(); ++i) {
        fc.mask(i, j) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
    }
    fc.dropped = h.cwiseProduct(fc.mask);
  } else {
    fc.mask = MatrixXd::Ones(h.rows(), B);
    fc.dropped = h;
  }

  fc.fc_pre.noalias() = P.head.fc_weights * fc.dropped;
  fc.fc_pre.colwise() += P.head.fc_bias;
  fc.fc_act = fc.fc_pre.cwiseMax(0.0);
  MatrixXd out = P.head.out_weights * fc.fc_act;
  out.colwise() += P.head.out_bias;
  if (cfg.head() == HeadKind::softmax) out = softmax(out);
  fc.output = out;
  return out;
}

VectorXd predict(const Model& model, const MatrixXd& window) {
  StepBatch steps(static_cast<std::size_t>(window.rows()));
  for (Index t = 0; t < window.rows(); ++t) steps[t] = window.row(t).transpose();
  return forward(model, steps, Mode::infer).col(0);
}

double loss_rmse(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.size() == 0) {
    throw std::invalid_argument("loss_rmse: shape mismatch");
  }
  return std::sqrt((pred - target).squaredNorm() / static_cast<double>(pred.size()));
}

double loss_xent(const MatrixXd& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.cols()) != labels.size() || labels.empty()) {
    throw std::invalid_argument("loss_xent: shape mismatch");
  }
  double sum = 0.0;
  for (Index j = 0; j < probs.cols(); ++j) {
    const auto col = probs.col(j);
    if (col.minCoeff() < 0.0 || std::abs(col.sum() - 1.0) > 1e-9) {
      throw std::invalid_argument("loss_xent: column is not a probability vector");
    }
    const int y = labels[j];
    if (y < 0 || y >= probs.rows()) throw std::invalid_argument("loss_xent: label out of range");
    sum -= std::log(std::max(col(y), 1e-300));
  }
  return sum / static_cast<double>(probs.cols());
}

namespace {

void zero_like(Gradients& g, const Parameters& p) {
  g.lstm.input_weights.setZero(p.lstm.input_weights.rows(), p.lstm.input_weights.cols());
  g.lstm.recurrent_weights.setZero(p.lstm.recurrent_weights.rows(),
                                   p.lstm.recurrent_weights.cols());
  g.lstm.bias.setZero(p.lstm.bias.size());
  g.head.fc_weights.setZero(p.head.fc_weights.rows(), p.head.fc_weights.cols());
  g.head.fc_bias.setZero(p.head.fc_bias.size());
  g.head.out_weights.setZero(p.head.out_weights.rows(), p.head.out_weights.cols());
  g.head.out_bias.setZero(p.head.out_bias.size());
}

}  // namespace

double backward(const Model& model, const ForwardCache& cache, const Targets& targets,
                double l2, Gradients& grads) {
  const auto& cfg = model.config;
  const auto& P = model.params;
  const auto& lc = cache.lstm;
  const Index B = static_cast<Index>(cache.batch);
  const Index H = cfg.hidden;
  const std::size_t L = lc.gates.size();
  if (B == 0 || L != static_cast<std::size_t>(cfg.window) || cache.output.cols() != B ||
      lc.hidden.size() != L || lc.hidden.back().cols() != B || lc.hidden.back().rows() != H) {
    throw std::logic_error("backward: cache does not belong to this model and batch");
  }
  zero_like(grads, P);

  MatrixXd dy;
  double loss = 0.0;
  if (cfg.head() == HeadKind::linear) {
    if (targets.values.rows() != cfg.outputs || targets.values.cols() != B) {
      throw std::logic_error("backward: regression targets do not match the cached batch");
    }
    loss = loss_rmse(cache.output, targets.values);
    const double n = static_cast<double>(cache.output.size());
    if (loss > 0.0) {
      dy = (cache.output - targets.values) / (n * loss);
    } else {
      dy = MatrixXd::Zero(cache.output.rows(), B);
    }
  } else {
    if (targets.labels.size() != static_cast<std::size_t>(B)) {
      throw std::logic_error("backward: labels do not match the cached batch");
    }
    loss = loss_xent(cache.output, targets.labels);
    dy = cache.output;
    for (Index j = 0; j < B; ++j) dy(targets.labels[j], j) -= 1.0;
    dy /= static_cast<double>(B);
  }

  // Head.
  grads.head.out_weights.noalias() = dy * cache.fc_act.transpose();
  grads.head.out_bias = dy.rowwise().sum();
  MatrixXd da = P.head.out_weights.transpose() * dy;
  da.array() *= (cache.fc_pre.array() > 0.0).cast<double>();
  grads.head.fc_weights.noalias() = da * cache.dropped.transpose();
  grads.head.fc_bias = da.rowwise().sum();
  MatrixXd dh = (P.head.fc_weights.transpose() * da).cwiseProduct(cache.mask);

  // Recurrence, newest step first.
  MatrixXd dc = MatrixXd::Zero(H, B);
  MatrixXd dz(4 * H, B);
  auto& dW = grads.lstm.input_weights;
  auto& dU = grads.lstm.recurrent_weights;
  auto& db = grads.lstm.bias;
  for (std::size_t k = L; k-- > 0;) {
    const auto& g = lc.gates[k];
    const auto i = g.topRows(H).array();
    const auto f = g.middleRows(H, H).array();
    const auto gg = g.middleRows(2 * H, H).array();
    const auto o = g.bottomRows(H).array();
    const auto tc = lc.cell_tanh[k].array();

    dz.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dc.array() += dh.array() * o * (1.0 - tc.square());
    dz.topRows(H) = (dc.array() * gg * i * (1.0 - i)).matrix();
    dz.middleRows(2 * H, H) = (dc.array() * i * (1.0 - gg.square())).matrix();
    if (k > 0) {
      dz.middleRows(H, H) = (dc.array() * lc.cells[k - 1].array() * f * (1.0 - f)).matrix();
    } else {
      dz.middleRows(H, H).setZero();
    }

    dW.noalias() += dz * lc.inputs[k].transpose();
    db += dz.rowwise().sum();
    if (k > 0) {
      dU.noalias() += dz * lc.hidden[k - 1].transpose();
      dh.noalias() = P.lstm.recurrent_weights.transpose() * dz;
      dc.array() *= f;
    }
  }

  if (l2 != 0.0) {
    auto ga = grads.arrays();
    auto pa = P.arrays();
    for (std::size_t a = 0; a < Parameters::kArrayCount; ++a) {
      for (std::size_t j = 0; j < ga[a].size(); ++j) ga[a][j] += 2.0 * l2 * pa[a][j];
    }
  }
  return loss;
}

double global_norm(const Gradients& g) { return std::sqrt(g.squared_norm()); }

double clip_gradients(Gradients& g, double threshold) {
  const double norm = global_norm(g);
  if (norm > threshold) {
    const double s = threshold / norm;
    for (auto a : g.arrays()) {
      for (double& x : a) x *= s;
    }
  }
  return norm;
}

AdamState AdamState::for_params(const Parameters& p) {
  AdamState s;
  zero_like(s.first, p);
  zero_like(s.second, p);
  return s;
}

void adam_step(Parameters& params, const Gradients& grads, AdamState& state, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  auto pa = params.arrays();
  auto ga = grads.arrays();
  auto ma = state.first.arrays();
  auto va = state.second.arrays();
  for (std::size_t a = 0; a < Parameters::kArrayCount; ++a) {
    if (pa[a].size() != ga[a].size() || pa[a].size() != ma[a].size()) {
      throw std::invalid_argument("adam_step: state shape mismatch");
    }
    for (std::size_t j = 0; j < pa[a].size(); ++j) {
      const double g = ga[a][j];
      double& m = ma[a][j];
      double& v = va[a][j];
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      pa[a][j] -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
    }
  }
}

DatasetSource::DatasetSource(const Dataset& data, std::vector<std::size_t> windows,
                             const NormalizationStats& stats, Task task)
    : data_(data), windows_(std::move(windows)), stats_(stats), task_(task) {
  if (stats_.features.size() != static_cast<std::size_t>(data_.dim())) {
    throw std::invalid_argument("normalization stats do not match the feature set");
  }
}

void DatasetSource::gather(std::span<const std::size_t> ids, StepBatch& steps,
                           Targets& targets) const {
  const Index B = static_cast<Index>(ids.size());
  const Index D = data_.dim();
  const std::size_t L = static_cast<std::size_t>(data_.window);
  steps.resize(L);
  for (auto& s : steps) s.resize(D, B);
  const bool regression = is_regression(task_);
  if (regression) {
    targets.values.resize(target_count(task_), B);
  } else {
    targets.labels.resize(ids.size());
  }
  for (Index b = 0; b < B; ++b) {
    const std::size_t w = windows_[ids[b]];
    const auto block = data_.window_features(w);
    for (std::size_t t = 0; t < L; ++t) {
      steps[t].col(b) = stats_.features.apply(block.col(static_cast<Index>(t)));
    }
    const WindowLabel label = data_.label(w);
    if (regression) {
      targets.values.col(b) = stats_.targets.apply(regression_targets(label, task_));
    } else {
      targets.labels[b] = class_label(label, task_);
    }
  }
}

namespace {

void round_to_storage(Parameters& p) {
  for (auto a : p.arrays()) {
    for (double& x : a) x = static_cast<double>(static_cast<float>(x));
  }
}

void run_epochs(Model& model, const ExampleSource& data, const TrainOptions& o) {
  if (data.size() == 0) throw DataError("training set is empty");
  if (o.epochs < 0 || o.batch_size < 1 || !(o.learning_rate > 0.0)) {
    throw std::invalid_argument("invalid training options");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng(derive_seed(o.seed, 0x5u));
  shuffle(order.begin(), order.end(), order_rng);
  Rng dropout_rng(derive_seed(o.seed, 0xd0u));

  AdamState state = AdamState::for_params(model.params);
  Gradients grads;
  ForwardCache cache;
  StepBatch steps;
  Targets targets;
  const std::size_t bs = static_cast<std::size_t>(o.batch_size);
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const std::size_t> ids(order.data() + start, std::min(bs, n - start));
      data.gather(ids, steps, targets);
      forward(model, steps, Mode::train, &dropout_rng, &cache);
      const double loss = backward(model, cache, targets, o.l2, grads);
      clip_gradients(grads, o.clip_threshold);
      adam_step(model.params, grads, state, o.learning_rate);
      total += loss * static_cast<double>(ids.size());
    }
    model.meta.loss_history.push_back(total / static_cast<double>(n));
    ++model.meta.epochs;
  }
  // Weights are stored as f32; keep the in-memory model equal to its file.
  round_to_storage(model.params);
}

}  // namespace

void train(Model& model, const ExampleSource& data, const TrainOptions& options) {
  model.meta.seed = options.seed;
  run_epochs(model, data, options);
}

void transfer_train(Model& model, const ExampleSource& data, TrainOptions options) {
  if (data.size() == 0) throw DataError("adaptation set is empty");
  run_epochs(model, data, options);
}

MatrixXd predict_all(const Model& model, const ExampleSource& data, std::size_t batch) {
  const std::size_t n = data.size();
  MatrixXd out(model.config.outputs, static_cast<Index>(n));
  std::vector<std::size_t> ids;
  StepBatch steps;
  Targets targets;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t m = std::min(batch, n - start);
    ids.resize(m);
    std::iota(ids.begin(), ids.end(), start);
    data.gather(ids, steps, targets);
    out.middleCols(static_cast<Index>(start), static_cast<Index>(m)) =
        forward(model, steps, Mode::infer);
  }
  return out;
}

}  // namespace reachcast
