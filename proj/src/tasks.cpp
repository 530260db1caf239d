#include "sae/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "sae/error.hpp"
#include "sae/rng.hpp"

namespace sae {

namespace detail {

MlpLayout::MlpLayout(std::vector<std::size_t> w) : widths(std::move(w)) {
  for (std::size_t l = 1; l < widths.size(); ++l) {
    weight_offset.push_back(total);
    total += widths[l] * widths[l - 1];
    bias_offset.push_back(total);
    total += widths[l];
  }
}

namespace {

// Activations of one example: pre[l] and post[l] for layers 1..L.
struct Workspace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
  std::vector<std::vector<double>> delta;

  explicit Workspace(const MlpLayout& layout) {
    const std::size_t L = layout.widths.size() - 1;
    pre.resize(L);
    post.resize(L);
    delta.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      pre[l].resize(layout.widths[l + 1]);
      post[l].resize(layout.widths[l + 1]);
      delta[l].resize(layout.widths[l + 1]);
    }
  }
};

// Hidden and output layers above the input layer; pre[0] must be filled.
void forward_rest(const MlpLayout& layout, std::span<const double> theta, Workspace& ws) {
  const std::size_t L = layout.widths.size() - 1;
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0) {
      const std::size_t in = layout.widths[l];
      const std::size_t out = layout.widths[l + 1];
      const double* W = theta.data() + layout.weight_offset[l];
      const double* bias = theta.data() + layout.bias_offset[l];
      const std::vector<double>& x = ws.post[l - 1];
      for (std::size_t j = 0; j < out; ++j) {
        double s = bias[j];
        const double* row = W + j * in;
        for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
        ws.pre[l][j] = s;
      }
    }
    if (l + 1 < L) {
      for (std::size_t j = 0; j < ws.pre[l].size(); ++j) ws.post[l][j] = std::max(0.0, ws.pre[l][j]);
    } else {
      ws.post[l] = ws.pre[l];
    }
  }
}

void forward_pair(const MlpLayout& layout, std::span<const double> theta, int a, int b, Workspace& ws) {
  const std::size_t in = layout.widths[0];
  const std::size_t out = layout.widths[1];
  const std::size_t m = in / 2;
  const double* W = theta.data() + layout.weight_offset[0];
  const double* bias = theta.data() + layout.bias_offset[0];
  const std::size_t ia = static_cast<std::size_t>(a);
  const std::size_t ib = m + static_cast<std::size_t>(b);
  for (std::size_t j = 0; j < out; ++j) ws.pre[0][j] = bias[j] + W[j * in + ia] + W[j * in + ib];
  forward_rest(layout, theta, ws);
}

void forward_dense(const MlpLayout& layout, std::span<const double> theta,
                   std::span<const double> input, Workspace& ws) {
  const std::size_t in = layout.widths[0];
  const std::size_t out = layout.widths[1];
  const double* W = theta.data() + layout.weight_offset[0];
  const double* bias = theta.data() + layout.bias_offset[0];
  for (std::size_t j = 0; j < out; ++j) {
    double s = bias[j];
    for (std::size_t i = 0; i < in; ++i) s += W[j * in + i] * input[i];
    ws.pre[0][j] = s;
  }
  forward_rest(layout, theta, ws);
}

// Cross-entropy of logits against label; writes softmax - onehot into d.
double softmax_xent(const std::vector<double>& logits, int label, std::vector<double>* d) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  if (d) {
    for (std::size_t k = 0; k < logits.size(); ++k) (*d)[k] = std::exp(logits[k] - lse);
    (*d)[static_cast<std::size_t>(label)] -= 1.0;
  }
  return lse - logits[static_cast<std::size_t>(label)];
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace

double flat_loss_grad(const MlpLayout& layout, std::span<const double> theta,
                      std::span<const Example> examples, std::span<double> grad) {
  if (examples.empty()) throw InvalidArgument("empty batch");
  const std::size_t L = layout.widths.size() - 1;
  const std::size_t m = layout.widths[0] / 2;
  const bool want_grad = !grad.empty();
  Workspace ws(layout);
  double total = 0.0;
  for (const Example& ex : examples) {
    forward_pair(layout, theta, ex.a, ex.b, ws);
    total += softmax_xent(ws.post[L - 1], ex.label, want_grad ? &ws.delta[L - 1] : nullptr);
    if (!want_grad) continue;
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t out = layout.widths[l + 1];
      const std::size_t in = layout.widths[l];
      double* dW = grad.data() + layout.weight_offset[l];
      double* db = grad.data() + layout.bias_offset[l];
      const std::vector<double>& delta = ws.delta[l];
      for (std::size_t j = 0; j < out; ++j) db[j] += delta[j];
      if (l == 0) {
        const std::size_t ia = static_cast<std::size_t>(ex.a);
        const std::size_t ib = m + static_cast<std::size_t>(ex.b);
        for (std::size_t j = 0; j < out; ++j) {
          dW[j * in + ia] += delta[j];
          dW[j * in + ib] += delta[j];
        }
        break;
      }
      const std::vector<double>& x = ws.post[l - 1];
      for (std::size_t j = 0; j < out; ++j) {
        double* row = dW + j * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += delta[j] * x[i];
      }
      const double* W = theta.data() + layout.weight_offset[l];
      std::vector<double>& below = ws.delta[l - 1];
      std::fill(below.begin(), below.end(), 0.0);
      for (std::size_t j = 0; j < out; ++j) {
        const double* row = W + j * in;
        for (std::size_t i = 0; i < in; ++i) below[i] += row[i] * delta[j];
      }
      for (std::size_t i = 0; i < in; ++i) {
        if (ws.pre[l - 1][i] <= 0.0) below[i] = 0.0;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(examples.size());
  if (want_grad) {
    for (double& g : grad) g *= inv;
  }
  return total * inv;
}

}  // namespace detail

using detail::MlpLayout;

int ModularTaskSpec::label(int a, int b) const {
  const int m = modulus;
  return op == ModOp::Add ? (a + b) % m : ((a - b) % m + m) % m;
}

std::vector<double> one_hot_input(int a, int b, int modulus) {
  std::vector<double> x(static_cast<std::size_t>(2 * modulus), 0.0);
  x[static_cast<std::size_t>(a)] = 1.0;
  x[static_cast<std::size_t>(modulus + b)] = 1.0;
  return x;
}

SplitPools split_pairs(const ModularTaskSpec& spec) {
  if (spec.modulus < 2) throw InvalidArgument("modulus must be >= 2");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw InvalidArgument("test_fraction must lie in (0, 1)");
  }
  const int m = spec.modulus;
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(m * m));
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) pairs.emplace_back(a, b);
  }
  Rng rng(derive_seed(spec.split_seed, "split"));
  rng.shuffle(std::span(pairs));
  const auto n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(pairs.size()))));
  SplitPools pools;
  pools.test.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_test));
  pools.train.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_test), pairs.end());
  std::sort(pools.test.begin(), pools.test.end());
  std::sort(pools.train.begin(), pools.train.end());
  return pools;
}

namespace {

Dataset make_dataset(const ModularTaskSpec& spec, std::span<const std::pair<int, int>> pairs) {
  Dataset d;
  d.modulus = spec.modulus;
  d.examples.reserve(pairs.size());
  for (const auto& [a, b] : pairs) d.examples.push_back({a, b, spec.label(a, b)});
  return d;
}

}  // namespace

Dataset gen_dataset(const ModularTaskSpec& spec, Split which, std::size_t n, std::uint64_t seed) {
  const SplitPools pools = split_pairs(spec);
  std::vector<std::pair<int, int>> pool = which == Split::Test ? pools.test : pools.train;
  if (n > pool.size()) {
    throw InvalidArgument("requested " + std::to_string(n) + " examples but the split holds " +
                          std::to_string(pool.size()) + " pairs");
  }
  Rng rng(seed);
  rng.shuffle(std::span(pool));
  pool.resize(n);
  return make_dataset(spec, pool);
}

Dataset full_split(const ModularTaskSpec& spec, Split which) {
  const SplitPools pools = split_pairs(spec);
  return make_dataset(spec, which == Split::Test ? pools.test : pools.train);
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.modulus != b.modulus) throw InvalidArgument("concat: modulus mismatch");
  Dataset d = a;
  d.examples.insert(d.examples.end(), b.examples.begin(), b.examples.end());
  return d;
}

MlpSpec MlpSpec::for_task(int modulus, std::size_t hidden, std::size_t hidden_layers) {
  MlpSpec s;
  s.widths.push_back(static_cast<std::size_t>(2 * modulus));
  for (std::size_t i = 0; i < hidden_layers; ++i) s.widths.push_back(hidden);
  s.widths.push_back(static_cast<std::size_t>(modulus));
  return s;
}

std::vector<std::string> MlpSpec::violations() const {
  std::vector<std::string> v;
  if (widths.size() < 2) v.push_back("an MLP needs at least input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) v.push_back("widths must be positive");
  }
  if (widths.size() >= 2 && widths.front() != 2 * widths.back()) {
    v.push_back("input width must be twice the output width (one-hot pairs)");
  }
  return v;
}

ParameterSet init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  if (const auto v = spec.violations(); !v.empty()) throw InvalidArgument(v.front());
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t l = 1; l < spec.widths.size(); ++l) {
    const std::size_t in = spec.widths[l - 1];
    const std::size_t out = spec.widths[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& x : w) x = rng.uniform(-limit, limit);
    const std::string name = "fc" + std::to_string(l);
    layers.push_back({name + ".weight", Tensor({out, in}, std::move(w))});
    layers.push_back({name + ".bias", Tensor::zeros({out})});
  }
  return ParameterSet(std::move(layers));
}

MlpSpec infer_mlp(const ParameterSet& p) {
  if (p.size() < 2 || p.size() % 2 != 0) throw ShapeError("MLP needs weight/bias layer pairs");
  MlpSpec spec;
  for (std::size_t l = 0; l < p.size() / 2; ++l) {
    const Layer& w = p.layers()[2 * l];
    const Layer& b = p.layers()[2 * l + 1];
    const std::string name = "fc" + std::to_string(l + 1);
    if (w.name != name + ".weight" || b.name != name + ".bias") {
      throw ShapeError("expected layers " + name + ".weight/" + name + ".bias, got " + w.name + "/" + b.name);
    }
    if (w.tensor.dims().size() != 2 || b.tensor.dims().size() != 1 ||
        b.tensor.dims()[0] != w.tensor.dims()[0]) {
      throw ShapeError("layer " + name + " has inconsistent weight/bias dims");
    }
    if (l == 0) {
      spec.widths.push_back(w.tensor.dims()[1]);
    } else if (w.tensor.dims()[1] != spec.widths.back()) {
      throw ShapeError("layer " + name + " input width does not match the previous layer");
    }
    spec.widths.push_back(w.tensor.dims()[0]);
  }
  if (const auto v = spec.violations(); !v.empty()) throw ShapeError(v.front());
  return spec;
}

std::vector<double> forward(const ParameterSet& p, std::span<const double> input) {
  const MlpLayout layout(infer_mlp(p).widths);
  if (input.size() != layout.widths[0]) throw ShapeError("input width mismatch");
  const std::vector<double> theta = flatten(p);
  detail::Workspace ws(layout);
  detail::forward_dense(layout, theta, input, ws);
  return ws.post.back();
}

std::vector<double> forward(const ParameterSet& p, int a, int b) {
  const MlpLayout layout(infer_mlp(p).widths);
  const int m = static_cast<int>(layout.widths.back());
  if (a < 0 || a >= m || b < 0 || b >= m) throw InvalidArgument("operand outside [0, m)");
  const std::vector<double> theta = flatten(p);
  detail::Workspace ws(layout);
  detail::forward_pair(layout, theta, a, b, ws);
  return ws.post.back();
}

namespace {

void check_dataset(const MlpLayout& layout, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("empty dataset");
  if (static_cast<std::size_t>(data.modulus) != layout.widths.back()) {
    throw ShapeError("dataset modulus does not match the network output width");
  }
}

}  // namespace

LossGrad loss_and_grad(const ParameterSet& p, const Dataset& batch) {
  const MlpLayout layout(infer_mlp(p).widths);
  check_dataset(layout, batch);
  const std::vector<double> theta = flatten(p);
  std::vector<double> grad(layout.total, 0.0);
  LossGrad r;
  r.loss = detail::flat_loss_grad(layout, theta, batch.examples, grad);
  r.grad = unflatten(p, grad);
  return r;
}

double mean_loss(const ParameterSet& p, const Dataset& data) {
  const MlpLayout layout(infer_mlp(p).widths);
  check_dataset(layout, data);
  const std::vector<double> theta = flatten(p);
  return detail::flat_loss_grad(layout, theta, data.examples, {});
}

double accuracy(const ParameterSet& p, const Dataset& data) {
  const MlpLayout layout(infer_mlp(p).widths);
  check_dataset(layout, data);
  const std::vector<double> theta = flatten(p);
  const auto n = static_cast<std::int64_t>(data.size());
  std::int64_t correct = 0;
#pragma omp parallel if (n >= 256)
  {
    detail::Workspace ws(layout);
#pragma omp for schedule(static) reduction(+ : correct)
    for (std::int64_t i = 0; i < n; ++i) {
      const Example& ex = data.examples[static_cast<std::size_t>(i)];
      detail::forward_pair(layout, theta, ex.a, ex.b, ws);
      if (detail::argmax(ws.post.back()) == static_cast<std::size_t>(ex.label)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

ParameterSet train(const ParameterSet& p, const Dataset& data, const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (cfg.epochs < 0) throw InvalidArgument("epochs must be >= 0");
  const MlpLayout layout(infer_mlp(p).widths);
  check_dataset(layout, data);
  std::vector<double> theta = flatten(p);
  std::vector<double> grad(layout.total);
  std::vector<double> m1, m2;
  if (cfg.optimizer == Optimizer::AdamW) {
    m1.assign(layout.total, 0.0);
    m2.assign(layout.total, 0.0);
  }
  double decay1 = 1.0;
  double decay2 = 1.0;
  const std::size_t batch = cfg.batch_size == 0 ? data.size() : cfg.batch_size;
  std::vector<Example> order = data.examples;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      detail::flat_loss_grad(layout, theta, std::span(order).subspan(start, len), grad);
      if (cfg.optimizer == Optimizer::Sgd) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
          theta[i] -= cfg.learning_rate * (grad[i] + cfg.weight_decay * theta[i]);
        }
        continue;
      }
      decay1 *= cfg.beta1;
      decay2 *= cfg.beta2;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = m1[i] / (1.0 - decay1);
        const double vhat = m2[i] / (1.0 - decay2);
        theta[i] -= cfg.learning_rate * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * theta[i]);
      }
    }
  }
  return unflatten(p, theta);
}

ModularTaskSpec ExpertConfig::task(ModOp op, std::uint64_t seed) const {
  ModularTaskSpec s;
  s.modulus = modulus;
  s.op = op;
  s.split_seed = derive_seed(seed, "split");
  s.test_fraction = test_fraction;
  return s;
}

Experts build_experts(const ExpertConfig& cfg, std::uint64_t seed) {
  const ModularTaskSpec add = cfg.task(ModOp::Add, seed);
  const ModularTaskSpec sub = cfg.task(ModOp::Sub, seed);
  const Dataset add_train = full_split(add, Split::Train);
  const Dataset sub_train = full_split(sub, Split::Train);

  const ParameterSet init = init_mlp(MlpSpec::for_task(cfg.modulus, cfg.hidden), derive_seed(seed, "init"));
  TrainConfig tc;
  tc.optimizer = cfg.optimizer;
  tc.learning_rate = cfg.learning_rate;
  tc.batch_size = cfg.batch_size;
  tc.weight_decay = cfg.weight_decay;

  Experts e;
  tc.epochs = cfg.base_epochs;
  tc.seed = derive_seed(seed, "train-base");
  e.base = train(init, concat(add_train, sub_train), tc);

  tc.epochs = cfg.expert_epochs;
  tc.seed = derive_seed(seed, "train-add");
  e.add = train(e.base, add_train, tc);
  tc.seed = derive_seed(seed, "train-sub");
  e.sub = train(e.base, sub_train, tc);
  return e;
}

std::string to_string(ModOp op) { return op == ModOp::Add ? "add" : "sub"; }

std::string to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adamw"; }

Optimizer parse_optimizer(const std::string& s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "adamw") return Optimizer::AdamW;
  throw InvalidArgument("optimizer must be sgd or adamw, got " + s);
}

ModOp parse_op(const std::string& s) {
  if (s == "add") return ModOp::Add;
  if (s == "sub") return ModOp::Sub;
  throw InvalidArgument("task must be add or sub, got " + s);
}

}  // namespace sae
