#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sae/params.hpp"

namespace sae {

// Synthetic twin tasks: (a, b) -> (a + b) mod m and (a - b) mod m over the
// same one-hot input encoding, so the two experts disagree on every input
// with b != 0.

enum class ModOp { Add, Sub };
enum class Split { Train, Opt, Test };

struct ModularTaskSpec {
  int modulus = 13;
  ModOp op = ModOp::Add;
  /// Seeds the (a, b) permutation that separates train and test pairs.
  std::uint64_t split_seed = 0;
  double test_fraction = 0.3;

  int label(int a, int b) const;
};

struct Example {
  int a = 0;
  int b = 0;
  int label = 0;

  bool operator==(const Example&) const = default;
};

/// Inputs are one-hot pairs of width 2m: position a and position m + b.
struct Dataset {
  int modulus = 0;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  bool operator==(const Dataset&) const = default;
};

std::vector<double> one_hot_input(int a, int b, int modulus);

struct SplitPools {
  std::vector<std::pair<int, int>> train;
  std::vector<std::pair<int, int>> test;
};

/// Disjoint train/test partition of all m*m pairs, fixed by split_seed.
SplitPools split_pairs(const ModularTaskSpec& spec);

/// n examples drawn without replacement from the train pool (Train, Opt) or
/// the test pool (Test). Throws InvalidArgument if n exceeds the pool.
Dataset gen_dataset(const ModularTaskSpec& spec, Split which, std::size_t n, std::uint64_t seed);

/// The whole pool of a split in a seed-independent order.
Dataset full_split(const ModularTaskSpec& spec, Split which);

/// Concatenation with shared modulus.
Dataset concat(const Dataset& a, const Dataset& b);

/// Fully connected rectifier network; widths = [2m, h, ..., h, m].
struct MlpSpec {
  std::vector<std::size_t> widths;

  static MlpSpec for_task(int modulus, std::size_t hidden = 32, std::size_t hidden_layers = 2);
  std::vector<std::string> violations() const;
};

/// Layers fc{i}.weight [out, in] and fc{i}.bias [out], He-uniform weights,
/// zero biases.
ParameterSet init_mlp(const MlpSpec& spec, std::uint64_t seed);

/// Recovers the layer widths and throws ShapeError when p is not an MLP.
MlpSpec infer_mlp(const ParameterSet& p);

/// Logits for a dense input vector.
std::vector<double> forward(const ParameterSet& p, std::span<const double> input);

/// Logits for the one-hot pair (a, b).
std::vector<double> forward(const ParameterSet& p, int a, int b);

struct LossGrad {
  double loss = 0.0;
  ParameterSet grad;
};

/// Mean softmax cross-entropy and its exact gradient.
LossGrad loss_and_grad(const ParameterSet& p, const Dataset& batch);

double mean_loss(const ParameterSet& p, const Dataset& data);

/// Fraction of examples whose argmax logit (lowest index on ties) is the
/// label. Parallel over examples; exact for any thread count.
double accuracy(const ParameterSet& p, const Dataset& data);

enum class Optimizer { Sgd, AdamW };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Sgd;
  double learning_rate = 0.1;
  int epochs = 1;
  /// 0 means full batch.
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Decoupled decay: every step also subtracts lr * weight_decay * theta.
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
};

/// Mini-batch training with a per-epoch shuffle. Optimizer state starts
/// from zero on every call.
ParameterSet train(const ParameterSet& p, const Dataset& data, const TrainConfig& cfg);

struct ExpertConfig {
  int modulus = 13;
  std::size_t hidden = 32;
  double test_fraction = 0.25;
  int base_epochs = 200;
  int expert_epochs = 3000;
  Optimizer optimizer = Optimizer::AdamW;
  double learning_rate = 0.02;
  std::size_t batch_size = 0;
  double weight_decay = 1.0;

  ModularTaskSpec task(ModOp op, std::uint64_t seed) const;
};

struct Experts {
  ParameterSet base;
  ParameterSet add;
  ParameterSet sub;
};

/// Base = short training on a 50/50 Add/Sub mixture; each expert = base
/// fine-tuned on its own task.
Experts build_experts(const ExpertConfig& cfg, std::uint64_t seed);

std::string to_string(ModOp op);
ModOp parse_op(const std::string& s);
std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

namespace detail {

/// Offsets of each weight and bias block inside the flattened parameters.
struct MlpLayout {
  std::vector<std::size_t> widths;
  std::vector<std::size_t> weight_offset;
  std::vector<std::size_t> bias_offset;
  std::size_t total = 0;

  explicit MlpLayout(std::vector<std::size_t> w);
};

/// Mean loss over examples; accumulates the mean gradient into grad when it
/// is non-empty (grad must be zeroed by the caller).
double flat_loss_grad(const MlpLayout& layout, std::span<const double> theta,
                      std::span<const Example> examples, std::span<double> grad);

}  // namespace detail

}  // namespace sae
