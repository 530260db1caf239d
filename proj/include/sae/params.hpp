#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sae {

/// Dense row-major tensor of finite doubles.
class Tensor {
 public:
  Tensor() = default;

  /// Throws InvalidArgument if the dims product differs from values.size()
  /// or any value is NaN/Inf.
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::span<const double> values() const { return values_; }
  std::size_t numel() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> values_;
};

struct Layer {
  std::string name;
  Tensor tensor;

  bool operator==(const Layer&) const = default;
};

/// Ordered, uniquely named collection of layer tensors. Layer order is part
/// of model identity.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const Layer* find(std::string_view name) const;
  /// Throws std::out_of_range for an unknown layer.
  const Tensor& at(std::string_view name) const;

  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<Layer> layers_;
};

struct Mismatch {
  std::string layer;
  std::string reason;
};

struct CompatibilityReport {
  std::vector<Mismatch> mismatches;

  bool compatible() const { return mismatches.empty(); }
};

/// Compares layer names, order and dims. Never throws.
CompatibilityReport compatibility(const ParameterSet& a, const ParameterSet& b);

/// Throws IncompatibleError naming the first mismatch.
void require_compatible(const ParameterSet& a, const ParameterSet& b);

std::size_t param_count(const ParameterSet& p);

/// Flat indices within `layer` whose value is exactly 0.0.
std::vector<std::size_t> zero_positions(const ParameterSet& p, std::string_view layer);

/// Concatenation of all layer values in layer order.
std::vector<double> flatten(const ParameterSet& p);

/// A copy of `like` with its values replaced by `values` (layer order).
ParameterSet unflatten(const ParameterSet& like, std::span<const double> values);

// Checkpoint format, little-endian, no padding:
//   "SAEC" | u32 version=1 | u32 num_layers
//   per layer: u32 name_len | name bytes | u32 ndim | u64 dims[ndim] | f32 values[numel]
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& p);
ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Values are rounded to the nearest float32 on save.
void save_checkpoint(const ParameterSet& p, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

/// p with every value rounded through float32, i.e. what a save/load returns.
ParameterSet round_to_storage(const ParameterSet& p);

}  // namespace sae
