#include "sae/params.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "sae/error.hpp"

namespace sae {

namespace {

std::size_t dims_product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / d) {
      throw InvalidArgument("tensor dims overflow");
    }
    n *= d;
  }
  return n;
}

std::string dims_string(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s.empty() ? "scalar" : s;
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw TruncatedError("checkpoint truncated at byte " + std::to_string(pos_) +
                           " (need " + std::to_string(n) + ", have " +
                           std::to_string(remaining()) + ")");
    }
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  for (std::size_t d : dims_) {
    if (d == 0) throw InvalidArgument("tensor dims must be positive");
  }
  if (dims_product(dims_) != values_.size()) {
    throw InvalidArgument("tensor dims " + dims_string(dims_) + " do not match " +
                          std::to_string(values_.size()) + " values");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("tensor values must be finite");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> dims) {
  const std::size_t n = dims_product(dims);
  return Tensor(std::move(dims), std::vector<double>(n, 0.0));
}

ParameterSet::ParameterSet(std::vector<Layer> layers) : layers_(std::move(layers)) {
  std::unordered_set<std::string_view> seen;
  for (const Layer& l : layers_) {
    if (l.name.empty()) throw InvalidArgument("layer names must be non-empty");
    if (!seen.insert(l.name).second) throw InvalidArgument("duplicate layer name: " + l.name);
  }
}

const Layer* ParameterSet::find(std::string_view name) const {
  for (const Layer& l : layers_) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

const Tensor& ParameterSet::at(std::string_view name) const {
  const Layer* l = find(name);
  if (!l) throw std::out_of_range("unknown layer: " + std::string(name));
  return l->tensor;
}

CompatibilityReport compatibility(const ParameterSet& a, const ParameterSet& b) {
  CompatibilityReport report;
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= a.size()) {
      report.mismatches.push_back({b.layers()[i].name, "missing from first model"});
      continue;
    }
    if (i >= b.size()) {
      report.mismatches.push_back({a.layers()[i].name, "missing from second model"});
      continue;
    }
    const Layer& la = a.layers()[i];
    const Layer& lb = b.layers()[i];
    if (la.name != lb.name) {
      report.mismatches.push_back({la.name, "name differs at position " + std::to_string(i) +
                                                ": " + la.name + " vs " + lb.name});
    } else if (!la.tensor.same_shape(lb.tensor)) {
      report.mismatches.push_back({la.name, "dims " + dims_string(la.tensor.dims()) + " vs " +
                                                dims_string(lb.tensor.dims())});
    }
  }
  return report;
}

void require_compatible(const ParameterSet& a, const ParameterSet& b) {
  const CompatibilityReport r = compatibility(a, b);
  if (!r.compatible()) {
    throw IncompatibleError("incompatible models: layer " + r.mismatches.front().layer + ": " +
                            r.mismatches.front().reason);
  }
}

std::size_t param_count(const ParameterSet& p) {
  std::size_t n = 0;
  for (const Layer& l : p.layers()) n += l.tensor.numel();
  return n;
}

std::vector<std::size_t> zero_positions(const ParameterSet& p, std::string_view layer) {
  const Layer* l = p.find(layer);
  if (!l) throw InvalidArgument("unknown layer: " + std::string(layer));
  std::vector<std::size_t> out;
  const auto values = l->tensor.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 0.0) out.push_back(i);
  }
  return out;
}

std::vector<double> flatten(const ParameterSet& p) {
  std::vector<double> out;
  out.reserve(param_count(p));
  for (const Layer& l : p.layers()) {
    const auto v = l.tensor.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

ParameterSet unflatten(const ParameterSet& like, std::span<const double> values) {
  if (values.size() != param_count(like)) {
    throw ShapeError("flat vector has " + std::to_string(values.size()) + " values, model has " +
                     std::to_string(param_count(like)));
  }
  std::vector<Layer> layers;
  layers.reserve(like.size());
  std::size_t offset = 0;
  for (const Layer& l : like.layers()) {
    const std::size_t n = l.tensor.numel();
    layers.push_back({l.name, Tensor(l.tensor.dims(), std::vector<double>(values.begin() + offset,
                                                                          values.begin() + offset + n))});
    offset += n;
  }
  return ParameterSet(std::move(layers));
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& p) {
  ByteWriter w;
  w.bytes("SAEC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(p.size()));
  for (const Layer& l : p.layers()) {
    w.u32(static_cast<std::uint32_t>(l.name.size()));
    w.bytes(l.name);
    w.u32(static_cast<std::uint32_t>(l.tensor.dims().size()));
    for (std::size_t d : l.tensor.dims()) w.u64(d);
    for (double v : l.tensor.values()) {
      const float f = static_cast<float>(v);
      if (!std::isfinite(f)) {
        throw InvalidArgument("layer " + l.name + " holds a value outside float32 range");
      }
      w.f32(f);
    }
  }
  return w.take();
}

ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.string(4) != "SAEC") throw FormatError("bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t num_layers = r.u32();
  std::vector<Layer> layers;
  for (std::uint32_t li = 0; li < num_layers; ++li) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.string(name_len);
    const std::uint32_t ndim = r.u32();
    r.need(static_cast<std::size_t>(ndim) * 8);
    std::vector<std::size_t> dims(ndim);
    for (auto& d : dims) {
      const std::uint64_t v = r.u64();
      if (v == 0) throw FormatError("layer " + name + " has a zero dimension");
      d = static_cast<std::size_t>(v);
    }
    std::size_t numel = 1;
    for (std::size_t d : dims) {
      if (numel > r.remaining() / 4 / d) {
        throw TruncatedError("layer " + name + " declares more values than the file holds");
      }
      numel *= d;
    }
    r.need(numel * 4);
    std::vector<double> values(numel);
    for (auto& v : values) {
      const float f = r.f32();
      if (!std::isfinite(f)) throw FormatError("layer " + name + " holds a non-finite value");
      v = f;
    }
    layers.push_back({std::move(name), Tensor(std::move(dims), std::move(values))});
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after last layer");
  }
  try {
    return ParameterSet(std::move(layers));
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
}

void save_checkpoint(const ParameterSet& p, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

ParameterSet round_to_storage(const ParameterSet& p) {
  std::vector<Layer> layers;
  layers.reserve(p.size());
  for (const Layer& l : p.layers()) {
    std::vector<double> v(l.tensor.values().begin(), l.tensor.values().end());
    for (double& x : v) x = static_cast<float>(x);
    layers.push_back({l.name, Tensor(l.tensor.dims(), std::move(v))});
  }
  return ParameterSet(std::move(layers));
}

}  // namespace sae
