#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pren {

// Thrown when operand shapes are incompatible. The message names the
// offending extents so shape bugs are diagnosable from the error alone.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

inline std::int64_t shape_size(std::span<const int> shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

inline std::string shape_str(std::span<const int> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense N-dimensional array, row-major, with an optional gradient buffer of
// identical length. Image-like data uses NxCxHxW layout.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty means "no gradient attached"

  Tensor() = default;

  explicit Tensor(std::vector<int> shp, S fill = S(0)) : shape(std::move(shp)) {
    check_shape();
    data.assign(static_cast<std::size_t>(shape_size(shape)), fill);
  }

  Tensor(std::vector<int> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    check_shape();
    if (static_cast<std::int64_t>(data.size()) != shape_size(shape))
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  bool has_grad() const { return !grad.empty(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }

  void zero_grad() { grad.assign(data.size(), S(0)); }

  void drop_grad() { grad.clear(); }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (S v : data) out.data.push_back(static_cast<T>(v));
    return out;
  }

 private:
  void check_shape() const {
    for (int e : shape)
      if (e < 1) throw ShapeError("tensor extent must be >= 1, got shape " + shape_str(shape));
  }
};

// Named parameter tensors. std::map keeps iteration order deterministic,
// which the optimizer and checkpoint writer rely on.
template <class S>
using ParamSet = std::map<std::string, Tensor<S>>;

template <class S>
std::int64_t param_count(const ParamSet<S>& params) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

}  // namespace pren
