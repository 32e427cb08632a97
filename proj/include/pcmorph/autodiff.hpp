#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcmorph/errors.hpp"
#include "pcmorph/geom.hpp"

namespace pcmorph::ad {

// Dense row-major tensor of doubles. Rank 2 everywhere in practice
// (scalars are 1x1). All training math is 64-bit.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols)
      : shape{rows, cols}, data(rows * cols, 0.0) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor row(const std::vector<double>& values) {
    Tensor t(1, values.size());
    t.data = values;
    return t;
  }
  static Tensor from_cloud(const PointCloud& cloud);
  PointCloud to_cloud() const;  // requires cols == 3

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return size() == 1; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::string shape_str() const;
  // Throws NumericalError naming `op` if any entry is NaN or infinite.
  void check_finite(const char* op) const;
};

// Handle to a value recorded on a Tape.
struct ValueId {
  std::uint32_t id = 0;
};

// Reverse-mode tape. Records every primitive in execution order; backward
// walks the record once, in reverse, accumulating gradients additively
// across fan-out. Single-owner while recording; separate tapes may run on
// separate threads.
class Tape {
 public:
  // Registers an input/parameter tensor. Leaves the loss never touches end
  // up with zero gradient.
  ValueId leaf(Tensor value);

  const Tensor& value(ValueId v) const { return nodes_[v.id].value; }
  // Gradient of the last backward() target w.r.t. node v.
  const Tensor& grad(ValueId v) const;

  // Elementwise, same shape.
  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  // Multiply / divide by a compile-time-fixed scalar constant.
  ValueId scale(ValueId a, double c);
  ValueId div_scalar(ValueId a, double c);

  ValueId matmul(ValueId a, ValueId b);

  // Per-row feature concatenation: [n x p | n x q] -> n x (p+q).
  ValueId concat_cols(ValueId a, ValueId b);
  // Repeat a 1 x d row n times; gradient sums back over rows.
  ValueId broadcast_rows(ValueId a, std::size_t n);
  // out[e, :] = in[idx[e], :]; gradient scatter-adds. Indices are data, not
  // differentiated (used for fixed nearest-neighbor assignments and edges).
  ValueId gather_rows(ValueId a, std::vector<std::uint32_t> idx);

  ValueId relu(ValueId a);   // relu'(0) := 0
  ValueId tanh(ValueId a);
  ValueId square(ValueId a);

  ValueId sum(ValueId a);       // all entries, row-major order -> 1x1
  ValueId mean(ValueId a);      // sum / size -> 1x1
  ValueId row_sums(ValueId a);  // n x d -> n x 1, left-to-right per row
  ValueId mean_rows(ValueId a); // n x d -> 1 x d (column means over rows)
  ValueId max_rows(ValueId a);  // n x d -> 1 x d, ties to the lowest row

  // Reverse sweep from a scalar loss node. May be called repeatedly;
  // gradients are reset each time. Deterministic: identical tapes produce
  // bit-identical gradients.
  void backward(ValueId loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> backprop;  // null for leaves
  };

  ValueId record(Tensor value, std::function<void(Tape&)> backprop,
                 const char* op);
  Tensor& grad_mut(ValueId v) { return nodes_[v.id].grad; }

  std::vector<Node> nodes_;
  bool has_grads_ = false;
};

// Central finite differences against a supplied analytic gradient.
// epsilon must lie in [1e-7, 1e-3]. Per coordinate:
//   numeric = (f(p + eps e_i) - f(p - eps e_i)) / (2 eps)
//   rel     = |analytic - numeric| / max(1, |analytic|, |numeric|)
// Returns the maximum relative error over all coordinates. Throws
// NumericalError if f is non-finite at any probe point.
double grad_check(const std::function<double(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& params,
                  const std::vector<Tensor>& analytic_grads, double epsilon);

}  // namespace pcmorph::ad
