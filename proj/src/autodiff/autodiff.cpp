#include <algorithm>
#include <cmath>
#include <cstring>

#include "pcmorph/autodiff.hpp"
#include "pcmorph/kernels.hpp"

namespace pcmorph::ad {

Tensor Tensor::from_cloud(const PointCloud& cloud) {
  Tensor t(cloud.size(), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    t.data[i * 3 + 0] = cloud[i].x;
    t.data[i * 3 + 1] = cloud[i].y;
    t.data[i * 3 + 2] = cloud[i].z;
  }
  return t;
}

PointCloud Tensor::to_cloud() const {
  if (cols() != 3)
    throw InvalidArgument("tensor " + shape_str() + " is not an n x 3 matrix");
  PointCloud cloud;
  cloud.points.resize(rows());
  for (std::size_t i = 0; i < rows(); ++i)
    cloud.points[i] = {data[i * 3 + 0], data[i * 3 + 1], data[i * 3 + 2]};
  return cloud;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void Tensor::check_finite(const char* op) const {
  for (double v : data)
    if (!std::isfinite(v))
      throw NumericalError(std::string(op) + ": non-finite value produced");
}

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a,
                              const Tensor& b) {
  throw InvalidArgument(std::string(op) + ": shape mismatch " + a.shape_str() +
                        " vs " + b.shape_str());
}

}  // namespace

ValueId Tape::record(Tensor value, std::function<void(Tape&)> backprop,
                     const char* op) {
  value.check_finite(op);
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backprop)});
  return ValueId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

ValueId Tape::leaf(Tensor value) {
  return record(std::move(value), nullptr, "leaf");
}

const Tensor& Tape::grad(ValueId v) const {
  if (!has_grads_)
    throw InvalidArgument("tape: grad() requested before backward()");
  return nodes_[v.id].grad;
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape) shape_error("add", ta, tb);
  Tensor out = ta;
  kern::active().add(ta.data.data(), tb.data.data(), out.data.data(),
                     out.size());
  ValueId id = record(std::move(out), nullptr, "add");
  nodes_[id.id].backprop = [a, b, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    Tensor& gb = t.grad_mut(b);
    kern::active().axpy(1.0, g.data.data(), ga.data.data(), g.size());
    kern::active().axpy(1.0, g.data.data(), gb.data.data(), g.size());
  };
  return id;
}

ValueId Tape::sub(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape) shape_error("sub", ta, tb);
  Tensor out = ta;
  kern::active().sub(ta.data.data(), tb.data.data(), out.data.data(),
                     out.size());
  ValueId id = record(std::move(out), nullptr, "sub");
  nodes_[id.id].backprop = [a, b, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    kern::active().axpy(1.0, g.data.data(), t.grad_mut(a).data.data(),
                        g.size());
    kern::active().axpy(-1.0, g.data.data(), t.grad_mut(b).data.data(),
                        g.size());
  };
  return id;
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.shape != tb.shape) shape_error("mul", ta, tb);
  Tensor out = ta;
  kern::active().mul(ta.data.data(), tb.data.data(), out.data.data(),
                     out.size());
  ValueId id = record(std::move(out), nullptr, "mul");
  nodes_[id.id].backprop = [a, b, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad_mut(a);
    Tensor& gb = t.grad_mut(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.data[i] += g.data[i] * vb.data[i];
      gb.data[i] += g.data[i] * va.data[i];
    }
  };
  return id;
}

ValueId Tape::scale(ValueId a, double c) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  kern::active().scale(ta.data.data(), c, out.data.data(), out.size());
  ValueId id = record(std::move(out), nullptr, "scale");
  nodes_[id.id].backprop = [a, c, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    kern::active().axpy(c, g.data.data(), t.grad_mut(a).data.data(), g.size());
  };
  return id;
}

ValueId Tape::div_scalar(ValueId a, double c) {
  if (c == 0.0) throw InvalidArgument("div_scalar: division by zero");
  const Tensor& ta = value(a);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] / c;
  ValueId id = record(std::move(out), nullptr, "div_scalar");
  nodes_[id.id].backprop = [a, c, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] / c;
  };
  return id;
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.cols() != tb.rows()) shape_error("matmul", ta, tb);
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  Tensor out(m, n);
  kern::active().matmul(ta.data.data(), tb.data.data(), out.data.data(), m, k,
                        n);
  ValueId id = record(std::move(out), nullptr, "matmul");
  nodes_[id.id].backprop = [a, b, id, m, k, n](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;  // m x n
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    // dA += g * B^T ; dB += A^T * g. Transposes are pure data movement, so
    // the accumulation order per output element stays ascending.
    Tensor bt(n, k);
    kern::active().transpose(vb.data.data(), bt.data.data(), k, n);
    kern::active().matmul_acc(g.data.data(), bt.data.data(),
                              t.grad_mut(a).data.data(), m, n, k);
    Tensor at(k, m);
    kern::active().transpose(va.data.data(), at.data.data(), m, k);
    kern::active().matmul_acc(at.data.data(), g.data.data(),
                              t.grad_mut(b).data.data(), k, m, n);
  };
  return id;
}

ValueId Tape::concat_cols(ValueId a, ValueId b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rows() != tb.rows()) shape_error("concat_cols", ta, tb);
  const std::size_t n = ta.rows(), p = ta.cols(), q = tb.cols();
  Tensor out(n, p + q);
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(&out.data[i * (p + q)], &ta.data[i * p], p * sizeof(double));
    std::memcpy(&out.data[i * (p + q) + p], &tb.data[i * q],
                q * sizeof(double));
  }
  ValueId id = record(std::move(out), nullptr, "concat_cols");
  nodes_[id.id].backprop = [a, b, id, n, p, q](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    Tensor& gb = t.grad_mut(b);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j)
        ga.data[i * p + j] += g.data[i * (p + q) + j];
      for (std::size_t j = 0; j < q; ++j)
        gb.data[i * q + j] += g.data[i * (p + q) + p + j];
    }
  };
  return id;
}

ValueId Tape::broadcast_rows(ValueId a, std::size_t n) {
  const Tensor& ta = value(a);
  if (ta.rows() != 1)
    throw InvalidArgument("broadcast_rows: input must be 1 x d, got " +
                          ta.shape_str());
  const std::size_t d = ta.cols();
  Tensor out(n, d);
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(&out.data[i * d], ta.data.data(), d * sizeof(double));
  ValueId id = record(std::move(out), nullptr, "broadcast_rows");
  nodes_[id.id].backprop = [a, id, n, d](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) ga.data[j] += g.data[i * d + j];
  };
  return id;
}

ValueId Tape::gather_rows(ValueId a, std::vector<std::uint32_t> idx) {
  const Tensor& ta = value(a);
  const std::size_t d = ta.cols();
  for (std::uint32_t r : idx)
    if (r >= ta.rows())
      throw InvalidArgument("gather_rows: index " + std::to_string(r) +
                            " out of range for " + ta.shape_str());
  Tensor out(idx.size(), d);
  for (std::size_t e = 0; e < idx.size(); ++e)
    std::memcpy(&out.data[e * d], &ta.data[idx[e] * d], d * sizeof(double));
  ValueId id = record(std::move(out), nullptr, "gather_rows");
  nodes_[id.id].backprop = [a, id, d, idx = std::move(idx)](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    for (std::size_t e = 0; e < idx.size(); ++e)
      for (std::size_t j = 0; j < d; ++j)
        ga.data[idx[e] * d + j] += g.data[e * d + j];
  };
  return id;
}

ValueId Tape::relu(ValueId a) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  ValueId id = record(std::move(out), nullptr, "relu");
  nodes_[id.id].backprop = [a, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (va.data[i] > 0.0) ga.data[i] += g.data[i];
  };
  return id;
}

ValueId Tape::tanh(ValueId a) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  for (double& v : out.data) v = std::tanh(v);
  ValueId id = record(std::move(out), nullptr, "tanh");
  nodes_[id.id].backprop = [a, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    const Tensor& y = t.value(id);
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  };
  return id;
}

ValueId Tape::square(ValueId a) {
  const Tensor& ta = value(a);
  Tensor out = ta;
  kern::active().square(ta.data.data(), out.data.data(), out.size());
  ValueId id = record(std::move(out), nullptr, "square");
  nodes_[id.id].backprop = [a, id](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      ga.data[i] += g.data[i] * (2.0 * va.data[i]);
  };
  return id;
}

ValueId Tape::sum(ValueId a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  ValueId id = record(Tensor::scalar(acc), nullptr, "sum");
  nodes_[id.id].backprop = [a, id](Tape& t) {
    const double g = t.nodes_[id.id].grad.data[0];
    Tensor& ga = t.grad_mut(a);
    for (double& v : ga.data) v += g;
  };
  return id;
}

ValueId Tape::mean(ValueId a) {
  const Tensor& ta = value(a);
  const double count = static_cast<double>(ta.size());
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  ValueId id = record(Tensor::scalar(acc / count), nullptr, "mean");
  nodes_[id.id].backprop = [a, id, count](Tape& t) {
    const double g = t.nodes_[id.id].grad.data[0];
    Tensor& ga = t.grad_mut(a);
    for (double& v : ga.data) v += g / count;
  };
  return id;
}

ValueId Tape::row_sums(ValueId a) {
  const Tensor& ta = value(a);
  const std::size_t n = ta.rows(), d = ta.cols();
  Tensor out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += ta.data[i * d + j];
    out.data[i] = acc;
  }
  ValueId id = record(std::move(out), nullptr, "row_sums");
  nodes_[id.id].backprop = [a, id, n, d](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) ga.data[i * d + j] += g.data[i];
  };
  return id;
}

ValueId Tape::mean_rows(ValueId a) {
  const Tensor& ta = value(a);
  const std::size_t n = ta.rows(), d = ta.cols();
  const double count = static_cast<double>(n);
  Tensor out(1, d);
  // Ascending-row accumulation keeps the encoder bit-deterministic.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.data[j] += ta.data[i * d + j];
  for (std::size_t j = 0; j < d; ++j) out.data[j] /= count;
  ValueId id = record(std::move(out), nullptr, "mean_rows");
  nodes_[id.id].backprop = [a, id, n, d, count](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        ga.data[i * d + j] += g.data[j] / count;
  };
  return id;
}

ValueId Tape::max_rows(ValueId a) {
  const Tensor& ta = value(a);
  const std::size_t n = ta.rows(), d = ta.cols();
  if (n == 0) throw InvalidArgument("max_rows: empty input");
  Tensor out(1, d);
  std::vector<std::uint32_t> argmax(d, 0);
  for (std::size_t j = 0; j < d; ++j) out.data[j] = ta.data[j];
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (ta.data[i * d + j] > out.data[j]) {  // ties keep the lowest row
        out.data[j] = ta.data[i * d + j];
        argmax[j] = static_cast<std::uint32_t>(i);
      }
  ValueId id = record(std::move(out), nullptr, "max_rows");
  nodes_[id.id].backprop = [a, id, d, argmax = std::move(argmax)](Tape& t) {
    const Tensor& g = t.nodes_[id.id].grad;
    Tensor& ga = t.grad_mut(a);
    for (std::size_t j = 0; j < d; ++j)
      ga.data[argmax[j] * d + j] += g.data[j];
  };
  return id;
}

void Tape::backward(ValueId loss) {
  const Tensor& lv = value(loss);
  if (!lv.is_scalar())
    throw InvalidArgument("backward: loss node has shape " + lv.shape_str() +
                          ", expected a scalar");
  for (Node& n : nodes_) {
    n.grad = Tensor(n.value.rows(), n.value.cols());
    n.grad.shape = n.value.shape;
  }
  nodes_[loss.id].grad.data[0] = 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;)
    if (nodes_[i].backprop) nodes_[i].backprop(*this);
  has_grads_ = true;
}

double grad_check(const std::function<double(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& params,
                  const std::vector<Tensor>& analytic_grads, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw InvalidArgument("grad_check: epsilon must be in [1e-7, 1e-3]");
  if (params.size() != analytic_grads.size())
    throw InvalidArgument("grad_check: params/grads count mismatch");

  std::vector<Tensor> probe = params;
  double max_rel = 0.0;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    if (probe[t].shape != analytic_grads[t].shape)
      throw InvalidArgument("grad_check: gradient shape mismatch on tensor " +
                            std::to_string(t));
    for (std::size_t i = 0; i < probe[t].size(); ++i) {
      const double saved = probe[t].data[i];
      probe[t].data[i] = saved + epsilon;
      const double f_plus = f(probe);
      probe[t].data[i] = saved - epsilon;
      const double f_minus = f(probe);
      probe[t].data[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        throw NumericalError("grad_check: non-finite objective at probe");
      const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      const double analytic = analytic_grads[t].data[i];
      const double denom =
          std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace pcmorph::ad
