#include <algorithm>
#include <cmath>
#include <functional>

#include "pcmorph/gradcheck_suite.hpp"
#include "pcmorph/loss.hpp"
#include "pcmorph/model.hpp"
#include "pcmorph/rng.hpp"
#include "pcmorph/train.hpp"

namespace pcmorph {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& c : components) w = std::max(w, c.max_rel_error);
  return w;
}

bool GradCheckReport::all_within(double tol) const {
  for (const auto& c : components)
    if (!(c.max_rel_error <= tol)) return false;
  return true;
}

namespace {

constexpr double kEps = 1e-5;

using ad::Tape;
using ad::Tensor;
using ad::ValueId;

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo,
                     double hi) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero, for relu probes away from the kink.
Tensor random_tensor_no_kink(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t(rows, cols);
  for (double& v : t.data) {
    const double mag = rng.uniform(0.1, 2.0);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return t;
}

// Per-column argmax made unambiguous so finite differences cannot flip it.
Tensor random_tensor_clear_max(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor t = random_tensor(rng, rows, cols, -2.0, 2.0);
  for (std::size_t j = 0; j < cols; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < rows; ++i)
      if (t.data[i * cols + j] > t.data[arg * cols + j]) arg = i;
    t.data[arg * cols + j] += 1.0;
  }
  return t;
}

// Checks one op: builds loss = sum(mul(op(inputs), weights)) with fixed
// random weights, compares tape gradients of the inputs against central
// finite differences.
double check_op(
    Rng& rng, std::size_t probes,
    const std::function<std::vector<Tensor>(Rng&)>& sample_inputs,
    const std::function<ValueId(Tape&, const std::vector<ValueId>&)>& build) {
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::vector<Tensor> inputs = sample_inputs(rng);

    // Shape of the op output defines the weighting tensor.
    Tensor weights;
    {
      Tape probe_tape;
      std::vector<ValueId> ids;
      for (const Tensor& t : inputs) ids.push_back(probe_tape.leaf(t));
      const Tensor& out = probe_tape.value(build(probe_tape, ids));
      weights = random_tensor(rng, out.rows(), out.cols(), -1.0, 1.0);
    }

    const auto eval = [&](const std::vector<Tensor>& params,
                          std::vector<Tensor>* grads_out) {
      Tape tape;
      std::vector<ValueId> ids;
      for (const Tensor& t : params) ids.push_back(tape.leaf(t));
      const ValueId w = tape.leaf(weights);
      const ValueId loss = tape.sum(tape.mul(build(tape, ids), w));
      if (grads_out) {
        tape.backward(loss);
        grads_out->clear();
        for (ValueId id : ids) grads_out->push_back(tape.grad(id));
      }
      return tape.value(loss).data[0];
    };

    std::vector<Tensor> analytic;
    eval(inputs, &analytic);
    const double err = ad::grad_check(
        [&](const std::vector<Tensor>& p) { return eval(p, nullptr); }, inputs,
        analytic, kEps);
    worst = std::max(worst, err);
  }
  return worst;
}

std::function<std::vector<Tensor>(Rng&)> two_of(std::size_t r, std::size_t c) {
  return [r, c](Rng& rng) {
    return std::vector<Tensor>{random_tensor(rng, r, c, -2.0, 2.0),
                               random_tensor(rng, r, c, -2.0, 2.0)};
  };
}

std::function<std::vector<Tensor>(Rng&)> one_of(std::size_t r, std::size_t c) {
  return [r, c](Rng& rng) {
    return std::vector<Tensor>{random_tensor(rng, r, c, -2.0, 2.0)};
  };
}

// All model tensors randomized (including the step final layers, which
// init_params zeroes; a zero layer would make most step gradients vanish
// and the check vacuous).
ModelParams random_params(const ModelConfig& config, Rng& rng) {
  ModelParams params = init_params(config);
  for (Tensor* t : params.tensors())
    for (double& v : t->data) v = rng.uniform(-0.7, 0.7);
  return params;
}

PointCloud random_cloud(Rng& rng, std::size_t n) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back(
        {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
  return c;
}

// Replace a params object's tensors from a flat list (grad_check probes).
void assign_tensors(ModelParams& params, const std::vector<Tensor>& flat) {
  auto targets = params.tensors();
  for (std::size_t i = 0; i < targets.size(); ++i) *targets[i] = flat[i];
}

std::vector<Tensor> snapshot_tensors(const ModelParams& params) {
  std::vector<Tensor> out;
  for (const Tensor* t : params.tensors()) out.push_back(*t);
  return out;
}

double check_encoder(Rng& rng, std::size_t probes) {
  const ModelConfig config = ModelConfig::make(2, 6, 6, 0);
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    ModelParams base = random_params(config, rng);
    const PointCloud xb = random_cloud(rng, 5);
    // Only the encoder tensors are probed; step nets do not touch this loss.
    const std::size_t encoder_count =
        2 * (base.encoder_point.layer_count() + base.encoder_post.layer_count());

    const auto eval = [&](const std::vector<Tensor>& enc_tensors,
                          std::vector<Tensor>* grads_out) {
      ModelParams params = base;
      auto targets = params.tensors();
      for (std::size_t i = 0; i < encoder_count; ++i)
        *targets[i] = enc_tensors[i];
      Tape tape;
      const TapeParams tp = bind_params(tape, params);
      const ValueId xb_leaf = tape.leaf(Tensor::from_cloud(xb));
      const ValueId z = encode_on_tape(tape, tp, config.activation, xb_leaf);
      const ValueId loss = tape.sum(tape.square(z));
      if (grads_out) {
        tape.backward(loss);
        grads_out->clear();
        for (std::size_t i = 0; i < encoder_count; ++i)
          grads_out->push_back(tape.grad(tp.flat[i]));
      }
      return tape.value(loss).data[0];
    };

    std::vector<Tensor> enc_tensors = snapshot_tensors(base);
    enc_tensors.resize(encoder_count);
    std::vector<Tensor> analytic;
    eval(enc_tensors, &analytic);
    const double err = ad::grad_check(
        [&](const std::vector<Tensor>& t) { return eval(t, nullptr); },
        enc_tensors, analytic, kEps);
    worst = std::max(worst, err);
  }
  return worst;
}

double check_step_mlp(Rng& rng, std::size_t probes) {
  const ModelConfig config = ModelConfig::make(1, 6, 6, 0);
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    ModelParams base = random_params(config, rng);
    const std::size_t encoder_count =
        2 * (base.encoder_point.layer_count() + base.encoder_post.layer_count());
    const std::size_t total_count = base.tensors().size();

    // Probed tensors: the step net, the point batch, and the latent row.
    const PointCloud x = random_cloud(rng, 4);
    const Tensor latent = random_tensor(rng, 1, config.latent_dim, -1.0, 1.0);

    const auto eval = [&](const std::vector<Tensor>& probe_tensors,
                          std::vector<Tensor>* grads_out) {
      ModelParams params = base;
      auto targets = params.tensors();
      for (std::size_t i = encoder_count; i < total_count; ++i)
        *targets[i] = probe_tensors[i - encoder_count];
      Tape tape;
      const TapeParams tp = bind_params(tape, params);
      const ValueId points =
          tape.leaf(probe_tensors[total_count - encoder_count]);
      const ValueId z = tape.leaf(probe_tensors[total_count - encoder_count + 1]);
      const std::size_t n = tape.value(points).rows();
      const ValueId input = tape.concat_cols(points, tape.broadcast_rows(z, n));
      const ValueId disp =
          mlp_on_tape(tape, tp.step_nets[0], input, config.activation, false);
      const ValueId loss = tape.sum(tape.square(disp));
      if (grads_out) {
        tape.backward(loss);
        grads_out->clear();
        for (std::size_t i = encoder_count; i < total_count; ++i)
          grads_out->push_back(tape.grad(tp.flat[i]));
        grads_out->push_back(tape.grad(points));
        grads_out->push_back(tape.grad(z));
      }
      return tape.value(loss).data[0];
    };

    std::vector<Tensor> all = snapshot_tensors(base);
    std::vector<Tensor> probe_tensors(all.begin() + encoder_count, all.end());
    probe_tensors.push_back(Tensor::from_cloud(x));
    probe_tensors.push_back(latent);
    std::vector<Tensor> analytic;
    eval(probe_tensors, &analytic);
    const double err = ad::grad_check(
        [&](const std::vector<Tensor>& t) { return eval(t, nullptr); },
        probe_tensors, analytic, kEps);
    worst = std::max(worst, err);
  }
  return worst;
}

double check_total_loss(Rng& rng, std::size_t probes) {
  const ModelConfig config = ModelConfig::make(2, 4, 5, 0);
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    ModelParams base = random_params(config, rng);
    const PointCloud xa = random_cloud(rng, 6);
    const PointCloud xb = random_cloud(rng, 7);
    const NeighborGraph graph = knn_graph(xa, 2);
    const double lambda = 0.3;

    // Assignments frozen at the probe point, as in training backward.
    ChamferResult frozen;
    {
      const Trajectory traj = unroll(base, xa, xb);
      frozen = chamfer(traj.frames.back(), xb);
    }

    const auto eval = [&](const std::vector<Tensor>& flat,
                          std::vector<Tensor>* grads_out) {
      ModelParams params = base;
      assign_tensors(params, flat);
      Tape tape;
      const TapeParams tp = bind_params(tape, params);
      const ValueId xa_leaf = tape.leaf(Tensor::from_cloud(xa));
      const ValueId xb_leaf = tape.leaf(Tensor::from_cloud(xb));
      const ValueId z = encode_on_tape(tape, tp, config.activation, xb_leaf);
      const auto frames = unroll_on_tape(tape, config, tp, xa_leaf, z);
      const LossNodes loss =
          total_loss_on_tape(tape, frames.back(), xb_leaf, xa, xb, graph,
                             lambda, TopoForm::Squared, &frozen);
      if (grads_out) {
        tape.backward(loss.total);
        grads_out->clear();
        for (ValueId id : tp.flat) grads_out->push_back(tape.grad(id));
      }
      return tape.value(loss.total).data[0];
    };

    const std::vector<Tensor> flat = snapshot_tensors(base);
    std::vector<Tensor> analytic;
    eval(flat, &analytic);
    const double err = ad::grad_check(
        [&](const std::vector<Tensor>& t) { return eval(t, nullptr); }, flat,
        analytic, kEps);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

GradCheckReport run_gradcheck_suite(std::uint64_t seed, std::size_t probes) {
  GradCheckReport report;
  Rng rng(split_seed(seed, 0x47524144ull));
  auto add = [&report](const std::string& name, double err) {
    report.components.push_back({name, err});
  };

  add("add", check_op(rng, probes, two_of(3, 4),
                      [](Tape& t, const std::vector<ValueId>& in) {
                        return t.add(in[0], in[1]);
                      }));
  add("sub", check_op(rng, probes, two_of(3, 4),
                      [](Tape& t, const std::vector<ValueId>& in) {
                        return t.sub(in[0], in[1]);
                      }));
  add("mul", check_op(rng, probes, two_of(3, 4),
                      [](Tape& t, const std::vector<ValueId>& in) {
                        return t.mul(in[0], in[1]);
                      }));
  add("scale", check_op(rng, probes, one_of(3, 4),
                        [](Tape& t, const std::vector<ValueId>& in) {
                          return t.scale(in[0], 1.7);
                        }));
  add("div_scalar", check_op(rng, probes, one_of(3, 4),
                             [](Tape& t, const std::vector<ValueId>& in) {
                               return t.div_scalar(in[0], -2.3);
                             }));
  add("matmul",
      check_op(rng, probes,
               [](Rng& r) {
                 return std::vector<Tensor>{random_tensor(r, 3, 4, -2.0, 2.0),
                                            random_tensor(r, 4, 2, -2.0, 2.0)};
               },
               [](Tape& t, const std::vector<ValueId>& in) {
                 return t.matmul(in[0], in[1]);
               }));
  add("concat_cols",
      check_op(rng, probes,
               [](Rng& r) {
                 return std::vector<Tensor>{random_tensor(r, 3, 2, -2.0, 2.0),
                                            random_tensor(r, 3, 4, -2.0, 2.0)};
               },
               [](Tape& t, const std::vector<ValueId>& in) {
                 return t.concat_cols(in[0], in[1]);
               }));
  add("broadcast_rows", check_op(rng, probes, one_of(1, 4),
                                 [](Tape& t, const std::vector<ValueId>& in) {
                                   return t.broadcast_rows(in[0], 5);
                                 }));
  add("gather_rows",
      check_op(rng, probes, one_of(4, 3),
               [](Tape& t, const std::vector<ValueId>& in) {
                 // Repeated indices exercise scatter-add accumulation.
                 return t.gather_rows(in[0], {2, 0, 2, 3, 1, 0});
               }));
  add("relu",
      check_op(rng, probes,
               [](Rng& r) {
                 return std::vector<Tensor>{random_tensor_no_kink(r, 3, 4)};
               },
               [](Tape& t, const std::vector<ValueId>& in) {
                 return t.relu(in[0]);
               }));
  add("tanh", check_op(rng, probes, one_of(3, 4),
                       [](Tape& t, const std::vector<ValueId>& in) {
                         return t.tanh(in[0]);
                       }));
  add("square", check_op(rng, probes, one_of(3, 4),
                         [](Tape& t, const std::vector<ValueId>& in) {
                           return t.square(in[0]);
                         }));
  add("sum", check_op(rng, probes, one_of(3, 4),
                      [](Tape& t, const std::vector<ValueId>& in) {
                        return t.sum(in[0]);
                      }));
  add("mean", check_op(rng, probes, one_of(3, 4),
                       [](Tape& t, const std::vector<ValueId>& in) {
                         return t.mean(in[0]);
                       }));
  add("row_sums", check_op(rng, probes, one_of(4, 3),
                           [](Tape& t, const std::vector<ValueId>& in) {
                             return t.row_sums(in[0]);
                           }));
  add("mean_rows", check_op(rng, probes, one_of(5, 3),
                            [](Tape& t, const std::vector<ValueId>& in) {
                              return t.mean_rows(in[0]);
                            }));
  add("max_rows",
      check_op(rng, probes,
               [](Rng& r) {
                 return std::vector<Tensor>{random_tensor_clear_max(r, 5, 3)};
               },
               [](Tape& t, const std::vector<ValueId>& in) {
                 return t.max_rows(in[0]);
               }));

  add("encoder", check_encoder(rng, probes));
  add("step_mlp", check_step_mlp(rng, probes));
  add("total_loss", check_total_loss(rng, probes));
  return report;
}

}  // namespace pcmorph
