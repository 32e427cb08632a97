#include <cmath>
#include <cstring>

#include "pcmorph/kernels.hpp"
#include "pcmorph/model.hpp"
#include "pcmorph/rng.hpp"

namespace pcmorph {

std::string activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw InvalidArgument("unknown activation '" + name +
                        "' (expected tanh or relu)");
}

ModelConfig ModelConfig::make(std::size_t steps, std::size_t latent_dim,
                              std::size_t hidden, std::uint64_t seed) {
  ModelConfig c;
  c.steps = steps;
  c.latent_dim = latent_dim;
  c.encoder_point_layers = {3, hidden, hidden};
  c.encoder_post_layers = {hidden, latent_dim};
  c.step_layers = {3 + latent_dim, hidden, hidden, 3};
  c.seed = seed;
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (steps < 1) throw InvalidArgument("model config: steps must be >= 1");
  if (latent_dim < 1)
    throw InvalidArgument("model config: latent_dim must be >= 1");
  auto check_layers = [](const char* name,
                         const std::vector<std::size_t>& layers) {
    if (layers.size() < 2)
      throw InvalidArgument(std::string("model config: ") + name +
                            " needs at least one layer");
    for (std::size_t w : layers)
      if (w < 1)
        throw InvalidArgument(std::string("model config: ") + name +
                              " has a zero width");
  };
  check_layers("encoder_point_layers", encoder_point_layers);
  check_layers("encoder_post_layers", encoder_post_layers);
  check_layers("step_layers", step_layers);
  if (encoder_point_layers.front() != 3)
    throw InvalidArgument("model config: encoder point MLP must take 3 inputs");
  if (encoder_post_layers.front() != encoder_point_layers.back())
    throw InvalidArgument(
        "model config: encoder post MLP input must match point MLP output");
  if (encoder_post_layers.back() != latent_dim)
    throw InvalidArgument(
        "model config: encoder post MLP output must equal latent_dim");
  if (step_layers.front() != 3 + latent_dim)
    throw InvalidArgument(
        "model config: step MLP input width must be 3 + latent_dim");
  if (step_layers.back() != 3)
    throw InvalidArgument("model config: step MLP output width must be 3");
}

std::vector<ad::Tensor*> ModelParams::tensors() {
  std::vector<ad::Tensor*> out;
  auto push_mlp = [&out](Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
      out.push_back(&mlp.weights[l]);
      out.push_back(&mlp.biases[l]);
    }
  };
  push_mlp(encoder_point);
  push_mlp(encoder_post);
  for (Mlp& net : steps) push_mlp(net);
  return out;
}

std::vector<const ad::Tensor*> ModelParams::tensors() const {
  auto mutable_view = const_cast<ModelParams*>(this)->tensors();
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> out;
  auto push_mlp = [&out](const std::string& prefix, const Mlp& mlp) {
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
      out.push_back(prefix + "." + std::to_string(l) + ".weight");
      out.push_back(prefix + "." + std::to_string(l) + ".bias");
    }
  };
  push_mlp("encoder.point", encoder_point);
  push_mlp("encoder.post", encoder_post);
  for (std::size_t t = 0; t < steps.size(); ++t)
    push_mlp("step." + std::to_string(t), steps[t]);
  return out;
}

void ModelParams::validate() const {
  config.validate();
  auto check_mlp = [](const char* name, const Mlp& mlp,
                      const std::vector<std::size_t>& layers) {
    if (mlp.weights.size() + 1 != layers.size() ||
        mlp.biases.size() + 1 != layers.size())
      throw InvalidArgument(std::string("model params: ") + name +
                            " layer count mismatch");
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      if (mlp.weights[l].rows() != layers[l] ||
          mlp.weights[l].cols() != layers[l + 1])
        throw InvalidArgument(std::string("model params: ") + name +
                              " weight shape mismatch at layer " +
                              std::to_string(l));
      if (mlp.biases[l].rows() != 1 || mlp.biases[l].cols() != layers[l + 1])
        throw InvalidArgument(std::string("model params: ") + name +
                              " bias shape mismatch at layer " +
                              std::to_string(l));
      mlp.weights[l].check_finite("params");
      mlp.biases[l].check_finite("params");
    }
  };
  check_mlp("encoder point", encoder_point, config.encoder_point_layers);
  check_mlp("encoder post", encoder_post, config.encoder_post_layers);
  const std::size_t expected =
      config.share_step_weights ? 1 : config.steps;
  if (steps.size() != expected)
    throw InvalidArgument("model params: expected " +
                          std::to_string(expected) + " step networks, have " +
                          std::to_string(steps.size()));
  for (const Mlp& net : steps) check_mlp("step", net, config.step_layers);
}

namespace {

Mlp init_mlp(const std::vector<std::size_t>& layers, Rng& rng,
             bool zero_final) {
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const std::size_t fan_in = layers[l];
    const std::size_t fan_out = layers[l + 1];
    ad::Tensor w(fan_in, fan_out);
    const bool zero = zero_final && l + 2 == layers.size();
    if (!zero) {
      const double bound =
          std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (double& v : w.data) v = rng.uniform(-bound, bound);
    }
    mlp.weights.push_back(std::move(w));
    mlp.biases.emplace_back(1, fan_out);  // biases start at zero
  }
  return mlp;
}

}  // namespace

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  ModelParams params;
  params.config = config;
  Rng rng(config.seed);
  params.encoder_point = init_mlp(config.encoder_point_layers, rng, false);
  params.encoder_post = init_mlp(config.encoder_post_layers, rng, true);
  const std::size_t nets = config.share_step_weights ? 1 : config.steps;
  for (std::size_t t = 0; t < nets; ++t)
    params.steps.push_back(init_mlp(config.step_layers, rng, true));
  return params;
}

namespace {

// Plain batch dense layer, mirroring the tape ops operation for operation
// (matmul, then elementwise add of a row-broadcast bias) so inference and
// training produce bit-identical values.
ad::Tensor dense_forward(const ad::Tensor& x, const ad::Tensor& w,
                         const ad::Tensor& b) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  if (in != w.rows())
    throw InvalidArgument("dense: shape mismatch " + x.shape_str() + " vs " +
                          w.shape_str());
  ad::Tensor y(n, out);
  kern::active().matmul(x.data.data(), w.data.data(), y.data.data(), n, in,
                        out);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out; ++j) y.data[i * out + j] += b.data[j];
  return y;
}

void apply_activation(ad::Tensor& t, Activation a) {
  if (a == Activation::Tanh) {
    for (double& v : t.data) v = std::tanh(v);
  } else {
    for (double& v : t.data) v = v > 0.0 ? v : 0.0;
  }
}

ad::Tensor mlp_forward(const Mlp& mlp, ad::Tensor x, Activation activation,
                       bool activate_last) {
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    x = dense_forward(x, mlp.weights[l], mlp.biases[l]);
    if (activate_last || l + 1 < mlp.layer_count())
      apply_activation(x, activation);
    x.check_finite("mlp");
  }
  return x;
}

}  // namespace

ad::Tensor encode(const ModelParams& params, const PointCloud& xb) {
  xb.validate();
  const ad::Tensor features = mlp_forward(
      params.encoder_point, ad::Tensor::from_cloud(xb), params.config.activation,
      /*activate_last=*/true);
  // Mean pool over points, ascending index.
  const std::size_t n = features.rows(), d = features.cols();
  ad::Tensor pooled(1, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) pooled.data[j] += features.data[i * d + j];
  for (std::size_t j = 0; j < d; ++j)
    pooled.data[j] /= static_cast<double>(n);
  return mlp_forward(params.encoder_post, std::move(pooled),
                     params.config.activation, /*activate_last=*/false);
}

Point3 step_displacement(const ModelParams& params, std::size_t t,
                         const Point3& p, const ad::Tensor& latent) {
  if (t >= params.config.steps)
    throw InvalidArgument("step: t = " + std::to_string(t) +
                          " out of range (T = " +
                          std::to_string(params.config.steps) + ")");
  if (latent.rows() != 1 || latent.cols() != params.config.latent_dim)
    throw InvalidArgument("step: latent has shape " + latent.shape_str());
  ad::Tensor input(1, 3 + params.config.latent_dim);
  input.data[0] = p.x;
  input.data[1] = p.y;
  input.data[2] = p.z;
  std::memcpy(&input.data[3], latent.data.data(),
              params.config.latent_dim * sizeof(double));
  const ad::Tensor out =
      mlp_forward(params.step_net(t), std::move(input),
                  params.config.activation, /*activate_last=*/false);
  return {out.data[0], out.data[1], out.data[2]};
}

Trajectory unroll(const ModelParams& params, const PointCloud& xa,
                  const PointCloud& xb) {
  params.validate();
  xa.validate();
  const ad::Tensor latent = encode(params, xb);
  const std::size_t n = xa.size();
  const std::size_t d = params.config.latent_dim;

  Trajectory traj;
  traj.frames.reserve(params.config.steps + 1);
  traj.frames.push_back(xa);

  ad::Tensor current = ad::Tensor::from_cloud(xa);
  for (std::size_t t = 0; t < params.config.steps; ++t) {
    // concat(points, broadcast latent), as on the tape.
    ad::Tensor input(n, 3 + d);
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(&input.data[i * (3 + d)], &current.data[i * 3],
                  3 * sizeof(double));
      std::memcpy(&input.data[i * (3 + d) + 3], latent.data.data(),
                  d * sizeof(double));
    }
    const ad::Tensor disp =
        mlp_forward(params.step_net(t), std::move(input),
                    params.config.activation, /*activate_last=*/false);
    kern::active().add(current.data.data(), disp.data.data(),
                       current.data.data(), current.size());
    current.check_finite("unroll");
    traj.frames.push_back(current.to_cloud());
  }
  return traj;
}

// ---- tape construction ------------------------------------------------------

TapeParams bind_params(ad::Tape& tape, const ModelParams& params) {
  TapeParams tp;
  auto bind_mlp = [&](const Mlp& mlp)
      -> std::vector<std::pair<ad::ValueId, ad::ValueId>> {
    std::vector<std::pair<ad::ValueId, ad::ValueId>> layers;
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
      const ad::ValueId w = tape.leaf(mlp.weights[l]);
      const ad::ValueId b = tape.leaf(mlp.biases[l]);
      tp.flat.push_back(w);
      tp.flat.push_back(b);
      layers.emplace_back(w, b);
    }
    return layers;
  };
  tp.point_layers = bind_mlp(params.encoder_point);
  tp.post_layers = bind_mlp(params.encoder_post);
  for (const Mlp& net : params.steps) tp.step_nets.push_back(bind_mlp(net));
  return tp;
}

ad::ValueId mlp_on_tape(
    ad::Tape& tape,
    const std::vector<std::pair<ad::ValueId, ad::ValueId>>& layers,
    ad::ValueId x, Activation activation, bool activate_last) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t n = tape.value(x).rows();
    x = tape.add(tape.matmul(x, layers[l].first),
                 tape.broadcast_rows(layers[l].second, n));
    if (activate_last || l + 1 < layers.size())
      x = activation == Activation::Tanh ? tape.tanh(x) : tape.relu(x);
  }
  return x;
}

ad::ValueId encode_on_tape(ad::Tape& tape, const TapeParams& tp,
                           Activation activation, ad::ValueId xb) {
  const ad::ValueId features =
      mlp_on_tape(tape, tp.point_layers, xb, activation, true);
  const ad::ValueId pooled = tape.mean_rows(features);
  return mlp_on_tape(tape, tp.post_layers, pooled, activation, false);
}

std::vector<ad::ValueId> unroll_on_tape(ad::Tape& tape,
                                        const ModelConfig& config,
                                        const TapeParams& tp, ad::ValueId xa,
                                        ad::ValueId latent) {
  std::vector<ad::ValueId> frames{xa};
  ad::ValueId current = xa;
  const std::size_t n = tape.value(xa).rows();
  for (std::size_t t = 0; t < config.steps; ++t) {
    const auto& net =
        tp.step_nets[config.share_step_weights ? 0 : t];
    const ad::ValueId input =
        tape.concat_cols(current, tape.broadcast_rows(latent, n));
    const ad::ValueId disp =
        mlp_on_tape(tape, net, input, config.activation, false);
    current = tape.add(current, disp);
    frames.push_back(current);
  }
  return frames;
}

}  // namespace pcmorph
