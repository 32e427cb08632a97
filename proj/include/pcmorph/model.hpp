#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pcmorph/autodiff.hpp"
#include "pcmorph/geom.hpp"

namespace pcmorph {

enum class Activation { Tanh, Relu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Architecture description. Layer lists give the full width sequence of each
// MLP, e.g. {3, 128, 128} is two dense layers. The step networks take the
// point concatenated with the latent code, so their input width is always
// 3 + latent_dim and their output width 3.
struct ModelConfig {
  std::size_t steps = 4;         // T: number of residual transformations
  std::size_t latent_dim = 128;  // d: target-encoding width
  std::vector<std::size_t> encoder_point_layers{3, 128, 128};
  std::vector<std::size_t> encoder_post_layers{128, 128};
  std::vector<std::size_t> step_layers{131, 128, 128, 3};
  Activation activation = Activation::Tanh;
  bool share_step_weights = false;  // one h shared across all t
  std::uint64_t seed = 0;

  // Standard shapes for a given size: point 3->h->h, post h->d,
  // step (3+d)->h->h->3.
  static ModelConfig make(std::size_t steps = 4, std::size_t latent_dim = 128,
                          std::size_t hidden = 128, std::uint64_t seed = 0);
  void validate() const;
};

// Dense layers; weights[l] is in x out, biases[l] is 1 x out.
struct Mlp {
  std::vector<ad::Tensor> weights;
  std::vector<ad::Tensor> biases;
  std::size_t layer_count() const { return weights.size(); }
};

struct ModelParams {
  ModelConfig config;
  Mlp encoder_point;
  Mlp encoder_post;
  std::vector<Mlp> steps;  // T networks, or 1 when share_step_weights

  const Mlp& step_net(std::size_t t) const {
    return steps[config.share_step_weights ? 0 : t];
  }

  // All tensors in the canonical order used by the optimizer and the
  // checkpoint format: encoder point layers, encoder post layers, then step
  // networks in t order; within a layer, weight before bias.
  std::vector<ad::Tensor*> tensors();
  std::vector<const ad::Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
  void validate() const;
};

// Xavier-uniform hidden layers from a generator seeded by config.seed; zero
// biases. The final layer of every step network is zeroed entirely, so a
// fresh model is the identity map; the encoder output layer is also zeroed,
// so conditioning starts at z = 0 and grows only as training needs it
// (which avoids dragging the step networks behind a drifting latent).
ModelParams init_params(const ModelConfig& config);

// Sequence of point clouds X^0 .. X^T sharing length and index
// correspondence; frames[0] is the source cloud, bit for bit.
struct Trajectory {
  std::vector<PointCloud> frames;
  std::size_t step_count() const { return frames.size() - 1; }
};

// Deep Sets target encoding: postMLP(mean_i pointMLP(p_i)), 1 x d.
// Accumulation over points runs in ascending index order, so the value is
// deterministic for a fixed input and permutation-invariant to ~1e-9.
ad::Tensor encode(const ModelParams& params, const PointCloud& xb);

// Displacement h_t(p, z) for one point. Points are independent: evaluating
// a batch row by row gives bit-identical results.
Point3 step_displacement(const ModelParams& params, std::size_t t,
                         const Point3& p, const ad::Tensor& latent);

// frames[t+1][i] = frames[t][i] + h_t(frames[t][i], E(Xb)). The encoding is
// computed once from the clean target. Matches the tape route bit for bit.
Trajectory unroll(const ModelParams& params, const PointCloud& xa,
                  const PointCloud& xb);

// ---- training-side graph construction ------------------------------------

// Parameter leaves registered on a tape, in ModelParams::tensors() order.
struct TapeParams {
  std::vector<ad::ValueId> flat;
  std::vector<std::pair<ad::ValueId, ad::ValueId>> point_layers;
  std::vector<std::pair<ad::ValueId, ad::ValueId>> post_layers;
  std::vector<std::vector<std::pair<ad::ValueId, ad::ValueId>>> step_nets;
};

TapeParams bind_params(ad::Tape& tape, const ModelParams& params);

// Batch MLP on tape: x is n x in; activation after every layer except
// optionally the last.
ad::ValueId mlp_on_tape(ad::Tape& tape,
                        const std::vector<std::pair<ad::ValueId, ad::ValueId>>&
                            layers,
                        ad::ValueId x, Activation activation,
                        bool activate_last);

ad::ValueId encode_on_tape(ad::Tape& tape, const TapeParams& tp,
                           Activation activation, ad::ValueId xb);

// Returns T+1 frame nodes (frames[0] == xa leaf).
std::vector<ad::ValueId> unroll_on_tape(ad::Tape& tape,
                                        const ModelConfig& config,
                                        const TapeParams& tp, ad::ValueId xa,
                                        ad::ValueId latent);

// ---- checkpoint i/o -------------------------------------------------------
//
// Binary layout: magic "PCMORPH1", then a u64-LE-length-prefixed UTF-8
// header of key=value lines carrying the config, then a u64 LE tensor
// count, then each tensor in canonical order as (u64 name length, name
// bytes, u64 rank, u64 dims..., f64 values), all little-endian. Round-trips
// are bit-exact.

std::string save_checkpoint(const ModelParams& params);
ModelParams load_checkpoint(const std::string& bytes);

}  // namespace pcmorph
