#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pcmorph/loss.hpp"
#include "pcmorph/model.hpp"

namespace pcmorph {

enum class NeighborSource { MeshEdges, Knn };

std::string neighbor_source_name(NeighborSource s);
NeighborSource neighbor_source_from_name(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t iterations = 2000;
  std::size_t points_per_cloud = 1024;  // n; ignored by mesh-edges sources
  double lambda = 0.1;
  NeighborSource neighbor_source = NeighborSource::Knn;
  std::size_t knn_k = 6;
  TopoForm topo_form = TopoForm::Squared;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;  // 0 disables periodic checkpoints
  std::size_t log_every = 10;

  void validate() const;
};

// One prepared training example. Clouds live in normalized space; the
// NormTransform records allow optional denormalization downstream.
struct TrainPair {
  std::string source_path;
  std::string target_path;
  PointCloud source;  // normalized
  PointCloud target;  // normalized
  NormTransform source_norm;
  NormTransform target_norm;
  NeighborGraph graph;  // over source indices
  std::vector<std::int64_t> source_map;
};

enum class PairMode { FixedPair, RandomPairs };

// Pair construction with per-mesh caching. Every mesh loads, samples,
// normalizes and builds its neighbor graph once, at construction; failures
// name the offending file. With the mesh-edges neighbor source the cloud is
// the full vertex set (points_per_cloud does not apply), since the edge
// graph is indexed by vertices.
class PairSet {
 public:
  // One explicit (source, target) pair; (a, a) is allowed.
  static PairSet fixed_pair(const std::string& source_path,
                            const std::string& target_path,
                            const TrainConfig& cfg);
  // All ordered non-self pairs over the .off/.obj files in a directory
  // (sorted by name). Training draws from them uniformly.
  static PairSet random_pairs(const std::string& dataset_dir,
                              const TrainConfig& cfg);
  // In-memory clouds, normalized here; knn neighbor graph on the source.
  static PairSet from_clouds(const PointCloud& source,
                             const PointCloud& target, const TrainConfig& cfg);

  std::size_t size() const { return pairs_.size(); }
  // Materialized copy of pair i, built from the per-mesh cache.
  TrainPair pair(std::size_t i) const;

 private:
  struct MeshEntry {
    std::string path;
    PointCloud cloud;
    NormTransform norm;
    NeighborGraph graph;
    std::vector<std::int64_t> source_map;
  };

  static MeshEntry prepare_mesh(const std::string& path,
                                const TrainConfig& cfg, std::uint64_t seed);

  std::vector<MeshEntry> meshes_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs_;
};

PairSet make_pairs(const std::string& dataset_dir, PairMode mode,
                   const TrainConfig& cfg,
                   const std::string& fixed_source = "",
                   const std::string& fixed_target = "");

// ---- optimizer ------------------------------------------------------------

struct AdamState {
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
  std::size_t step = 0;

  static AdamState like(const ModelParams& params);
};

// Standard Adam with bias correction, in place. Throws NumericalError on a
// non-finite gradient before touching any parameter.
void adam_step(std::vector<ad::Tensor*> params,
               const std::vector<const ad::Tensor*>& grads, AdamState& state,
               const TrainConfig& hyper);

// ---- training loop ----------------------------------------------------------

struct LogEntry {
  std::size_t iteration;
  LossBreakdown loss;
};

struct TrainResult {
  ModelParams params;
  std::vector<LogEntry> log;
  bool halted = false;  // non-finite loss or gradient; params hold the last
                        // good state and the checkpoint on disk matches it
  std::string halt_reason;
};

// Loop: draw pair, unroll on tape, total loss, backward, adam step.
// Iteration i logs the pre-update loss when i % log_every == 0; a final
// entry at iteration == cfg.iterations records the post-training loss.
// When out_dir is nonempty, writes metrics.tsv (iter<TAB>chamfer<TAB>
// topology<TAB>total), periodic checkpoints and final.ckpt there.
TrainResult train(const PairSet& pairs, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::string& out_dir = "");

// Serialized metrics log (exactly what train() writes to metrics.tsv).
std::string format_metrics_log(const std::vector<LogEntry>& log);

// ---- evaluation -------------------------------------------------------------

struct EvalReport {
  double chamfer_final = 0.0;  // CD(frames[T], target)
  double topology = 0.0;
  std::vector<double> frame_cd_to_source;  // per frame, t = 0..T
  std::vector<double> frame_cd_to_target;
};

EvalReport evaluate(const ModelParams& params, const PointCloud& source,
                    const PointCloud& target, const NeighborGraph& graph,
                    TopoForm form = TopoForm::Squared);

// ---- run options (config file + flags) --------------------------------------

// Flat set of knobs a run needs; the CLI overlays file entries with flags.
struct RunOptions {
  TrainConfig train;
  std::size_t model_steps = 4;
  std::size_t model_latent = 128;
  std::size_t model_hidden = 128;
  Activation model_activation = Activation::Tanh;
  bool model_share_steps = false;

  ModelConfig build_model_config() const;
};

// key=value lines, '#' comments, blank lines ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Applies one entry; throws InvalidArgument on unknown keys or bad values.
void apply_config_entry(RunOptions& opts, const std::string& key,
                        const std::string& value);

}  // namespace pcmorph
