#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "pcmorph/kernels.hpp"
#include "pcmorph/rng.hpp"
#include "pcmorph/train.hpp"

namespace fs = std::filesystem;

namespace pcmorph {

std::string neighbor_source_name(NeighborSource s) {
  return s == NeighborSource::MeshEdges ? "mesh-edges" : "knn";
}

NeighborSource neighbor_source_from_name(const std::string& name) {
  if (name == "mesh-edges" || name == "mesh") return NeighborSource::MeshEdges;
  if (name == "knn") return NeighborSource::Knn;
  throw InvalidArgument("unknown neighbor source '" + name +
                        "' (expected mesh-edges or knn)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw InvalidArgument("train config: learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw InvalidArgument("train config: betas must be in (0, 1)");
  if (!(adam_eps > 0.0))
    throw InvalidArgument("train config: adam_eps must be > 0");
  if (points_per_cloud < 2)
    throw InvalidArgument("train config: points_per_cloud must be >= 2");
  if (lambda < 0.0) throw InvalidArgument("train config: lambda must be >= 0");
  if (neighbor_source == NeighborSource::Knn && knn_k < 1)
    throw InvalidArgument("train config: knn_k must be >= 1");
}

// ---- PairSet ---------------------------------------------------------------

PairSet::MeshEntry PairSet::prepare_mesh(const std::string& path,
                                         const TrainConfig& cfg,
                                         std::uint64_t seed) {
  MeshEntry entry;
  entry.path = path;
  TriMesh mesh;
  try {
    mesh = load_mesh_file(path);
  } catch (const Error& e) {
    throw InvalidArgument("pair set: cannot load mesh '" + path +
                          "': " + e.what());
  }

  // The mesh-edge graph is indexed by vertices, so that source uses the full
  // vertex set; knn samples to the configured count when possible.
  std::size_t n = cfg.points_per_cloud;
  if (cfg.neighbor_source == NeighborSource::MeshEdges ||
      mesh.vertices.size() < 2)
    n = mesh.vertices.size();

  SampleResult sampled = sample_points(mesh, n, seed);
  auto [cloud, norm] = normalize_unit_sphere(sampled.cloud);
  entry.cloud = std::move(cloud);
  entry.norm = norm;
  entry.source_map = std::move(sampled.source_map);

  try {
    if (cfg.neighbor_source == NeighborSource::MeshEdges) {
      entry.graph = mesh_edge_graph(mesh);
    } else {
      const std::size_t k = std::min(cfg.knn_k, entry.cloud.size() - 1);
      entry.graph = knn_graph(entry.cloud, k);
    }
  } catch (const Error& e) {
    throw InvalidArgument("pair set: neighbor graph failed for '" + path +
                          "': " + e.what());
  }
  entry.graph.validate();
  return entry;
}

PairSet PairSet::fixed_pair(const std::string& source_path,
                            const std::string& target_path,
                            const TrainConfig& cfg) {
  cfg.validate();
  PairSet set;
  set.meshes_.push_back(prepare_mesh(source_path, cfg, split_seed(cfg.seed, 0)));
  if (target_path == source_path) {
    set.pairs_.emplace_back(0, 0);  // identity-learning sanity task
  } else {
    set.meshes_.push_back(
        prepare_mesh(target_path, cfg, split_seed(cfg.seed, 1)));
    set.pairs_.emplace_back(0, 1);
  }
  return set;
}

PairSet PairSet::random_pairs(const std::string& dataset_dir,
                              const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::string> paths;
  if (!fs::is_directory(dataset_dir))
    throw InvalidArgument("pair set: '" + dataset_dir +
                          "' is not a directory");
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    for (char& c : ext)
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".off" || ext == ".obj") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.size() < 2)
    throw InvalidArgument("pair set: directory '" + dataset_dir +
                          "' needs at least 2 meshes, found " +
                          std::to_string(paths.size()));

  PairSet set;
  for (std::size_t i = 0; i < paths.size(); ++i)
    set.meshes_.push_back(prepare_mesh(paths[i], cfg, split_seed(cfg.seed, i)));
  for (std::uint32_t a = 0; a < paths.size(); ++a)
    for (std::uint32_t b = 0; b < paths.size(); ++b)
      if (a != b) set.pairs_.emplace_back(a, b);
  return set;
}

PairSet PairSet::from_clouds(const PointCloud& source,
                             const PointCloud& target,
                             const TrainConfig& cfg) {
  cfg.validate();
  PairSet set;
  for (const PointCloud* cloud : {&source, &target}) {
    MeshEntry entry;
    entry.path = "<memory>";
    auto [normalized, norm] = normalize_unit_sphere(*cloud);
    entry.cloud = std::move(normalized);
    entry.norm = norm;
    entry.source_map.resize(entry.cloud.size());
    for (std::size_t i = 0; i < entry.cloud.size(); ++i)
      entry.source_map[i] = static_cast<std::int64_t>(i);
    const std::size_t k = std::min(cfg.knn_k, entry.cloud.size() - 1);
    entry.graph = knn_graph(entry.cloud, k);
    set.meshes_.push_back(std::move(entry));
  }
  set.pairs_.emplace_back(0, 1);
  return set;
}

TrainPair PairSet::pair(std::size_t i) const {
  if (i >= pairs_.size())
    throw InvalidArgument("pair set: index out of range");
  const MeshEntry& src = meshes_[pairs_[i].first];
  const MeshEntry& tgt = meshes_[pairs_[i].second];
  TrainPair view;
  view.source_path = src.path;
  view.target_path = tgt.path;
  view.source = src.cloud;
  view.target = tgt.cloud;
  view.source_norm = src.norm;
  view.target_norm = tgt.norm;
  view.graph = src.graph;
  view.source_map = src.source_map;
  return view;
}

PairSet make_pairs(const std::string& dataset_dir, PairMode mode,
                   const TrainConfig& cfg, const std::string& fixed_source,
                   const std::string& fixed_target) {
  if (mode == PairMode::RandomPairs)
    return PairSet::random_pairs(dataset_dir, cfg);
  if (fixed_source.empty() || fixed_target.empty())
    throw InvalidArgument("make_pairs: fixed-pair mode needs two mesh paths");
  return PairSet::fixed_pair(fixed_source, fixed_target, cfg);
}

// ---- Adam -------------------------------------------------------------------

AdamState AdamState::like(const ModelParams& params) {
  AdamState state;
  for (const ad::Tensor* t : params.tensors()) {
    state.m.emplace_back(t->rows(), t->cols());
    state.v.emplace_back(t->rows(), t->cols());
  }
  return state;
}

void adam_step(std::vector<ad::Tensor*> params,
               const std::vector<const ad::Tensor*>& grads, AdamState& state,
               const TrainConfig& hyper) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw InvalidArgument("adam_step: tensor count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t]->shape != params[t]->shape)
      throw InvalidArgument("adam_step: gradient shape mismatch on tensor " +
                            std::to_string(t));
    for (double g : grads[t]->data)
      if (!std::isfinite(g))
        throw NumericalError("adam_step: non-finite gradient on tensor " +
                             std::to_string(t));
  }
  state.step += 1;
  const double corr1 =
      1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double corr2 =
      1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t)
    kern::active().adam_update(params[t]->data.data(), grads[t]->data.data(),
                               state.m[t].data.data(), state.v[t].data.data(),
                               params[t]->size(), hyper.learning_rate,
                               hyper.beta1, hyper.beta2, hyper.adam_eps, corr1,
                               corr2);
}

// ---- training loop ------------------------------------------------------------

std::string format_metrics_log(const std::vector<LogEntry>& log) {
  std::string out;
  char buf[160];
  for (const LogEntry& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\t%.17g\n", e.iteration,
                  e.loss.chamfer, e.loss.topology, e.loss.total);
    out += buf;
  }
  return out;
}

namespace {

void write_checkpoint_file(const std::string& out_dir, const std::string& name,
                           const ModelParams& params) {
  write_file((fs::path(out_dir) / name).string(), save_checkpoint(params));
}

}  // namespace

TrainResult train(const PairSet& pairs, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::string& out_dir) {
  model_cfg.validate();
  cfg.validate();
  if (pairs.size() == 0) throw InvalidArgument("train: empty pair set");
  if (!out_dir.empty()) fs::create_directories(out_dir);

  TrainResult result;
  result.params = init_params(model_cfg);
  AdamState adam = AdamState::like(result.params);
  Rng pair_rng(split_seed(cfg.seed, 0x5041495253ull));  // pair draws

  auto flush_outputs = [&](bool final_ckpt) {
    if (out_dir.empty()) return;
    write_file((fs::path(out_dir) / "metrics.tsv").string(),
               format_metrics_log(result.log));
    if (final_ckpt) write_checkpoint_file(out_dir, "final.ckpt", result.params);
  };

  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    const std::size_t pair_idx = pair_rng.uniform_index(pairs.size());
    const TrainPair& pair = pairs.pair(pair_idx);

    try {
      ad::Tape tape;
      const TapeParams tp = bind_params(tape, result.params);
      const ad::ValueId xa = tape.leaf(ad::Tensor::from_cloud(pair.source));
      const ad::ValueId xb = tape.leaf(ad::Tensor::from_cloud(pair.target));
      const ad::ValueId latent =
          encode_on_tape(tape, tp, model_cfg.activation, xb);
      const std::vector<ad::ValueId> frames =
          unroll_on_tape(tape, model_cfg, tp, xa, latent);
      const LossNodes loss =
          total_loss_on_tape(tape, frames.back(), xb, pair.source, pair.target,
                             pair.graph, cfg.lambda, cfg.topo_form);

      if (cfg.log_every > 0 && iter % cfg.log_every == 0)
        result.log.push_back({iter, loss.breakdown});

      tape.backward(loss.total);
      std::vector<const ad::Tensor*> grads;
      grads.reserve(tp.flat.size());
      for (ad::ValueId id : tp.flat) grads.push_back(&tape.grad(id));
      adam_step(result.params.tensors(), grads, adam, cfg);
    } catch (const NumericalError& e) {
      // Parameters were not touched by the failing iteration; keep them.
      result.halted = true;
      result.halt_reason = "iteration " + std::to_string(iter) + ": " + e.what();
      flush_outputs(true);
      return result;
    }

    if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
        (iter + 1) % cfg.checkpoint_every == 0 &&
        iter + 1 < cfg.iterations) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%06zu.ckpt", iter + 1);
      write_checkpoint_file(out_dir, name, result.params);
    }
  }

  // Post-training loss, logged at iteration == cfg.iterations. The plain
  // route equals the tape route bit for bit.
  {
    const TrainPair& pair = pairs.pair(0);
    const Trajectory traj = unroll(result.params, pair.source, pair.target);
    result.log.push_back(
        {cfg.iterations,
         total_loss(traj, pair.target, pair.graph, cfg.lambda, cfg.topo_form)});
  }
  flush_outputs(true);
  return result;
}

// ---- evaluation -----------------------------------------------------------------

EvalReport evaluate(const ModelParams& params, const PointCloud& source,
                    const PointCloud& target, const NeighborGraph& graph,
                    TopoForm form) {
  const Trajectory traj = unroll(params, source, target);
  EvalReport report;
  report.chamfer_final = chamfer(traj.frames.back(), target).value;
  report.topology =
      topology_term(traj.frames.front(), traj.frames.back(), graph, form);
  for (const PointCloud& frame : traj.frames) {
    report.frame_cd_to_source.push_back(chamfer(frame, source).value);
    report.frame_cd_to_target.push_back(chamfer(frame, target).value);
  }
  return report;
}

// ---- run options ------------------------------------------------------------------

ModelConfig RunOptions::build_model_config() const {
  ModelConfig mc = ModelConfig::make(model_steps, model_latent, model_hidden,
                                     train.seed);
  mc.activation = model_activation;
  mc.share_step_weights = model_share_steps;
  return mc;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> entries;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config: line " + std::to_string(line_no) +
                       ": expected key=value");
    auto trim = [](std::string s) {
      const std::size_t b = s.find_first_not_of(" \t");
      const std::size_t e = s.find_last_not_of(" \t");
      return b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    entries[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return entries;
}

namespace {

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad number for '" + key + "': " + value);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("config: bad integer for '" + key + "': " + value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw InvalidArgument("config: bad boolean for '" + key + "': " + value);
}

}  // namespace

void apply_config_entry(RunOptions& opts, const std::string& key,
                        const std::string& value) {
  if (key == "learning_rate" || key == "lr")
    opts.train.learning_rate = to_double(key, value);
  else if (key == "beta1")
    opts.train.beta1 = to_double(key, value);
  else if (key == "beta2")
    opts.train.beta2 = to_double(key, value);
  else if (key == "adam_eps")
    opts.train.adam_eps = to_double(key, value);
  else if (key == "iterations")
    opts.train.iterations = to_u64(key, value);
  else if (key == "points" || key == "points_per_cloud")
    opts.train.points_per_cloud = to_u64(key, value);
  else if (key == "lambda")
    opts.train.lambda = to_double(key, value);
  else if (key == "neighbors" || key == "neighbor_source")
    opts.train.neighbor_source = neighbor_source_from_name(value);
  else if (key == "knn_k")
    opts.train.knn_k = to_u64(key, value);
  else if (key == "topo_form")
    opts.train.topo_form = topo_form_from_name(value);
  else if (key == "seed")
    opts.train.seed = to_u64(key, value);
  else if (key == "checkpoint_every")
    opts.train.checkpoint_every = to_u64(key, value);
  else if (key == "log_every")
    opts.train.log_every = to_u64(key, value);
  else if (key == "steps")
    opts.model_steps = to_u64(key, value);
  else if (key == "latent_dim")
    opts.model_latent = to_u64(key, value);
  else if (key == "hidden")
    opts.model_hidden = to_u64(key, value);
  else if (key == "activation")
    opts.model_activation = activation_from_name(value);
  else if (key == "share_steps")
    opts.model_share_steps = to_bool(key, value);
  else
    throw InvalidArgument("config: unknown key '" + key + "'");
}

}  // namespace pcmorph
