// pcmorph — learned point-cloud interpolation.
//
// Subcommands: train, interp, baseline, export-mesh, gradcheck, eval.
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 numerical halt. All geometry outputs live in normalized (unit-sphere)
// space; PLY frame headers carry an alpha label for viewers.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcmorph/gradcheck_suite.hpp"
#include "pcmorph/loss.hpp"
#include "pcmorph/metrics.hpp"
#include "pcmorph/model.hpp"
#include "pcmorph/train.hpp"

namespace fs = std::filesystem;
using namespace pcmorph;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::optional<std::uint64_t> env_seed() {
  if (const char* env = std::getenv("PCMORPH_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw InvalidArgument("PCMORPH_SEED is not an integer: " +
                            std::string(env));
    }
  }
  return std::nullopt;
}

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_alpha(double alpha) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "alpha=%.6f", alpha);
  return buf;
}

PointCloud normalized_vertex_cloud(const std::string& path) {
  const TriMesh mesh = load_mesh_file(path);
  if (mesh.vertices.empty())
    throw InvalidArgument(path + ": mesh has no vertices");
  return normalize_unit_sphere(mesh.vertex_cloud()).first;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::vector<std::string> pair;
  std::string out_dir;
  std::string config_path;
  // optional overrides; flags win over the config file
  std::optional<double> lr, lambda;
  std::optional<std::uint64_t> iters, points, knn_k, seed, ckpt_every,
      log_every, steps, latent, hidden;
  std::optional<std::string> neighbors, topo_form, activation;
  bool share_steps = false;
  bool share_steps_set = false;
};

int run_train(const TrainArgs& args) {
  if (args.data_dir.empty() == args.pair.empty())
    throw InvalidArgument(
        "train: give exactly one of --data <dir> or --pair <src> <tgt>");

  RunOptions opts;
  bool seed_configured = false;
  if (!args.config_path.empty()) {
    const auto entries = parse_config_text(read_file(args.config_path));
    for (const auto& [key, value] : entries) {
      apply_config_entry(opts, key, value);
      if (key == "seed") seed_configured = true;
    }
  }
  if (args.lr) opts.train.learning_rate = *args.lr;
  if (args.lambda) opts.train.lambda = *args.lambda;
  if (args.iters) opts.train.iterations = *args.iters;
  if (args.points) opts.train.points_per_cloud = *args.points;
  if (args.knn_k) opts.train.knn_k = *args.knn_k;
  if (args.ckpt_every) opts.train.checkpoint_every = *args.ckpt_every;
  if (args.log_every) opts.train.log_every = *args.log_every;
  if (args.neighbors)
    opts.train.neighbor_source = neighbor_source_from_name(*args.neighbors);
  if (args.topo_form)
    opts.train.topo_form = topo_form_from_name(*args.topo_form);
  if (args.steps) opts.model_steps = *args.steps;
  if (args.latent) opts.model_latent = *args.latent;
  if (args.hidden) opts.model_hidden = *args.hidden;
  if (args.activation)
    opts.model_activation = activation_from_name(*args.activation);
  if (args.share_steps_set) opts.model_share_steps = args.share_steps;
  if (args.seed) {
    opts.train.seed = *args.seed;
  } else if (!seed_configured) {
    if (const auto env = env_seed()) opts.train.seed = *env;
  }

  const ModelConfig model_cfg = opts.build_model_config();
  const PairSet pairs =
      args.pair.empty()
          ? make_pairs(args.data_dir, PairMode::RandomPairs, opts.train)
          : make_pairs("", PairMode::FixedPair, opts.train, args.pair[0],
                       args.pair[1]);

  const TrainResult result = train(pairs, model_cfg, opts.train, args.out_dir);
  if (result.halted) {
    std::cerr << "train: halted on non-finite value (" << result.halt_reason
              << "); last good checkpoint kept in " << args.out_dir << "\n";
    return kExitNumerical;
  }
  const LogEntry& final_entry = result.log.back();
  std::cout << "trained " << opts.train.iterations << " iterations; final"
            << " chamfer=" << fmt_g17(final_entry.loss.chamfer)
            << " topology=" << fmt_g17(final_entry.loss.topology)
            << " total=" << fmt_g17(final_entry.loss.total) << "\n"
            << "outputs in " << args.out_dir << "\n";
  return kExitOk;
}

// ---- interp -----------------------------------------------------------------

int run_interp(const std::string& ckpt_path, const std::string& source_path,
               const std::string& target_path, const std::string& frames_dir) {
  const ModelParams params = load_checkpoint(read_file(ckpt_path));
  const PointCloud source = normalized_vertex_cloud(source_path);
  const PointCloud target = normalized_vertex_cloud(target_path);

  const Trajectory traj = unroll(params, source, target);
  fs::create_directories(frames_dir);
  const std::size_t steps = traj.step_count();
  for (std::size_t t = 0; t < traj.frames.size(); ++t) {
    // Frame t is labeled alpha = 1 - t/T: frame 0 is the source endpoint.
    const double alpha = 1.0 - static_cast<double>(t) /
                                   static_cast<double>(steps);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.ply", t);
    write_file((fs::path(frames_dir) / name).string(),
               write_ply_points(traj.frames[t], fmt_alpha(alpha)));
  }
  std::cout << "wrote " << traj.frames.size() << " frames to " << frames_dir
            << "\n";
  return kExitOk;
}

// ---- baseline ---------------------------------------------------------------

struct BaselineArgs {
  std::string source_path, target_path, out_dir;
  std::optional<double> alpha;
  std::optional<std::uint64_t> frames;
  std::optional<std::uint64_t> resample;
  std::optional<std::uint64_t> seed;
};

int run_baseline(const BaselineArgs& args) {
  if (args.alpha.has_value() == args.frames.has_value())
    throw InvalidArgument(
        "baseline: give exactly one of --alpha <x> or --frames <k>");

  const TriMesh source_mesh = load_mesh_file(args.source_path);
  const TriMesh target_mesh = load_mesh_file(args.target_path);

  std::uint64_t seed = 0;
  if (args.seed) {
    seed = *args.seed;
  } else if (const auto env = env_seed()) {
    seed = *env;
  }

  PointCloud source_raw, target_raw;
  if (args.resample) {
    source_raw = sample_points(source_mesh, *args.resample, seed).cloud;
    target_raw = sample_points(target_mesh, *args.resample, seed).cloud;
  } else {
    if (source_mesh.vertices.size() != target_mesh.vertices.size())
      throw InvalidArgument(
          "baseline: vertex counts differ (" +
          std::to_string(source_mesh.vertices.size()) + " vs " +
          std::to_string(target_mesh.vertices.size()) +
          "); pass --resample <n> to sample both to a shared size");
    source_raw = source_mesh.vertex_cloud();
    target_raw = target_mesh.vertex_cloud();
  }
  const PointCloud source = normalize_unit_sphere(source_raw).first;
  const PointCloud target = normalize_unit_sphere(target_raw).first;

  fs::create_directories(args.out_dir);
  if (args.alpha) {
    const PointCloud out = naive_interpolate(source, target, *args.alpha);
    write_file((fs::path(args.out_dir) / "alpha.ply").string(),
               write_ply_points(out, fmt_alpha(*args.alpha)));
    std::cout << "wrote 1 frame to " << args.out_dir << "\n";
    return kExitOk;
  }

  const std::uint64_t k = *args.frames;
  if (k < 2) throw InvalidArgument("baseline: --frames must be >= 2");
  for (std::uint64_t j = 0; j < k; ++j) {
    const double alpha =
        1.0 - static_cast<double>(j) / static_cast<double>(k - 1);
    const PointCloud out = naive_interpolate(source, target, alpha);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03llu.ply",
                  static_cast<unsigned long long>(j));
    write_file((fs::path(args.out_dir) / name).string(),
               write_ply_points(out, fmt_alpha(alpha)));
  }
  std::cout << "wrote " << k << " frames to " << args.out_dir << "\n";
  return kExitOk;
}

// ---- export-mesh -------------------------------------------------------------

int run_export_mesh(const std::string& ckpt_path,
                    const std::string& source_mesh_path,
                    const std::string& target_path, std::uint64_t frame,
                    const std::string& out_path) {
  const ModelParams params = load_checkpoint(read_file(ckpt_path));

  const TriMesh source_mesh = load_mesh_file(source_mesh_path);
  if (source_mesh.vertices.empty())
    throw InvalidArgument(source_mesh_path + ": mesh has no vertices");
  // Vertex mode (n = vertex count): index i of every frame is the image of
  // vertex i, so the source face list meshes any frame.
  const SampleResult sampled =
      sample_points(source_mesh, source_mesh.vertices.size(), 0);
  const PointCloud source = normalize_unit_sphere(sampled.cloud).first;
  const PointCloud target = normalized_vertex_cloud(target_path);

  const Trajectory traj = unroll(params, source, target);
  if (frame >= traj.frames.size())
    throw InvalidArgument("export-mesh: frame " + std::to_string(frame) +
                          " out of range (trajectory has " +
                          std::to_string(traj.frames.size()) + " frames)");

  TriMesh out_mesh;
  out_mesh.vertices = traj.frames[frame].points;
  out_mesh.faces = source_mesh.faces;
  write_file(out_path, write_obj(out_mesh));
  std::cout << "wrote frame " << frame << " mesh to " << out_path << "\n";
  return kExitOk;
}

// ---- gradcheck ----------------------------------------------------------------

int run_gradcheck(std::uint64_t seed, std::size_t probes) {
  const GradCheckReport report = run_gradcheck_suite(seed, probes);
  bool ok = true;
  for (const auto& c : report.components) {
    const bool pass = c.max_rel_error <= 1e-6;
    ok = ok && pass;
    std::printf("%-16s max_rel_err=%.3e  %s\n", c.name.c_str(),
                c.max_rel_error, pass ? "ok" : "FAIL");
  }
  std::printf("gradcheck %s (worst %.3e over %zu components)\n",
              ok ? "passed" : "FAILED", report.worst(),
              report.components.size());
  return ok ? kExitOk : kExitVerifyFail;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt_path;
  std::vector<std::string> pair;
  std::optional<std::uint64_t> points, knn_k, seed;
  std::optional<std::string> neighbors;
  bool tsv = false;
};

int run_eval(const EvalArgs& args) {
  const ModelParams params = load_checkpoint(read_file(args.ckpt_path));
  TrainConfig cfg;
  if (args.points) cfg.points_per_cloud = *args.points;
  if (args.knn_k) cfg.knn_k = *args.knn_k;
  if (args.neighbors)
    cfg.neighbor_source = neighbor_source_from_name(*args.neighbors);
  if (args.seed) {
    cfg.seed = *args.seed;
  } else if (const auto env = env_seed()) {
    cfg.seed = *env;
  }

  const PairSet pairs = PairSet::fixed_pair(args.pair[0], args.pair[1], cfg);
  const TrainPair pair = pairs.pair(0);
  const EvalReport report =
      evaluate(params, pair.source, pair.target, pair.graph, cfg.topo_form);

  if (args.tsv) {
    // Columns: chamfer_final, topology, cd_to_source per frame, cd_to_target
    // per frame.
    std::string line = fmt_g17(report.chamfer_final);
    line += "\t" + fmt_g17(report.topology);
    for (double v : report.frame_cd_to_source) line += "\t" + fmt_g17(v);
    for (double v : report.frame_cd_to_target) line += "\t" + fmt_g17(v);
    std::cout << line << "\n";
    return kExitOk;
  }

  std::cout << "source: " << pair.source_path << " (" << pair.source.size()
            << " points)\n";
  std::cout << "target: " << pair.target_path << " (" << pair.target.size()
            << " points)\n";
  std::cout << "chamfer_final: " << fmt_g17(report.chamfer_final) << "\n";
  std::cout << "topology: " << fmt_g17(report.topology) << "\n";
  for (std::size_t t = 0; t < report.frame_cd_to_source.size(); ++t)
    std::cout << "frame " << t
              << ": cd_to_source=" << fmt_g17(report.frame_cd_to_source[t])
              << " cd_to_target=" << fmt_g17(report.frame_cd_to_target[t])
              << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pcmorph: learned point-cloud interpolation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* cmd_train = app.add_subcommand("train", "train a morphing model");
  cmd_train->add_option("--data", train_args.data_dir,
                        "dataset directory (random pairs)");
  cmd_train->add_option("--pair", train_args.pair,
                        "source and target mesh (fixed pair)")
      ->expected(2);
  cmd_train->add_option("--out", train_args.out_dir,
                        "output directory for checkpoints and metrics")
      ->required();
  cmd_train->add_option("--config", train_args.config_path,
                        "key=value config file (flags win)");
  cmd_train->add_option("--lr", train_args.lr, "learning rate");
  cmd_train->add_option("--iters", train_args.iters, "training iterations");
  cmd_train->add_option("--points", train_args.points, "points per cloud");
  cmd_train->add_option("--lambda", train_args.lambda,
                        "topology term weight");
  cmd_train->add_option("--neighbors", train_args.neighbors,
                        "neighbor source: mesh-edges or knn");
  cmd_train->add_option("--knn-k", train_args.knn_k, "k for knn neighbors");
  cmd_train->add_option("--seed", train_args.seed, "random seed");
  cmd_train->add_option("--checkpoint-every", train_args.ckpt_every,
                        "periodic checkpoint interval");
  cmd_train->add_option("--log-every", train_args.log_every,
                        "metrics log interval");
  cmd_train->add_option("--topo-form", train_args.topo_form,
                        "topology penalty form: squared or raw");
  cmd_train->add_option("--steps", train_args.steps, "transformation count T");
  cmd_train->add_option("--latent", train_args.latent, "latent dimension d");
  cmd_train->add_option("--hidden", train_args.hidden, "hidden layer width");
  cmd_train->add_option("--activation", train_args.activation,
                        "activation: tanh or relu");
  cmd_train
      ->add_flag("--share-steps", train_args.share_steps,
                 "share one step network across all t")
      ->trigger_on_parse();
  cmd_train->callback(
      [&train_args, cmd_train] {
        train_args.share_steps_set = cmd_train->count("--share-steps") > 0;
      });

  std::string in_ckpt, in_source, in_target, in_frames_dir;
  CLI::App* cmd_interp =
      app.add_subcommand("interp", "unroll a trained model into PLY frames");
  cmd_interp->add_option("--ckpt", in_ckpt, "checkpoint file")->required();
  cmd_interp->add_option("--source", in_source, "source mesh")->required();
  cmd_interp->add_option("--target", in_target, "target mesh")->required();
  cmd_interp->add_option("--frames-out", in_frames_dir, "output directory")
      ->required();

  BaselineArgs baseline_args;
  CLI::App* cmd_baseline = app.add_subcommand(
      "baseline", "naive index-paired linear interpolation");
  cmd_baseline->add_option("--source", baseline_args.source_path, "source mesh")
      ->required();
  cmd_baseline->add_option("--target", baseline_args.target_path, "target mesh")
      ->required();
  cmd_baseline->add_option("--alpha", baseline_args.alpha,
                           "single blend factor in [0,1]");
  cmd_baseline->add_option("--frames", baseline_args.frames,
                           "emit k frames, alpha from 1 to 0");
  cmd_baseline->add_option("--out", baseline_args.out_dir, "output directory")
      ->required();
  cmd_baseline->add_option("--resample", baseline_args.resample,
                           "sample both meshes to n points first");
  cmd_baseline->add_option("--seed", baseline_args.seed, "sampling seed");

  std::string ex_ckpt, ex_source, ex_target, ex_out;
  std::uint64_t ex_frame = 0;
  CLI::App* cmd_export = app.add_subcommand(
      "export-mesh", "mesh a trajectory frame via vertex correspondence");
  cmd_export->add_option("--ckpt", ex_ckpt, "checkpoint file")->required();
  cmd_export->add_option("--source-mesh", ex_source, "source mesh")
      ->required();
  cmd_export->add_option("--target", ex_target, "target mesh")->required();
  cmd_export->add_option("--frame", ex_frame, "frame index (0..T)")
      ->required();
  cmd_export->add_option("--out", ex_out, "output OBJ path")->required();

  std::optional<std::uint64_t> gc_seed;
  std::uint64_t gc_probes = 100;
  CLI::App* cmd_gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference verification of all gradients");
  cmd_gradcheck->add_option("--seed", gc_seed, "random seed");
  cmd_gradcheck->add_option("--probes", gc_probes,
                            "random probes per component");

  EvalArgs eval_args;
  CLI::App* cmd_eval =
      app.add_subcommand("eval", "report morphing metrics for a pair");
  cmd_eval->add_option("--ckpt", eval_args.ckpt_path, "checkpoint file")
      ->required();
  cmd_eval->add_option("--pair", eval_args.pair, "source and target mesh")
      ->required()
      ->expected(2);
  cmd_eval->add_option("--points", eval_args.points, "points per cloud");
  cmd_eval->add_option("--neighbors", eval_args.neighbors,
                       "neighbor source: mesh-edges or knn");
  cmd_eval->add_option("--knn-k", eval_args.knn_k, "k for knn neighbors");
  cmd_eval->add_option("--seed", eval_args.seed, "sampling seed");
  cmd_eval->add_flag("--tsv", eval_args.tsv, "single tab-separated line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cmd_train->parsed()) return run_train(train_args);
    if (cmd_interp->parsed())
      return run_interp(in_ckpt, in_source, in_target, in_frames_dir);
    if (cmd_baseline->parsed()) return run_baseline(baseline_args);
    if (cmd_export->parsed())
      return run_export_mesh(ex_ckpt, ex_source, ex_target, ex_frame, ex_out);
    if (cmd_gradcheck->parsed()) {
      std::uint64_t seed = 0;
      if (gc_seed) {
        seed = *gc_seed;
      } else if (const auto env = env_seed()) {
        seed = *env;
      }
      return run_gradcheck(seed, gc_probes);
    }
    if (cmd_eval->parsed()) return run_eval(eval_args);
  } catch (const NumericalError& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
