#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "pcmorph/kernels.hpp"
#include "pcmorph/rng.hpp"
#include "pcmorph/train.hpp"
#include "support.hpp"

using namespace pcmorph;
namespace fs = std::filesystem;

namespace {

bool tensors_bit_equal(const std::vector<ad::Tensor*>& a,
                       const std::vector<ad::Tensor*>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(a[i]->data.data(), b[i]->data.data(),
                    a[i]->data.size() * sizeof(double)) != 0)
      return false;
  return true;
}

std::string write_mesh_fixture(const std::string& dir, const std::string& name,
                               const TriMesh& mesh) {
  const std::string path = (fs::path(dir) / name).string();
  write_file(path, testsup::to_off(mesh));
  return path;
}

}  // namespace

TEST_CASE("adam_step: zero gradients leave everything unchanged") {
  ModelParams params = init_params(ModelConfig::make(2, 4, 4, 1));
  const ModelParams before = params;
  AdamState state = AdamState::like(params);
  std::vector<ad::Tensor> zero_grads;
  for (const ad::Tensor* t : params.tensors())
    zero_grads.emplace_back(t->rows(), t->cols());
  std::vector<const ad::Tensor*> grad_ptrs;
  for (const ad::Tensor& g : zero_grads) grad_ptrs.push_back(&g);

  TrainConfig hyper;
  adam_step(params.tensors(), grad_ptrs, state, hyper);
  CHECK(tensors_bit_equal(params.tensors(),
                          const_cast<ModelParams&>(before).tensors()));
  for (const ad::Tensor& m : state.m)
    for (double v : m.data) CHECK(v == 0.0);
  CHECK(state.step == 1);
}

TEST_CASE("adam_step: first-step magnitude approaches lr") {
  TrainConfig hyper;  // lr 1e-3, eps 1e-8
  for (const double g0 : {1e-3, 0.05, -2.0}) {
    ModelParams params = init_params(ModelConfig::make(1, 1, 1, 0));
    AdamState state = AdamState::like(params);
    auto tensors = params.tensors();
    std::vector<ad::Tensor> grads;
    for (const ad::Tensor* t : tensors) grads.emplace_back(t->rows(), t->cols());
    grads[0].data[0] = g0;
    std::vector<const ad::Tensor*> grad_ptrs;
    for (const ad::Tensor& g : grads) grad_ptrs.push_back(&g);

    const double before = tensors[0]->data[0];
    adam_step(params.tensors(), grad_ptrs, state, hyper);
    const double update = before - params.tensors()[0]->data[0];
    CHECK(std::fabs(std::fabs(update) - hyper.learning_rate) <= 1e-6);
    CHECK(update * g0 > 0.0);  // moves against the gradient
  }
}

TEST_CASE("adam_step: non-finite gradient halts before touching parameters") {
  ModelParams params = init_params(ModelConfig::make(1, 2, 2, 0));
  const ModelParams before = params;
  AdamState state = AdamState::like(params);
  std::vector<ad::Tensor> grads;
  for (const ad::Tensor* t : params.tensors())
    grads.emplace_back(t->rows(), t->cols());
  grads[2].data[0] = std::nan("");
  std::vector<const ad::Tensor*> grad_ptrs;
  for (const ad::Tensor& g : grads) grad_ptrs.push_back(&g);
  CHECK_THROWS_AS(adam_step(params.tensors(), grad_ptrs, state, TrainConfig{}),
                  NumericalError);
  CHECK(tensors_bit_equal(params.tensors(),
                          const_cast<ModelParams&>(before).tensors()));
}

TEST_CASE("adam_step: deterministic over 100 steps") {
  const auto run = [] {
    ModelParams params = init_params(ModelConfig::make(2, 4, 4, 9));
    AdamState state = AdamState::like(params);
    Rng rng(123);
    for (int it = 0; it < 100; ++it) {
      std::vector<ad::Tensor> grads;
      for (const ad::Tensor* t : params.tensors()) {
        ad::Tensor g(t->rows(), t->cols());
        for (double& v : g.data) v = rng.uniform(-1.0, 1.0);
        grads.push_back(std::move(g));
      }
      std::vector<const ad::Tensor*> grad_ptrs;
      for (const ad::Tensor& g : grads) grad_ptrs.push_back(&g);
      adam_step(params.tensors(), grad_ptrs, state, TrainConfig{});
    }
    return save_checkpoint(params);
  };
  CHECK(run() == run());
}

TEST_CASE("pair sets: directory scan, fixed pairs, failure modes") {
  const std::string dir = testsup::fresh_dir("pairs");
  const std::string a =
      write_mesh_fixture(dir, "a.off", testsup::icosphere(1));
  const std::string b = write_mesh_fixture(dir, "b.off", testsup::grid_cube(3));

  TrainConfig cfg;
  cfg.points_per_cloud = 24;
  cfg.knn_k = 4;

  const PairSet random = make_pairs(dir, PairMode::RandomPairs, cfg);
  CHECK(random.size() == 2);  // (a,b) and (b,a)
  CHECK(random.pair(0).source_path == a);
  CHECK(random.pair(0).target_path == b);
  CHECK(random.pair(1).source_path == b);
  CHECK(random.pair(1).target_path == a);
  for (std::size_t i = 0; i < random.size(); ++i) {
    const TrainPair p = random.pair(i);
    CHECK(p.source.size() == 24);
    CHECK(p.target.size() == 24);
    p.graph.validate();
    CHECK(p.graph.size() == p.source.size());
  }

  // Self-pair allowed in fixed mode (identity-learning sanity task).
  const PairSet self = make_pairs("", PairMode::FixedPair, cfg, a, a);
  CHECK(self.size() == 1);
  CHECK(self.pair(0).source == self.pair(0).target);

  const std::string empty = testsup::fresh_dir("pairs_empty");
  CHECK_THROWS_AS(make_pairs(empty, PairMode::RandomPairs, cfg),
                  InvalidArgument);

  write_file((fs::path(dir) / "broken.off").string(), "OFF\n9 9 9\nnope\n");
  try {
    make_pairs(dir, PairMode::RandomPairs, cfg);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("broken.off") != std::string::npos);
  }
}

TEST_CASE("pair sets: mesh-edges source uses the full vertex set") {
  const std::string dir = testsup::fresh_dir("pairs_meshedge");
  const TriMesh ico = testsup::icosphere(1);
  const std::string a = write_mesh_fixture(dir, "a.off", ico);

  TrainConfig cfg;
  cfg.points_per_cloud = 10;  // ignored by mesh-edges
  cfg.neighbor_source = NeighborSource::MeshEdges;
  const PairSet pairs = make_pairs("", PairMode::FixedPair, cfg, a, a);
  const TrainPair p = pairs.pair(0);
  CHECK(p.source.size() == ico.vertices.size());
  CHECK(p.graph.size() == ico.vertices.size());
  p.graph.validate();
}

TEST_CASE("train: identity task starts and stays at loss zero") {
  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.points_per_cloud = 16;
  cfg.knn_k = 3;
  cfg.log_every = 1;
  Rng rng(1);
  const PointCloud xa = testsup::random_cloud(rng, 16);
  const PairSet pairs = PairSet::from_clouds(xa, xa, cfg);
  const TrainResult result =
      train(pairs, ModelConfig::make(2, 8, 8, cfg.seed), cfg, "");
  REQUIRE(!result.log.empty());
  for (const LogEntry& e : result.log) CHECK(e.loss.total == 0.0);
}

TEST_CASE("train: iteration-0 loss equals CD(Xa, Xb) exactly") {
  TrainConfig cfg;
  cfg.iterations = 2;
  cfg.knn_k = 3;
  cfg.log_every = 1;
  Rng rng(2);
  const PointCloud xa = testsup::random_cloud(rng, 20);
  const PointCloud xb = testsup::random_cloud(rng, 20);
  const PairSet pairs = PairSet::from_clouds(xa, xb, cfg);
  const TrainPair p = pairs.pair(0);
  const TrainResult result =
      train(pairs, ModelConfig::make(2, 8, 8, cfg.seed), cfg, "");
  REQUIRE(!result.log.empty());
  CHECK(result.log[0].iteration == 0);
  CHECK(result.log[0].loss.chamfer == chamfer(p.source, p.target).value);
  CHECK(result.log[0].loss.topology == 0.0);
  CHECK(result.log[0].loss.total == result.log[0].loss.chamfer);
}

TEST_CASE("train: deterministic logs, checkpoints and files") {
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.points_per_cloud = 12;
  cfg.knn_k = 3;
  cfg.log_every = 5;
  cfg.checkpoint_every = 10;
  cfg.seed = 31;
  Rng rng(3);
  const PointCloud xa = testsup::random_cloud(rng, 12);
  const PointCloud xb = testsup::random_cloud(rng, 12);
  const PairSet pairs = PairSet::from_clouds(xa, xb, cfg);
  const ModelConfig mc = ModelConfig::make(2, 8, 8, cfg.seed);

  const std::string dir1 = testsup::fresh_dir("train_det1");
  const std::string dir2 = testsup::fresh_dir("train_det2");
  const TrainResult r1 = train(pairs, mc, cfg, dir1);
  const TrainResult r2 = train(pairs, mc, cfg, dir2);

  CHECK(format_metrics_log(r1.log) == format_metrics_log(r2.log));
  CHECK(read_file((fs::path(dir1) / "metrics.tsv").string()) ==
        read_file((fs::path(dir2) / "metrics.tsv").string()));
  CHECK(read_file((fs::path(dir1) / "final.ckpt").string()) ==
        read_file((fs::path(dir2) / "final.ckpt").string()));
  CHECK(fs::exists(fs::path(dir1) / "ckpt_000010.ckpt"));

  // The loss is actually training downhill on this overfit toy.
  CHECK(r1.log.back().loss.total < r1.log.front().loss.total);
}

TEST_CASE("train: non-finite loss halts and keeps the last checkpoint") {
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.knn_k = 2;
  cfg.learning_rate = 1e160;  // guaranteed overflow to inf
  cfg.log_every = 1;
  Rng rng(4);
  const PointCloud xa = testsup::random_cloud(rng, 10);
  const PointCloud xb = testsup::random_cloud(rng, 10);
  const PairSet pairs = PairSet::from_clouds(xa, xb, cfg);
  const std::string dir = testsup::fresh_dir("train_halt");
  const TrainResult result =
      train(pairs, ModelConfig::make(2, 6, 6, cfg.seed), cfg, dir);
  CHECK(result.halted);
  CHECK(!result.halt_reason.empty());
  // The retained checkpoint still loads and is finite.
  const ModelParams kept =
      load_checkpoint(read_file((fs::path(dir) / "final.ckpt").string()));
  kept.validate();
}

TEST_CASE("train: kernel lanes produce byte-identical checkpoints") {
  // End-to-end equivalence of the SIMD lane: a whole training run under the
  // scalar reference must reproduce the dispatched lane bit for bit.
  if (!kern::avx2_kernels() && !kern::neon_kernels()) return;

  TrainConfig cfg;
  cfg.iterations = 60;
  cfg.points_per_cloud = 48;
  cfg.knn_k = 4;
  cfg.log_every = 1;
  cfg.seed = 77;
  Rng rng(6);
  const PointCloud xa = testsup::random_cloud(rng, 48);
  const PointCloud xb = testsup::random_cloud(rng, 48);
  const PairSet pairs = PairSet::from_clouds(xa, xb, cfg);
  const ModelConfig mc = ModelConfig::make(3, 32, 32, cfg.seed);

  const auto run_with = [&](const char* lane) {
    kern::force(lane);
    const TrainResult r = train(pairs, mc, cfg, "");
    kern::force("auto");
    return std::make_pair(save_checkpoint(r.params), format_metrics_log(r.log));
  };

  const auto scalar = run_with("scalar");
  const auto simd = run_with(kern::avx2_kernels() ? "avx2" : "neon");
  CHECK(scalar.first == simd.first);
  CHECK(scalar.second == simd.second);
}

TEST_CASE("evaluate: identity checkpoint reports CD(Xa, Xb) at frame T") {
  TrainConfig cfg;
  cfg.knn_k = 3;
  Rng rng(5);
  const PointCloud xa = testsup::random_cloud(rng, 18);
  const PointCloud xb = testsup::random_cloud(rng, 18);
  const PairSet pairs = PairSet::from_clouds(xa, xb, cfg);
  const TrainPair p = pairs.pair(0);
  const ModelParams params = init_params(ModelConfig::make(3, 8, 8, 0));

  const EvalReport report = evaluate(params, p.source, p.target, p.graph);
  CHECK(report.chamfer_final == chamfer(p.source, p.target).value);
  CHECK(report.topology == 0.0);
  REQUIRE(report.frame_cd_to_source.size() == 4);
  CHECK(report.frame_cd_to_source[0] == 0.0);
  CHECK(report.frame_cd_to_target.back() == report.chamfer_final);

  const EvalReport again = evaluate(params, p.source, p.target, p.graph);
  CHECK(report.chamfer_final == again.chamfer_final);
  CHECK(report.frame_cd_to_target == again.frame_cd_to_target);
}

TEST_CASE("config text: parsing, overlay and unknown keys") {
  const auto entries = parse_config_text(
      "# comment\n\nlr = 0.01\niterations=50\nneighbors=mesh-edges\n"
      "topo_form=raw\nhidden=32\nshare_steps=true\n");
  RunOptions opts;
  for (const auto& [k, v] : entries) apply_config_entry(opts, k, v);
  CHECK(opts.train.learning_rate == 0.01);
  CHECK(opts.train.iterations == 50);
  CHECK(opts.train.neighbor_source == NeighborSource::MeshEdges);
  CHECK(opts.train.topo_form == TopoForm::Raw);
  CHECK(opts.model_hidden == 32);
  CHECK(opts.model_share_steps);
  const ModelConfig mc = opts.build_model_config();
  CHECK(mc.share_step_weights);
  CHECK(mc.step_layers == std::vector<std::size_t>{131, 32, 32, 3});

  RunOptions fresh;
  CHECK_THROWS_AS(apply_config_entry(fresh, "warp_speed", "9"),
                  InvalidArgument);
  CHECK_THROWS_AS(apply_config_entry(fresh, "lr", "fast"), InvalidArgument);
  CHECK_THROWS_AS(parse_config_text("lr 0.1\n"), ParseError);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = TrainConfig{};
  cfg.points_per_cloud = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
