#include <filesystem>
#include <string>

#include "doctest.h"
#include "pcmorph/geom.hpp"
#include "pcmorph/metrics.hpp"
#include "pcmorph/model.hpp"
#include "pcmorph/train.hpp"
#include "support.hpp"

using namespace pcmorph;
namespace fs = std::filesystem;

namespace {

const std::string kBin = PCMORPH_BIN;

struct Fixture {
  std::string dir;
  std::string sphere_off;
  std::string cube_off;
  std::string identity_ckpt;  // fresh (identity) model, T = 3

  Fixture() {
    dir = testsup::fresh_dir("cli");
    sphere_off = dir + "/sphere.off";
    cube_off = dir + "/cube.off";
    write_file(sphere_off, testsup::to_off(testsup::icosphere(1)));
    write_file(cube_off, testsup::to_off(testsup::grid_cube(3)));
    identity_ckpt = dir + "/identity.ckpt";
    write_file(identity_ckpt,
               save_checkpoint(init_params(ModelConfig::make(3, 16, 16, 0))));
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

int run(const std::string& args, std::string* output = nullptr) {
  const testsup::ProcessResult r = testsup::run_process(kBin + " " + args);
  if (output) *output = r.output;
  return r.exit_code;
}

std::vector<std::string> ply_files(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ply") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  const Fixture& f = fixture();
  std::string out;
  CHECK(run("train --pair " + f.sphere_off + " " + f.cube_off, &out) == 2);
  CHECK(out.find("--out") != std::string::npos);

  CHECK(run("baseline --source " + f.sphere_off + " --target " + f.cube_off +
            " --frames 3 --out /tmp/x --warp 9") == 2);  // unknown flag
  CHECK(run("definitely-not-a-command") == 2);
  CHECK(run("") == 2);  // subcommand required
}

TEST_CASE("cli: baseline alpha endpoints and range checks") {
  const Fixture& f = fixture();
  const std::string out_dir = testsup::fresh_dir("cli_baseline");

  // alpha outside [0,1] is a usage error
  CHECK(run("baseline --source " + f.sphere_off + " --target " + f.sphere_off +
            " --alpha 2 --out " + out_dir) == 2);

  // unequal vertex counts without --resample
  CHECK(run("baseline --source " + f.sphere_off + " --target " + f.cube_off +
            " --alpha 0.5 --out " + out_dir) == 2);

  // alpha = 1 reproduces the (normalized) source exactly
  CHECK(run("baseline --source " + f.sphere_off + " --target " + f.sphere_off +
            " --alpha 1 --out " + out_dir) == 0);
  const TriMesh sphere = load_mesh_file(f.sphere_off);
  const PointCloud normalized =
      normalize_unit_sphere(sphere.vertex_cloud()).first;
  const std::string expected = write_ply_points(normalized, "alpha=1.000000");
  CHECK(read_file(out_dir + "/alpha.ply") == expected);
}

TEST_CASE("cli: baseline frames with resample") {
  const Fixture& f = fixture();
  const std::string out_dir = testsup::fresh_dir("cli_baseline_frames");
  CHECK(run("baseline --source " + f.sphere_off + " --target " + f.cube_off +
            " --frames 3 --resample 40 --seed 5 --out " + out_dir) == 0);
  const auto files = ply_files(out_dir);
  REQUIRE(files.size() == 3);
  CHECK(files[0].find("frame_000.ply") != std::string::npos);
  // frame_000 is alpha=1 (source); frame_002 is alpha=0 (target)
  CHECK(read_file(files[0]).find("alpha=1.000000") != std::string::npos);
  CHECK(read_file(files[1]).find("alpha=0.500000") != std::string::npos);
  CHECK(read_file(files[2]).find("alpha=0.000000") != std::string::npos);
}

TEST_CASE("cli: train smoke run produces deterministic outputs") {
  const Fixture& f = fixture();
  const std::string out1 = testsup::fresh_dir("cli_train1");
  const std::string out2 = testsup::fresh_dir("cli_train2");
  const std::string flags = " --pair " + f.sphere_off + " " + f.cube_off +
                            " --iters 8 --points 20 --hidden 16 --latent 16" +
                            " --steps 2 --seed 3 --log-every 2";
  CHECK(run("train" + flags + " --out " + out1) == 0);
  CHECK(run("train" + flags + " --out " + out2) == 0);
  CHECK(fs::exists(out1 + "/final.ckpt"));
  CHECK(fs::exists(out1 + "/metrics.tsv"));
  CHECK(read_file(out1 + "/metrics.tsv") == read_file(out2 + "/metrics.tsv"));
  CHECK(read_file(out1 + "/final.ckpt") == read_file(out2 + "/final.ckpt"));

  // metrics.tsv: iter <TAB> chamfer <TAB> topology <TAB> total
  const std::string log = read_file(out1 + "/metrics.tsv");
  CHECK(log.rfind("0\t", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 5);  // 0,2,4,6 + final(8)
}

TEST_CASE("cli: train on a dataset directory (random pairs)") {
  const Fixture& f = fixture();
  const std::string data = testsup::fresh_dir("cli_data");
  fs::copy_file(f.sphere_off, data + "/a.off");
  fs::copy_file(f.cube_off, data + "/b.off");
  const std::string out = testsup::fresh_dir("cli_data_out");
  CHECK(run("train --data " + data + " --out " + out +
            " --iters 6 --points 16 --hidden 8 --latent 8 --steps 2"
            " --seed 2 --log-every 3") == 0);
  CHECK(fs::exists(out + "/final.ckpt"));

  // --data and --pair together is a usage error
  CHECK(run("train --data " + data + " --pair " + f.sphere_off + " " +
            f.cube_off + " --out " + out) == 2);
}

TEST_CASE("cli: interp writes T+1 frames; identity model frames are identical") {
  const Fixture& f = fixture();
  const std::string frames = testsup::fresh_dir("cli_interp");
  CHECK(run("interp --ckpt " + f.identity_ckpt + " --source " + f.sphere_off +
            " --target " + f.cube_off + " --frames-out " + frames) == 0);
  const auto files = ply_files(frames);
  REQUIRE(files.size() == 4);  // T = 3

  // frame_000 equals the normalized source vertices
  const TriMesh sphere = load_mesh_file(f.sphere_off);
  const PointCloud normalized =
      normalize_unit_sphere(sphere.vertex_cloud()).first;
  CHECK(read_file(files[0]) == write_ply_points(normalized, "alpha=1.000000"));

  // identity model: every frame carries identical coordinates
  const auto strip_comment = [](std::string text) {
    const std::size_t start = text.find("comment");
    const std::size_t end = text.find('\n', start);
    return text.substr(0, start) + text.substr(end + 1);
  };
  const std::string first = strip_comment(read_file(files[0]));
  for (std::size_t t = 1; t < files.size(); ++t)
    CHECK(strip_comment(read_file(files[t])) == first);
}

TEST_CASE("cli: export-mesh keeps the source face list byte for byte") {
  const Fixture& f = fixture();
  const std::string out_obj = testsup::fresh_dir("cli_export") + "/frame.obj";
  CHECK(run("export-mesh --ckpt " + f.identity_ckpt + " --source-mesh " +
            f.sphere_off + " --target " + f.cube_off +
            " --frame 0 --out " + out_obj) == 0);

  const TriMesh source = load_mesh_file(f.sphere_off);
  const TriMesh exported = load_obj(read_file(out_obj));
  CHECK(exported.faces == source.faces);

  // frame 0 is the normalized source geometry (same 6-decimal text)
  TriMesh normalized = source;
  normalized.vertices =
      normalize_unit_sphere(source.vertex_cloud()).first.points;
  CHECK(read_file(out_obj) == write_obj(normalized));

  // identity checkpoint: frame T equals frame 0
  const std::string out_obj_t =
      testsup::fresh_dir("cli_export_t") + "/frame_t.obj";
  CHECK(run("export-mesh --ckpt " + f.identity_ckpt + " --source-mesh " +
            f.sphere_off + " --target " + f.cube_off +
            " --frame 3 --out " + out_obj_t) == 0);
  CHECK(read_file(out_obj_t) == read_file(out_obj));

  // frame out of range
  CHECK(run("export-mesh --ckpt " + f.identity_ckpt + " --source-mesh " +
            f.sphere_off + " --target " + f.cube_off +
            " --frame 4 --out /tmp/never.obj") == 2);
}

TEST_CASE("cli: gradcheck passes and lists every component") {
  std::string out;
  CHECK(run("gradcheck --seed 1 --probes 3", &out) == 0);
  for (const char* component :
       {"add", "sub", "mul", "matmul", "tanh", "relu", "square", "sum",
        "mean", "mean_rows", "max_rows", "gather_rows", "broadcast_rows",
        "concat_cols", "row_sums", "div_scalar", "scale", "encoder",
        "step_mlp", "total_loss"})
    CHECK(out.find(component) != std::string::npos);
  CHECK(out.find("gradcheck passed") != std::string::npos);
}

TEST_CASE("cli: eval reports identity chamfer; tsv stable") {
  const Fixture& f = fixture();
  const TrainConfig cfg = [] {
    TrainConfig c;
    c.points_per_cloud = 30;
    c.seed = 4;
    return c;
  }();

  std::string labeled;
  const std::string flags = " --ckpt " + f.identity_ckpt + " --pair " +
                            f.sphere_off + " " + f.cube_off +
                            " --points 30 --seed 4";
  CHECK(run("eval" + flags, &labeled) == 0);
  CHECK(labeled.find("chamfer_final:") != std::string::npos);
  CHECK(labeled.find("frame 3:") != std::string::npos);

  std::string tsv1, tsv2;
  CHECK(run("eval" + flags + " --tsv", &tsv1) == 0);
  CHECK(run("eval" + flags + " --tsv", &tsv2) == 0);
  CHECK(tsv1 == tsv2);
  // identity model: frame-T chamfer equals CD(Xa, Xb) of the prepared pair
  const PairSet pairs = PairSet::fixed_pair(f.sphere_off, f.cube_off, cfg);
  const TrainPair pair = pairs.pair(0);
  char expected[40];
  std::snprintf(expected, sizeof(expected), "%.17g",
                chamfer(pair.source, pair.target).value);
  CHECK(tsv1.rfind(expected, 0) == 0);
  // columns: cd_final, topology, (T+1) cd-to-source, (T+1) cd-to-target
  CHECK(std::count(tsv1.begin(), tsv1.end(), '\t') == 9);
}

TEST_CASE("cli: config file applies, flags win, PCMORPH_SEED fallback") {
  const Fixture& f = fixture();
  const std::string dir = testsup::fresh_dir("cli_config");
  const std::string config_path = dir + "/run.cfg";
  write_file(config_path,
             "# smoke config\niterations=4\npoints=18\nhidden=12\n"
             "latent=0\nsteps=2\nlog_every=1\nseed=9\n");
  // 'latent' is not a config key (it is latent_dim); expect a config error.
  CHECK(run("train --pair " + f.sphere_off + " " + f.cube_off + " --out " +
            dir + "/out0 --config " + config_path) == 2);

  write_file(config_path,
             "# smoke config\niterations=4\npoints=18\nhidden=12\n"
             "latent_dim=12\nsteps=2\nlog_every=1\nseed=9\n");
  const std::string out1 = dir + "/out1";
  CHECK(run("train --pair " + f.sphere_off + " " + f.cube_off + " --out " +
            out1 + " --config " + config_path) == 0);
  // 4 iterations logged at 0..3 plus the final entry
  const std::string log1 = read_file(out1 + "/metrics.tsv");
  CHECK(std::count(log1.begin(), log1.end(), '\n') == 5);

  // flags override the file: 2 iterations -> 3 log lines
  const std::string out2 = dir + "/out2";
  CHECK(run("train --pair " + f.sphere_off + " " + f.cube_off + " --out " +
            out2 + " --config " + config_path + " --iters 2") == 0);
  const std::string log2 = read_file(out2 + "/metrics.tsv");
  CHECK(std::count(log2.begin(), log2.end(), '\n') == 3);

  // PCMORPH_SEED steers runs without a --seed flag or config seed
  write_file(config_path, "iterations=2\npoints=18\nhidden=12\nlatent_dim=12\nsteps=2\nlog_every=1\n");
  const std::string env_a = dir + "/env_a", env_b = dir + "/env_b",
                    env_c = dir + "/env_c";
  CHECK(testsup::run_process("PCMORPH_SEED=7 " + kBin + " train --pair " +
                             f.sphere_off + " " + f.cube_off + " --out " +
                             env_a + " --config " + config_path)
            .exit_code == 0);
  CHECK(testsup::run_process("PCMORPH_SEED=7 " + kBin + " train --pair " +
                             f.sphere_off + " " + f.cube_off + " --out " +
                             env_b + " --config " + config_path)
            .exit_code == 0);
  CHECK(testsup::run_process("PCMORPH_SEED=8 " + kBin + " train --pair " +
                             f.sphere_off + " " + f.cube_off + " --out " +
                             env_c + " --config " + config_path)
            .exit_code == 0);
  CHECK(read_file(env_a + "/final.ckpt") == read_file(env_b + "/final.ckpt"));
  CHECK(read_file(env_a + "/final.ckpt") != read_file(env_c + "/final.ckpt"));
}

TEST_CASE("cli: numerical halt exits 3 and keeps a checkpoint") {
  const Fixture& f = fixture();
  const std::string out = testsup::fresh_dir("cli_halt");
  std::string text;
  CHECK(run("train --pair " + f.sphere_off + " " + f.cube_off +
            " --iters 10 --points 16 --hidden 8 --latent 8 --steps 2" +
            " --lr 1e160 --out " + out, &text) == 3);
  CHECK(text.find("halted") != std::string::npos);
  CHECK(fs::exists(out + "/final.ckpt"));
  load_checkpoint(read_file(out + "/final.ckpt")).validate();
}

TEST_CASE("cli: PCMORPH_KERNELS env selects a lane; bad names error") {
  CHECK(testsup::run_process("PCMORPH_KERNELS=scalar " + kBin +
                             " gradcheck --probes 1")
            .exit_code == 0);
  CHECK(testsup::run_process("PCMORPH_KERNELS=warp9 " + kBin +
                             " gradcheck --probes 1")
            .exit_code == 2);
}

TEST_CASE("cli: corrupt or mismatched checkpoint exits 2") {
  const Fixture& f = fixture();
  const std::string dir = testsup::fresh_dir("cli_badckpt");
  const std::string bad = dir + "/bad.ckpt";
  write_file(bad, read_file(f.identity_ckpt).substr(0, 40));
  CHECK(run("interp --ckpt " + bad + " --source " + f.sphere_off +
            " --target " + f.cube_off + " --frames-out " + dir) == 2);
  CHECK(run("eval --ckpt " + dir + "/missing.ckpt --pair " + f.sphere_off +
            " " + f.cube_off) == 2);
}

TEST_CASE("cli: inputs are never mutated") {
  const Fixture& f = fixture();
  const std::string before = read_file(f.sphere_off);
  const std::string out_dir = testsup::fresh_dir("cli_mutate");
  run("baseline --source " + f.sphere_off + " --target " + f.sphere_off +
      " --alpha 0.5 --out " + out_dir);
  run("interp --ckpt " + f.identity_ckpt + " --source " + f.sphere_off +
      " --target " + f.cube_off + " --frames-out " + out_dir + "/frames");
  CHECK(read_file(f.sphere_off) == before);
}
