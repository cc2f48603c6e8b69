#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "seqcsg/corpus.hpp"
#include "seqcsg/harness.hpp"
#include "seqcsg/semgraph.hpp"
#include "support/oracles.hpp"

using namespace seqcsg;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  std::string cmd = std::string(SEQCSG_CLI_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), pipe))
    output.append(buf, n);
  int status = pclose(pipe);
  RunResult r;
  r.output = output;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const std::string& base_dir() {
  static const std::string dir = [] {
    fs::path p = fs::temp_directory_path() / "seqcsg_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
  }();
  return dir;
}

const std::string& demo_dir() {
  static const std::string dir = [] {
    std::string d = base_dir() + "/demo";
    auto r = run_cli("gen-data --dataset demo --fdim 4 --out " + d);
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

// A trained tiny checkpoint shared by the eval/visualize tests.
const std::string& trained_run_dir() {
  static const std::string dir = [] {
    std::string d = base_dir() + "/run_train";
    auto r = run_cli(
        "train --data-dir " + demo_dir() + " --out " + d +
        " --hidden-size 16 --heads 2 --enc-layers 1 --dec-layers 1"
        " --epochs 2 --batch-size 10 --lr 1e-3 --seed 11"
        " --k-object-object 2 --k-image-object 2 --n-max 96");
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen-data produces a dataset that validates cleanly") {
  auto r = run_cli("validate --data-dir " + demo_dir());
  INFO(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("OK: 0 finding(s)") != std::string::npos);
}

TEST_CASE("gen-data refuses to overwrite without force") {
  auto r = run_cli("gen-data --dataset demo --fdim 4 --out " + demo_dir());
  CHECK(r.code == 4);
  auto forced =
      run_cli("gen-data --dataset demo --fdim 4 --out " + demo_dir() + " --force");
  CHECK(forced.code == 0);
}

TEST_CASE("validate reports findings with nonzero exit") {
  std::string dir = base_dir() + "/broken";
  fs::create_directories(dir);
  fs::copy(demo_dir(), dir, fs::copy_options::overwrite_existing |
                                fs::copy_options::recursive);
  std::ofstream(dir + "/train.tsv", std::ios::app)
      << "bad1\tmixed\tsara\thello $T$\tdemo_img0\n";
  auto r = run_cli("validate --data-dir " + dir);
  CHECK(r.code == 2);
  CHECK(r.output.find("unknown label") != std::string::npos);
  CHECK(r.output.find("FAILED") != std::string::npos);
}

TEST_CASE("train writes a manifest and its declared artifacts") {
  const std::string& d = trained_run_dir();
  CHECK(fs::exists(d + "/manifest.json"));
  CHECK(fs::exists(d + "/checkpoint.bin"));
  CHECK(fs::exists(d + "/metrics.jsonl"));
  CHECK(fs::exists(d + "/dev_predictions.jsonl"));
  CHECK_FALSE(fs::exists(d + "/run.lock"));

  auto manifest = nlohmann::json::parse(read_file(d + "/manifest.json"));
  CHECK(manifest.at("command") == "train");
  CHECK(manifest.at("config").contains("model"));
  CHECK(manifest.at("config").contains("train"));
  CHECK_FALSE(manifest.at("input_digests").empty());
  for (const auto& [name, rel] :
       manifest.at("outputs").get<std::map<std::string, std::string>>())
    CHECK(fs::exists(d + "/" + rel));

  // a second run into the same directory is refused without --force
  auto again = run_cli(
      "train --data-dir " + demo_dir() + " --out " + d +
      " --hidden-size 16 --heads 2 --enc-layers 1 --dec-layers 1"
      " --epochs 1 --batch-size 10 --lr 1e-3 --seed 11");
  CHECK(again.code == 4);
  CHECK(again.output.find("--force") != std::string::npos);
}

TEST_CASE("train can warm-start from an existing checkpoint") {
  std::string out = base_dir() + "/run_warm";
  auto r = run_cli("train --data-dir " + demo_dir() + " --out " + out +
                   " --init-checkpoint " + trained_run_dir() +
                   "/checkpoint.bin --epochs 1 --batch-size 10 --lr 1e-4"
                   " --seed 12 --k-object-object 2 --k-image-object 2");
  INFO(r.output);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out + "/checkpoint.bin"));
  auto manifest = nlohmann::json::parse(read_file(out + "/manifest.json"));
  CHECK(manifest.at("config").contains("init_checkpoint"));
}

TEST_CASE("eval writes metrics and per-sample predictions") {
  std::string out = base_dir() + "/run_eval";
  auto r = run_cli("eval --data-dir " + demo_dir() + " --checkpoint " +
                   trained_run_dir() + "/checkpoint.bin --split test --out " +
                   out + " --k-object-object 2 --k-image-object 2");
  INFO(r.output);
  REQUIRE(r.code == 0);
  auto metrics = nlohmann::json::parse(read_file(out + "/metrics.json"));
  CHECK(metrics.at("split") == "test");
  double acc = metrics.at("accuracy").get<double>();
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  auto lines = detail::file_lines(read_file(out + "/predictions.jsonl"));
  CHECK(lines.size() == 20);
}

TEST_CASE("visualize emits weights whose rows sum to one plus a figure") {
  std::string out = base_dir() + "/run_vis";
  auto r = run_cli("visualize --data-dir " + demo_dir() + " --checkpoint " +
                   trained_run_dir() +
                   "/checkpoint.bin --split test --sample-id demo_0 --out " +
                   out + " --k-object-object 2 --k-image-object 2");
  INFO(r.output);
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(out + "/attention_weights.tsv"));
  REQUIRE(fs::exists(out + "/attention_heatmap.ppm"));

  auto lines = detail::file_lines(read_file(out + "/attention_weights.tsv"));
  REQUIRE(lines.size() >= 3);  // header + at least one row + mean
  auto header = str::split(lines[0], '\t');
  CHECK(header[0] == "layer");
  CHECK(header.size() == 3 + 2);  // two sub-image tokens at k_io=2
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    auto fields = str::split(lines[i], '\t');
    double row_sum = std::stod(fields[2]);
    CHECK_THAT(row_sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
  }

  // re-rendering the numeric file reproduces the figure byte for byte
  std::string replot = base_dir() + "/replot.ppm";
  auto p = run_cli("plot --weights " + out + "/attention_weights.tsv --out " +
                   replot);
  REQUIRE(p.code == 0);
  CHECK(read_file(replot) == read_file(out + "/attention_heatmap.ppm"));
}

TEST_CASE("visualize without sub-image tokens exits cleanly") {
  // strip the scene graphs: every sample then has zero [img] tokens
  std::string dir = base_dir() + "/no_graphs";
  fs::create_directories(dir);
  for (const char* f : {"train.tsv", "dev.tsv", "test.tsv", "captions.tsv"})
    fs::copy_file(demo_dir() + "/" + f, dir + "/" + std::string(f),
                  fs::copy_options::overwrite_existing);
  std::ofstream(dir + "/scene_graphs.resnet50.sgf")
      << "#seqcsg-scene-graph v1 fdim=4\n";
  std::string out = base_dir() + "/run_vis_empty";
  auto r = run_cli("visualize --data-dir " + dir + " --checkpoint " +
                   trained_run_dir() +
                   "/checkpoint.bin --split test --sample-id demo_0 --out " +
                   out);
  CHECK(r.code == 0);
  CHECK(r.output.find("nothing to visualize") != std::string::npos);
  CHECK_FALSE(fs::exists(out + "/attention_heatmap.ppm"));
}

TEST_CASE("matrix dump matches the library-built matrix") {
  std::string prefix = base_dir() + "/m_demo0";
  auto r = run_cli("matrix --data-dir " + demo_dir() +
                   " --split train --sample-id demo_0 --out " + prefix);
  INFO(r.output);
  REQUIRE(r.code == 0);

  // expected: same construction path with the CLI's default parameters
  JoinedData joined = load_joined_data(demo_dir(), "resnet50", true);
  const JoinedSample* target = nullptr;
  for (const auto& j : joined.train)
    if (j.sample.sample_id == "demo_0") target = &j;
  REQUIRE(target);
  ModelConfig mc;
  mc.feature_dim = 4;
  SemanticSequence seq = build_sequence(*target, mc, 5, 5);
  VisibilityMatrix m = build_visibility_matrix(seq);
  REQUIRE(m == oracles::visibility_oracle(seq));

  std::string bin = read_file(prefix + ".bin");
  REQUIRE(bin.size() == m.cells.size());
  CHECK(std::equal(bin.begin(), bin.end(),
                   reinterpret_cast<const char*>(m.cells.data())));
  CHECK(read_file(prefix + ".txt") == m.text_grid());
}

TEST_CASE("sweep emits one row per requested k and plots") {
  std::string out = base_dir() + "/run_sweep";
  auto r = run_cli(
      "sweep --data-dir " + demo_dir() + " --out " + out +
      " --k 0 --k 1 --hidden-size 16 --heads 2 --enc-layers 1 --dec-layers 1"
      " --epochs 1 --batch-size 10 --lr 1e-3 --seed 11 --n-max 96");
  INFO(r.output);
  REQUIRE(r.code == 0);
  auto lines = detail::file_lines(read_file(out + "/sweep.tsv"));
  REQUIRE(lines.size() == 3);  // header + two rows
  CHECK(str::split(lines[1], '\t')[0] == "0");
  CHECK(str::split(lines[2], '\t')[0] == "1");

  std::string fig = base_dir() + "/sweep.ppm";
  auto p = run_cli("plot --table " + out + "/sweep.tsv --out " + fig);
  REQUIRE(p.code == 0);
  CHECK(read_file(fig).rfind("P6\n", 0) == 0);
}

TEST_CASE("ablate runs the requested switch set into one table") {
  std::string out = base_dir() + "/run_ablate";
  auto r = run_cli(
      "ablate --data-dir " + demo_dir() + " --out " + out +
      " --flags caption adjacency-matrix adjacency-matrix-scene-graph prompt"
      " freeze"
      " --hidden-size 16 --heads 2 --enc-layers 1 --dec-layers 1"
      " --epochs 1 --batch-size 10 --lr 1e-3 --seed 11 --n-max 96");
  INFO(r.output);
  REQUIRE(r.code == 0);
  auto lines = detail::file_lines(read_file(out + "/ablation.tsv"));
  REQUIRE(lines.size() == 6);  // header + five rows
  CHECK(lines[1].rfind("w/o {caption}", 0) == 0);
  CHECK(lines[3].rfind("w/o {adjacency matrix & scene graph}", 0) == 0);
}

TEST_CASE("config files fill in unset flags and the command line wins") {
  std::string cfg = base_dir() + "/train.cfg";
  std::ofstream(cfg) << "[train]\n"
                     << "epochs=1\nbatch-size=10\nlr=1e-3\nseed=11\n"
                     << "hidden-size=16\nheads=2\nenc-layers=1\ndec-layers=1\n"
                     << "k-object-object=2\nk-image-object=2\nn-max=96\n";
  std::string out1 = base_dir() + "/run_cfg1";
  auto r1 = run_cli("--config " + cfg + " train --data-dir " + demo_dir() +
                    " --out " + out1);
  INFO(r1.output);
  REQUIRE(r1.code == 0);
  // one epoch -> two metric records (train + dev)
  CHECK(detail::file_lines(read_file(out1 + "/metrics.jsonl")).size() == 2);

  std::string out2 = base_dir() + "/run_cfg2";
  auto r2 = run_cli("--config " + cfg + " train --data-dir " + demo_dir() +
                    " --out " + out2 + " --epochs 2");
  INFO(r2.output);
  REQUIRE(r2.code == 0);
  CHECK(detail::file_lines(read_file(out2 + "/metrics.jsonl")).size() == 4);
}

TEST_CASE("config and data failures use distinct exit codes") {
  // usage error: unknown template value
  auto bad_flag = run_cli("train --data-dir " + demo_dir() +
                          " --out /tmp/never --template nonsense");
  CHECK(bad_flag.code == 3);
  // config error: invalid head split
  auto bad_cfg = run_cli("train --data-dir " + demo_dir() +
                         " --out " + base_dir() + "/never2" +
                         " --hidden-size 10 --heads 3 --epochs 1");
  CHECK(bad_cfg.code == 3);
  // data error: missing dataset directory
  auto bad_data = run_cli("validate --data-dir " + base_dir() + "/missing");
  CHECK(bad_data.code != 0);
  CHECK(bad_data.code != 3);
}
