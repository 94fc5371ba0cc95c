#include "doctest.h"

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "mcaae/checkpoint.hpp"
#include "mcaae/error.hpp"
#include "mcaae/pipeline.hpp"

using namespace mcaae;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(
seed = 3
data.image_size = 16
data.train.kind = synth
data.train.generator = bars-vs-blobs
data.train.per_class = 10
data.test.kind = synth
data.test.generator = bars-vs-blobs
data.test.per_class = 6
data.tri.kind = synth
data.tri.generator = triangles
data.tri.per_class = 12
data.crs.kind = synth
data.crs.generator = crosses
data.crs.per_class = 12
model.hidden = 24
model.latent_dim = 4
train.epochs = 6
train.batch_size = 8
classifier.epochs = 10
inference.m = 4
inference.n = 2
eval.in = test
eval.out = tri, crs
attractors.max_samples = 5
attractors.orbit_steps = 3
attractors.orbit_dumps = 2
attractors.basin_trials = 3
attractors.power_iters = 20
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mcaae-pipeline-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny(const fs::path& out) {
  RunConfig cfg = RunConfig::from_kv(KeyValueConfig::parse(kTinyConfig));
  cfg.out_dir = out;
  return cfg;
}

void run_all(const RunConfig& cfg) {
  std::ostringstream log;
  cmd_train(cfg, log);
  cmd_fit_classifier(cfg, autoencoder_path(cfg), log);
  cmd_eval(cfg, autoencoder_path(cfg), classifier_path(cfg), log);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MCAAE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("key-value config parsing") {
  const auto kv = KeyValueConfig::parse("a = 1\n# comment\nb = x, y ,z\n\nc = 0.5, 2\nflag = true\n");
  CHECK(kv.get_int("a", 0) == 1);
  CHECK(kv.get_list("b", {}) == std::vector<std::string>{"x", "y", "z"});
  CHECK(kv.get_range("c", {0, 0}) == std::pair<double, double>{0.5, 2.0});
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_string("missing", "d") == "d");
  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), ValidationError);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ValidationError);
  CHECK_THROWS_AS(KeyValueConfig::parse("a = x").get_int("a", 0), ValidationError);
}

TEST_CASE("run config round-trips through its resolved form") {
  const RunConfig cfg = tiny("somewhere");
  CHECK_NOTHROW(cfg.validate());
  const std::string text = cfg.to_kv().serialize();
  CHECK(RunConfig::from_kv(KeyValueConfig::parse(text)).to_kv().serialize() == text);
}

TEST_CASE("run config rejects typos and bad values") {
  CHECK_THROWS_AS(RunConfig::from_kv(KeyValueConfig::parse("trian.epochs = 3\n")), ValidationError);
  RunConfig cfg = tiny("x");
  cfg.threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = tiny("x");
  cfg.m_inferences = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = tiny("x");
  cfg.eval_out = {"nope"};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = tiny("x");
  cfg.datasets["train"] = DatasetSpec{"idx", "", 0, 0, "/no/such/images", "/no/such/labels", "", 0};
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("default config describes the reference task") {
  const RunConfig cfg = RunConfig::from_kv(KeyValueConfig{});
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.image_size == 64);
  CHECK(cfg.arch.latent_dim == 10);
  CHECK(cfg.train.epochs == 2000);
  CHECK(cfg.train.learning_rate == 1e-4);
  CHECK(cfg.m_inferences == 20);
  CHECK(cfg.n_recursions == 2);
  CHECK(cfg.keep_prob == 0.67);
  CHECK(cfg.datasets.at("train").per_class == 250);
  CHECK(cfg.eval_out == std::vector<std::string>{"triangles", "crosses"});
}

TEST_CASE("pipeline is byte-for-byte deterministic") {
  const RunConfig a = tiny(fresh_dir("a")), b = tiny(fresh_dir("b"));
  run_all(a);
  run_all(b);
  for (const char* f : {"autoencoder.ckpt", "classifier.ckpt", "loss.csv", "metrics.csv", "metrics.json",
                        "histograms.csv", "predictions_test.csv", "predictions_tri.csv"}) {
    INFO(f);
    CHECK(slurp(a.out_dir / f) == slurp(b.out_dir / f));
  }
  CHECK(slurp(a.out_dir / "metrics.csv").rfind("d_in,d_out,auroc,aupr,fpr95,n_in,n_out\n", 0) == 0);
  // resolved config reproduces the run
  RunConfig again = RunConfig::load(a.out_dir / "resolved_config.txt");
  again.out_dir = fresh_dir("c");
  run_all(again);
  CHECK(slurp(again.out_dir / "metrics.json") == slurp(a.out_dir / "metrics.json"));
}

TEST_CASE("eval of a dataset against itself is near chance") {
  RunConfig cfg = tiny(fresh_dir("self"));
  cfg.datasets["test"].per_class = 40;
  cfg.eval_out = {"test"};
  cfg.reference_out = "test";
  std::ostringstream log;
  cmd_train(cfg, log);
  cmd_fit_classifier(cfg, autoencoder_path(cfg), log);
  const EvalReport r = cmd_eval(cfg, autoencoder_path(cfg), classifier_path(cfg), log);
  REQUIRE(r.rows.size() == 1);
  CHECK(std::abs(r.rows[0].auroc - 0.5) <= 0.05);
}

TEST_CASE("uncertainty mode uses misclassified samples as positives") {
  RunConfig cfg = tiny(fresh_dir("unc"));
  cfg.eval_out.clear();
  cfg.reference_out.clear();
  std::ostringstream log;
  cmd_train(cfg, log);
  cmd_fit_classifier(cfg, autoencoder_path(cfg), log);
  const EvalReport r = cmd_eval(cfg, autoencoder_path(cfg), classifier_path(cfg), log);
  CHECK_FALSE(r.separation.has_value());
  if (!r.rows.empty()) CHECK(r.rows[0].d_out == "misclassified");
  CHECK(fs::exists(cfg.out_dir / "metrics.json"));
}

TEST_CASE("attractor analysis writes one row per sample and K orbit strips") {
  RunConfig cfg = tiny(fresh_dir("attr"));
  cfg.attractors.compare = {"tri"};
  std::ostringstream log;
  cmd_train(cfg, log);
  const auto before = read_file_bytes(autoencoder_path(cfg));
  cmd_analyze_attractors(cfg, autoencoder_path(cfg), log);
  const std::string csv = slurp(cfg.out_dir / "attractors.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 + 5);
  std::size_t strips = 0;
  for (const auto& e : fs::directory_iterator(cfg.out_dir / "orbits")) strips += e.path().extension() == ".pgm";
  CHECK(strips == 2);
  cmd_fit_classifier(cfg, autoencoder_path(cfg), log);
  CHECK(read_file_bytes(autoencoder_path(cfg)) == before);
}

TEST_CASE("decide needs a threshold") {
  RunConfig cfg = tiny(fresh_dir("dec"));
  std::ostringstream log;
  cmd_train(cfg, log);
  cmd_fit_classifier(cfg, autoencoder_path(cfg), log);
  CHECK_THROWS_AS(cmd_decide(cfg, autoencoder_path(cfg), classifier_path(cfg), log), ValidationError);
  cfg.threshold = 0.5;
  cmd_decide(cfg, autoencoder_path(cfg), classifier_path(cfg), log);
  const std::string csv = slurp(cfg.out_dir / "decisions.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 12 + 12 + 12);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = fresh_dir("cli");
  {
    std::ofstream(dir / "ok.cfg") << kTinyConfig;
    std::ofstream(dir / "missing.cfg") << "data.train.kind = idx\ndata.train.images = /no/such/file\n"
                                          "data.train.labels = /no/such/labels\neval.in = train\n";
    std::ofstream(dir / "typo.cfg") << "train.epoch = 3\n";
    std::ofstream(dir / "diverge.cfg") << kTinyConfig << "train.learning_rate = 1e300\n";
  }
  const std::string out = " --out " + (dir / "run").string();
  CHECK(run_cli("train --config " + (dir / "ok.cfg").string() + out) == 0);
  CHECK(run_cli("train --config " + (dir / "missing.cfg").string() + out) == 2);
  CHECK(run_cli("train --config " + (dir / "typo.cfg").string() + out) == 2);
  CHECK(run_cli("train --config " + (dir / "diverge.cfg").string() + " --out " + (dir / "div").string()) == 3);
  CHECK(run_cli("train") == 2);
  CHECK(run_cli("frobnicate --config " + (dir / "ok.cfg").string()) == 2);
  CHECK(run_cli("eval --config " + (dir / "ok.cfg").string() + out) == 2);  // no classifier yet
  CHECK(run_cli("fit-classifier --config " + (dir / "ok.cfg").string() + out) == 0);
  CHECK(run_cli("decide --config " + (dir / "ok.cfg").string() + out) == 2);
  CHECK(run_cli("decide --config " + (dir / "ok.cfg").string() + out + " --threshold 0.6") == 0);
  CHECK(run_cli("eval --config " + (dir / "ok.cfg").string() + out + " --threshold 2") == 2);

  // checkpoint version mismatch
  auto bytes = read_file_bytes(dir / "run" / "autoencoder.ckpt");
  bytes[4] = 9;
  write_file_bytes(dir / "bad.ckpt", bytes);
  CHECK(run_cli("fit-classifier --config " + (dir / "ok.cfg").string() + out + " --checkpoint " +
                (dir / "bad.ckpt").string()) == 2);
}
