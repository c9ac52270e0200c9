#include "test_prelude.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "test_util.h"
#include "veil/config.h"
#include "veil/csv_io.h"
#include "veil/errors.h"
#include "veil/manifest.h"

using namespace veil;
using veil::test::TempDir;
namespace fs = std::filesystem;

namespace {

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI and returns its exit status; stderr goes to `log`.
int veil_cli(const std::vector<std::string>& args, const fs::path& log, const std::string& env = "") {
  std::string cmd = "env -u VEIL_OUTPUT_ROOT " + env + " " + quote(VEIL_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " >" + quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::vector<std::string> kTiny = {
    "--data.height", "16", "--data.width", "16", "--data.length", "10", "--data.videos", "2",
    "--data.eval_videos", "2", "--hiding.latent_dim", "16", "--hiding.depth", "1",
    "--hiding.attention_heads", "2", "--trainer.batch_size", "2"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

// One tiny trained run shared by the tests below.
const fs::path& trained_run() {
  static TempDir dir;
  static bool done = false;
  if (!done) {
    const int code = veil_cli(with({"train", "--output_dir", dir.path().string(), "--trainer.steps", "2",
                                    "--trainer.codec_pretrain_steps", "1", "--trainer.eval_every", "1"},
                                   kTiny),
                              dir / "log.txt");
    REQUIRE_MESSAGE(code == 0, test::read_file(dir / "log.txt"));
    done = true;
  }
  return dir.path();
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel.rfind("manifest_", 0) == 0 || rel == "log.txt") continue;
    out[rel] = test::read_file(e.path());
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
  TempDir tmp;
  const auto log = tmp / "log.txt";
  CHECK(veil_cli({}, log) == 2);
  CHECK(veil_cli({"no-such-command"}, log) == 2);
  CHECK(veil_cli({"gen-data", "--no-such-flag", "1"}, log) == 2);
  CHECK(veil_cli({"gen-data", "--output_dir", (tmp / "a").string(), "--data.height", "60"}, log) == 2);
  CHECK(test::read_file(log).find("divisible by 8") != std::string::npos);
  CHECK(veil_cli({"gen-data", "--output_dir", (tmp / "a").string(), "--data.height", "abc"}, log) == 2);
  CHECK(veil_cli({"transmit", "--output_dir", (tmp / "b").string()}, log) == 2);
  CHECK(veil_cli({"train", "--config", (tmp / "missing.json").string()}, log) == 2);
  CHECK(veil_cli({"--help"}, log) == 0);
  CHECK(veil_cli({"--version"}, log) == 0);

  // A file that is not a checkpoint is a runtime failure.
  std::ofstream(tmp / "junk.veil") << "junk";
  CHECK(veil_cli({"transmit", "--output_dir", (tmp / "c").string(), "--checkpoint", (tmp / "junk.veil").string()},
                 log) == 3);
}

TEST_CASE("gen-data is deterministic and rerunnable from its manifest") {
  TempDir tmp;
  const std::vector<std::string> args = {"--data.height", "16", "--data.width", "16", "--data.length", "5",
                                         "--data.videos", "1", "--data.eval_videos", "1", "--seed", "4"};
  REQUIRE(veil_cli(with({"gen-data", "--output_dir", (tmp / "a").string()}, args), tmp / "log") == 0);
  REQUIRE(veil_cli(with({"gen-data", "--output_dir", (tmp / "b").string()}, args), tmp / "log") == 0);
  const auto a = tree_contents(tmp / "a");
  CHECK(a.size() == 4 * 6);  // 4 pools x (manifest + 5 frames)
  CHECK(a == tree_contents(tmp / "b"));
  CHECK(fs::exists(tmp / "a" / "eval_secret" / "video_000" / "frames" / "000004.png"));

  auto manifest = nlohmann::json::parse(test::read_file(tmp / "a" / "manifest_gen-data.json"));
  CHECK(manifest["command"] == "gen-data");
  CHECK(manifest["seed"] == 4);
  CHECK(manifest["config"]["data.height"] == 16);
  CHECK(manifest["config_sha1"] == sha1_hex(manifest["config"].dump()));
  CHECK(manifest["outputs"].size() == 4);
  CHECK(manifest.contains("version"));

  REQUIRE(veil_cli({"gen-data", "--config", (tmp / "a" / "manifest_gen-data.json").string(), "--output_dir",
                    (tmp / "c").string()},
                   tmp / "log") == 0);
  CHECK(tree_contents(tmp / "c") == a);

  // Different seed, different videos.
  auto reseeded = args;
  reseeded.back() = "5";
  REQUIRE(veil_cli(with({"gen-data", "--output_dir", (tmp / "d").string()}, reseeded), tmp / "log") == 0);
  CHECK(tree_contents(tmp / "d") != a);
}

TEST_CASE("VEIL_OUTPUT_ROOT redirects outputs") {
  TempDir tmp;
  REQUIRE(veil_cli({"gen-data", "--output_dir", (tmp / "ignored").string(), "--data.height", "16", "--data.width",
                    "16", "--data.length", "5", "--data.videos", "1", "--data.eval_videos", "0"},
                   tmp / "log", "VEIL_OUTPUT_ROOT=" + quote((tmp / "root").string())) == 0);
  CHECK(fs::exists(tmp / "root" / "cover" / "video_000" / "manifest.json"));
  CHECK_FALSE(fs::exists(tmp / "ignored"));
}

TEST_CASE("train writes checkpoint, logs and probe table") {
  const auto& run = trained_run();
  CHECK(fs::exists(run / "checkpoint.veil"));
  auto loss = read_csv(run / "loss.csv");
  CHECK((loss.header == std::vector<std::string>{"step", "term", "value", "sample_kind"}));
  CHECK(loss.comment.find("seed=0") != std::string::npos);
  auto evals = read_csv(run / "evals.csv");
  CHECK(evals.rows.size() == 2);
  auto manifest = nlohmann::json::parse(test::read_file(run / "manifest_train.json"));
  CHECK(manifest["summary"]["final_step"] == 3);
}

TEST_CASE("transmit round trip") {
  const auto& run = trained_run();
  TempDir tmp;
  REQUIRE(veil_cli(with({"gen-data", "--output_dir", (tmp / "data").string()}, kTiny), tmp / "log") == 0);
  const auto cover = (tmp / "data" / "eval_cover" / "video_000").string();
  const auto secret = (tmp / "data" / "eval_secret" / "video_000").string();
  const auto ck = (run / "checkpoint.veil").string();

  REQUIRE(veil_cli({"transmit", "--checkpoint", ck, "--transmit.cover", cover, "--transmit.secret", secret,
                    "--scheduler.capacity_ratio", "1", "--output_dir", (tmp / "t1").string()},
                   tmp / "log") == 0);
  auto report = nlohmann::json::parse(test::read_file(tmp / "t1" / "report.json"));
  CHECK(report["schedule"]["num_hidden"] == 2);
  CHECK(report["secret"].is_object());
  CHECK(fs::exists(tmp / "t1" / "regular" / "frames" / "000009.png"));
  CHECK(fs::exists(tmp / "t1" / "authorized_cover" / "manifest.json"));
  CHECK(read_csv(tmp / "t1" / "report.csv").rows.size() > 3);

  REQUIRE(veil_cli({"transmit", "--checkpoint", ck, "--transmit.cover", cover, "--transmit.secret", secret,
                    "--scheduler.capacity_ratio", "0", "--output_dir", (tmp / "t0").string()},
                   tmp / "log") == 0);
  CHECK(test::read_file(tmp / "log").find("warning") != std::string::npos);
  auto null_report = nlohmann::json::parse(test::read_file(tmp / "t0" / "report.json"));
  CHECK(null_report["schedule"]["num_hidden"] == 0);
  CHECK(null_report["null"]["extractor_mse_to_zero"].get<double>() >= 0.0);

  // Same seed, same bytes.
  REQUIRE(veil_cli({"transmit", "--checkpoint", ck, "--transmit.cover", cover, "--transmit.secret", secret,
                    "--scheduler.capacity_ratio", "1", "--output_dir", (tmp / "t2").string()},
                   tmp / "log") == 0);
  CHECK(tree_contents(tmp / "t1") == tree_contents(tmp / "t2"));

  // A frame directory with a gap is an input error.
  fs::remove(tmp / "data" / "eval_cover" / "video_001" / "frames" / "000003.png");
  CHECK(veil_cli({"transmit", "--checkpoint", ck, "--transmit.cover", (tmp / "data" / "eval_cover" / "video_001").string(),
                  "--output_dir", (tmp / "t3").string()},
                 tmp / "log") == 2);
}

TEST_CASE("sweep emits one row per grid point and video") {
  const auto& run = trained_run();
  TempDir tmp;
  REQUIRE(veil_cli(with({"sweep", "--checkpoint", (run / "checkpoint.veil").string(), "--sweep.snr_db", "10,inf",
                         "--sweep.capacity_ratio", "0,0.5,1", "--output_dir", tmp.path().string()},
                        kTiny),
                   tmp / "log") == 0);
  auto table = read_csv(tmp / "sweep.csv");
  CHECK(table.rows.size() == 2 * 3 * 2);
  CHECK(table.header.front() == "video");
  for (auto stem : {"sweep_psnr.png", "sweep_ssim.png", "sweep_fvd_lite.png"}) CHECK(fs::exists(tmp / "plots" / stem));

  CHECK(veil_cli(with({"sweep", "--checkpoint", (run / "checkpoint.veil").string(), "--sweep.capacity_ratio", "1.5",
                       "--output_dir", tmp.path().string()},
                      kTiny),
                 tmp / "log") == 2);
}

TEST_CASE("detect and attack produce their tables") {
  const auto& run = trained_run();
  TempDir tmp;
  const auto ck = (run / "checkpoint.veil").string();
  REQUIRE(veil_cli(with({"detect", "--checkpoint", ck, "--adversary.dataset_size", "16", "--adversary.epochs", "1",
                         "--adversary.batch_size", "8", "--output_dir", tmp.path().string()},
                        kTiny),
                   tmp / "log") == 0);
  for (auto f : {"roc_r0.2.csv", "roc_r1.csv", "roc_shuffled.csv", "detect_summary.json", "plots/roc.png"}) {
    CHECK_MESSAGE(fs::exists(tmp / f), f);
  }
  auto roc = read_csv(tmp / "roc_r1.csv");
  CHECK((roc.header == std::vector<std::string>{"threshold", "fpr", "tpr"}));

  REQUIRE(veil_cli(with({"attack", "--checkpoint", ck, "--adversary.pgd_steps", "2", "--output_dir",
                         tmp.path().string()},
                        kTiny),
                   tmp / "log") == 0);
  auto table = read_csv(tmp / "attack.csv");
  CHECK(table.rows.size() == 4);
  auto summary = nlohmann::json::parse(test::read_file(tmp / "attack_summary.json"));
  CHECK(summary["within_budget"] == true);
  CHECK(summary["fgsm_equals_pgd1"] == true);
}

TEST_CASE("report re-renders plots deterministically") {
  const auto& run = trained_run();
  TempDir tmp;
  fs::copy_file(run / "loss.csv", tmp / "loss.csv");
  REQUIRE(veil_cli({"report", "--output_dir", tmp.path().string()}, tmp / "log") == 0);
  const auto first = test::read_file(tmp / "plots" / "loss.png");
  CHECK(first.size() > 100);
  REQUIRE(veil_cli({"report", "--output_dir", tmp.path().string()}, tmp / "log") == 0);
  CHECK(test::read_file(tmp / "plots" / "loss.png") == first);
  TempDir empty;
  CHECK(veil_cli({"report", "--output_dir", empty.path().string()}, empty / "log") == 2);
}

TEST_CASE("config keys") {
  ExperimentConfig c;
  CHECK(c.integer("trainer.steps") == 2000);
  c.set("trainer.steps", "7");
  CHECK(c.integer("trainer.steps") == 7);
  c.set("channel.snr_db", "inf");
  CHECK(std::isinf(c.real("channel.snr_db")));
  c.set("sweep.snr_db", "1,2.5");
  CHECK((c.reals("sweep.snr_db") == std::vector<double>{1.0, 2.5}));
  CHECK_THROWS_AS(c.set("trainer.nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("trainer.steps", "x"), ConfigError);
  c.merge(flatten_config({{"trainer", {{"batch_size", 3}}}}));
  CHECK(c.integer("trainer.batch_size") == 3);
  CHECK(c.train_config().batch_size == 3);
  CHECK_THROWS_AS(c.merge({{"bogus", 1}}), ConfigError);
}

TEST_CASE("sha1 and CSV helpers") {
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  auto t = parse_csv("# seed=1 version=x\na,b\n1,2\n3,4\n");
  CHECK(t.comment == "seed=1 version=x");
  CHECK((t.numbers("b") == std::vector<double>{2, 4}));
  CHECK_THROWS_AS(parse_csv("a,b\n1\n"), EvaluationError);
  CHECK(parse_csv(t.str()).rows == t.rows);
}

}  // TEST_SUITE
