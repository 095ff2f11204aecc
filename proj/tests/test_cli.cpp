#include "cli.hpp"
#include "etm/dataset.hpp"
#include "etm/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using etm::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("etm_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("gen-data writes identical files on rerun") {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  const std::vector<std::string> base{"gen-data", "--classes", "6", "--per-class", "10",
                                      "--dim", "3", "--seed", "5", "-o"};
  auto args = base;
  args.push_back(a.string());
  REQUIRE(call(args).code == 0);
  args = base;
  args.push_back(b.string());
  REQUIRE(call(args).code == 0);
  CHECK(slurp(a / "dataset.csv") == slurp(b / "dataset.csv"));
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  const etm::Dataset ds = etm::load_csv(a / "dataset.csv");
  CHECK(ds.size() == 60);
  CHECK(ds.feature_dim() == 3);
}

TEST_CASE("usage and data errors map to exit codes") {
  CHECK(call({}).code == etm::cli::kUsage);
  CHECK(call({"bogus"}).code == etm::cli::kUsage);
  CHECK(call({"--help"}).code == etm::cli::kSuccess);
  CHECK(call({"gen-data", "-o", "/nonexistent/etm/dir"}).code == etm::cli::kDataError);
  CHECK(call({"gen-data", "--classes", "0", "-o", scratch("bad").string()}).code != 0);
  CHECK(call({"train", "--data", "/nonexistent.csv", "-o", scratch("nodata").string()}).code ==
        etm::cli::kDataError);
}

TEST_CASE("gen-data, train and eval end to end") {
  const fs::path dir = scratch("e2e");
  REQUIRE(call({"gen-data", "--classes", "10", "--per-class", "12", "--dim", "4", "--seed", "1",
                "-o", dir.string()})
              .code == 0);
  const std::string csv = (dir / "dataset.csv").string();
  const fs::path tdir = dir / "train";
  fs::create_directories(tdir);
  const Result t = call({"train", "--data", csv, "--train-frac", "0.5", "--val-frac", "0",
                         "--ns", "3", "--nq", "3", "--nc", "3", "--episodes", "20",
                         "--hidden", "8", "--embed-dim", "4", "--monitor-every", "0", "-o",
                         tdir.string()});
  INFO(t.err);
  REQUIRE(t.code == 0);
  for (const char* f : {"config.json", "split_manifest.json", "train_log.jsonl", "checkpoint.json"}) {
    CHECK(fs::exists(tdir / f));
  }
  std::ifstream log(tdir / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 20);

  const fs::path edir = dir / "eval";
  fs::create_directories(edir);
  const Result e = call({"eval", "--checkpoint", (tdir / "checkpoint.json").string(), "--data",
                         csv, "--manifest", (tdir / "split_manifest.json").string(), "--way", "5",
                         "--shot", "1", "--episodes", "10", "--queries", "5", "-o",
                         edir.string()});
  INFO(e.err);
  REQUIRE(e.code == 0);
  const auto report = etm::read_json(edir / "eval_5way_1shot.json");
  CHECK(report["mean_accuracy"].get<double>() >= 0.0);
  CHECK(report["mean_accuracy"].get<double>() <= 1.0);

  SUBCASE("an invalid checkpoint is a data error") {
    etm::write_text(dir / "broken.json", "{\"format\": \"nope\"}\n");
    CHECK(call({"eval", "--checkpoint", (dir / "broken.json").string(), "--data", csv, "-o",
                edir.string()})
              .code == etm::cli::kDataError);
  }
  SUBCASE("the prototypical loss is selectable") {
    const fs::path pdir = dir / "proto";
    fs::create_directories(pdir);
    CHECK(call({"train", "--data", csv, "--loss", "proto", "--ns", "2", "--nq", "2", "--nc", "3",
                "--episodes", "5", "--hidden", "8", "--embed-dim", "4", "-o", pdir.string()})
              .code == 0);
    CHECK(etm::read_json(pdir / "checkpoint.json")["loss_kind"] == "prototypical");
  }
  SUBCASE("a config file supplies defaults and flags override it") {
    const fs::path cdir = dir / "cfg";
    fs::create_directories(cdir);
    etm::write_text(dir / "opts.json",
                    "{\"data\": \"" + csv + "\", \"episodes\": 7, \"ns\": 2, \"nq\": 2, "
                    "\"nc\": 3, \"hidden\": [8], \"embed-dim\": 4}\n");
    CHECK(call({"train", "--config", (dir / "opts.json").string(), "--episodes", "4", "-o",
                cdir.string()})
              .code == 0);
    const auto cfg = etm::read_json(cdir / "config.json");
    CHECK(cfg["episodes"] == 4);
    CHECK(cfg["ns"] == 2);
  }
  SUBCASE("resume continues to the new episode budget") {
    CHECK(call({"train", "--data", csv, "--train-frac", "0.5", "--val-frac", "0", "--ns", "3",
                "--nq", "3", "--nc", "3", "--episodes", "30", "--hidden", "8", "--embed-dim",
                "4", "--monitor-every", "0", "--resume", (tdir / "checkpoint.json").string(),
                "-o", tdir.string()})
              .code == 0);
    std::ifstream again(tdir / "train_log.jsonl");
    int n = 0;
    for (std::string line; std::getline(again, line);) ++n;
    CHECK(n >= 20);
  }
}

TEST_CASE("run executes an experiment config") {
  const fs::path dir = scratch("run");
  etm::write_text(dir / "exp.json", R"({
    "dataset": {"synthetic": {"num_classes": 8, "samples_per_class": 10, "feature_dim": 3, "seed": 2}},
    "split": {"train_classes": 5, "val_classes": 0, "test_classes": 3},
    "train": {"episodes": 5, "ns": 2, "nq": 2, "nc": 3, "hidden": [6], "embed-dim": 3,
              "monitor-every": 0},
    "variants": [{"name": "etm"}, {"name": "proto", "loss": "proto"}],
    "eval": {"configs": [{"way": 3, "shot": 1}], "episodes": 5, "queries": 3},
    "seeds": [0, 1]
  })");
  const Result r = call({"run", (dir / "exp.json").string(), "-o", (dir / "out").string()});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "out" / "summary.csv"));
  CHECK(fs::exists(dir / "out" / "etm" / "seed1" / "checkpoint.json"));
  CHECK(fs::exists(dir / "out" / "proto" / "seed0" / "eval_3way_1shot.json"));
  const auto summary = etm::read_json(dir / "out" / "summary.json");
  CHECK(summary["rows"].size() == 4);
}
