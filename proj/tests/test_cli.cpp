#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

// End-to-end checks driving the installed binary; ctest provides its path
// through CIR_BIN.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string binary() {
  const char* bin = std::getenv("CIR_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "CIR_BIN must point at the cir binary");
  return bin;
}

int run(const std::string& args) {
  std::string cmd = binary() + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() /
           ("cir_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string p(const std::string& rel) const { return (root / rel).string(); }
  static inline int counter = 0;
};

constexpr const char* kTinyStore =
    "--classes 3 --scenarios 2 --locations 2 --samples-per-cell 10 "
    "--video-dim 8 --text-dim 4 --seed 7";
constexpr const char* kTinyModel =
    "--epochs 2 --decay-epochs \"\" --batch-size 8 --hidden-dim 8 "
    "--embed-dim 4 --qk-dim 2 --seed 3";

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("generate is deterministic per seed and feeds split") {
  Workspace ws;
  REQUIRE(run("generate --out " + ws.p("a") + " " + kTinyStore) == 0);
  REQUIRE(run("generate --out " + ws.p("b") + " " + kTinyStore) == 0);
  CHECK(slurp(ws.root / "a/video.bin") == slurp(ws.root / "b/video.bin"));
  CHECK(slurp(ws.root / "a/text.bin") == slurp(ws.root / "b/text.bin"));
  CHECK(slurp(ws.root / "a/index.jsonl") == slurp(ws.root / "b/index.jsonl"));

  CHECK(run("split --data " + ws.p("a") + " --out " + ws.p("split.json") +
            " --held-scenario 0 --held-location 0 --mode exclude_both") == 0);
  CHECK(fs::exists(ws.root / "split.json"));
}

TEST_CASE("invalid dimensions exit with the usage code") {
  Workspace ws;
  CHECK(run("generate --out " + ws.p("bad") + " --classes 1") == 2);
  CHECK(run("generate") == 2);           // missing --out
  CHECK(run("not-a-command") == 2);
}

TEST_CASE("erm equals cir with both lambdas at zero in final metrics") {
  Workspace ws;
  REQUIRE(run("generate --out " + ws.p("store") + " " + kTinyStore) == 0);
  REQUIRE(run("split --data " + ws.p("store") + " --out " + ws.p("s.json") +
              " --held-scenario 0 --held-location 0") == 0);
  std::string common = " --data " + ws.p("store") + " --split " +
                       ws.p("s.json") + " --lr 1e-4 " + kTinyModel;
  REQUIRE(run("train --method erm --out " + ws.p("erm") + common) == 0);
  REQUIRE(run("train --method cir --lambda1 0 --lambda2 0 --out " +
              ws.p("cir0") + common) == 0);
  CHECK(slurp(ws.root / "erm/metrics.csv") ==
        slurp(ws.root / "cir0/metrics.csv"));
  CHECK(slurp(ws.root / "erm/val.csv") == slurp(ws.root / "cir0/val.csv"));
}

TEST_CASE("emitted config records paper defaults and mask policy") {
  Workspace ws;
  // enough scenarios that every masked batch keeps other-scenario support
  REQUIRE(run("generate --out " + ws.p("store") +
              " --classes 3 --scenarios 4 --locations 2 "
              "--samples-per-cell 12 --video-dim 8 --text-dim 4 --seed 7") ==
          0);
  REQUIRE(run("split --data " + ws.p("store") + " --out " + ws.p("s.json") +
              " --held-scenario 0 --held-location 0") == 0);
  // explicitly small epochs so the run stays cheap; the untouched fields
  // must come out as the published configuration
  REQUIRE(run("train --method cir --mask-policy no-same-scenario --out " +
              ws.p("run") + " --data " + ws.p("store") + " --split " +
              ws.p("s.json") +
              " --epochs 1 --decay-epochs \"\" --batch-size 16 --hidden-dim 8 "
              "--embed-dim 4 --qk-dim 2 --seed 3") == 0);
  std::ifstream is(ws.root / "run/config.json");
  json j = json::parse(is);
  CHECK(j.at("lr") == 2e-4);
  CHECK(j.at("lambda1") == 1.0);
  CHECK(j.at("lambda2") == 0.5);
  CHECK(j.at("adam_beta1") == 0.9);
  CHECK(j.at("adam_beta2") == 0.999);
  CHECK(j.at("adam_eps") == 1e-8);
  CHECK(j.at("mask_policy") == "no-same-scenario");
  CHECK(j.at("val_fraction") == 0.10);
}

TEST_CASE("a run is reproducible from its emitted config.json alone") {
  Workspace ws;
  REQUIRE(run("generate --out " + ws.p("store") + " " + kTinyStore) == 0);
  REQUIRE(run("split --data " + ws.p("store") + " --out " + ws.p("s.json") +
              " --held-scenario 1 --held-location 1") == 0);
  REQUIRE(run("train --method cir --out " + ws.p("run") + " --data " +
              ws.p("store") + " --split " + ws.p("s.json") + " " +
              kTinyModel) == 0);
  REQUIRE(run("train --config " + ws.p("run/config.json") + " --out " +
              ws.p("again")) == 0);
  CHECK(slurp(ws.root / "run/metrics.csv") ==
        slurp(ws.root / "again/metrics.csv"));
  CHECK(slurp(ws.root / "run/last.ckpt") ==
        slurp(ws.root / "again/last.ckpt"));
}

TEST_CASE("sweep writes one run per value plus a merged summary") {
  Workspace ws;
  REQUIRE(run("generate --out " + ws.p("store") + " " + kTinyStore) == 0);
  REQUIRE(run("split --data " + ws.p("store") + " --out " + ws.p("s.json") +
              " --held-scenario 0 --held-location 1") == 0);
  std::string common = " --data " + ws.p("store") + " --split " +
                       ws.p("s.json") + " --method erm --epochs 1 "
                       "--decay-epochs \"\" --hidden-dim 8 --embed-dim 4 "
                       "--qk-dim 2 --seed 0";
  SUBCASE("seed sweep emits per-seed rows") {
    REQUIRE(run("sweep --param seed --values 0,1,2,3 --batch-size 8 --out " +
                ws.p("sweep") + common) == 0);
    for (const char* v : {"0", "1", "2", "3"})
      CHECK(fs::exists(ws.root / ("sweep/seed_" + std::string(v)) /
                       "report.json"));
    std::ifstream is(ws.root / "sweep/summary.csv");
    int rows = 0;
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 1 + 2 * 4);  // header + final/best per seed
  }
  SUBCASE("batch-size sweep covers the published value list") {
    REQUIRE(run("sweep --param batch_size --values 16,64,128,256,2048 "
                "--out " + ws.p("bs") + common) == 0);
    for (const char* v : {"16", "64", "128", "256", "2048"})
      CHECK(fs::exists(ws.root / ("bs/batch_size_" + std::string(v)) /
                       "report.json"));
  }
  SUBCASE("empty value list is a usage error") {
    CHECK(run("sweep --param seed --values \"\" --out " + ws.p("x") +
              common) == 2);
  }
}

TEST_CASE("eval and analyze consume a trained checkpoint") {
  Workspace ws;
  REQUIRE(run("generate --out " + ws.p("store") + " " + kTinyStore) == 0);
  REQUIRE(run("split --data " + ws.p("store") + " --out " + ws.p("s.json") +
              " --held-scenario 0 --held-location 0") == 0);
  REQUIRE(run("train --method cir --out " + ws.p("run") + " --data " +
              ws.p("store") + " --split " + ws.p("s.json") + " " +
              kTinyModel) == 0);
  CHECK(run("eval --data " + ws.p("store") + " --split " + ws.p("s.json") +
            " --checkpoint " + ws.p("run/last.ckpt") + " --out " +
            ws.p("ev") + " --label cir") == 0);
  CHECK(fs::exists(ws.root / "ev/report.json"));
  CHECK(fs::exists(ws.root / "ev/summary.csv"));

  // pick a train id for the support export
  json split_json;
  {
    std::ifstream is(ws.root / "s.json");
    split_json = json::parse(is);
  }
  int query = split_json.at("train")[0].get<int>();
  CHECK(run("analyze --data " + ws.p("store") + " --split " + ws.p("s.json") +
            " --checkpoint " + ws.p("run/last.ckpt") + " --out " +
            ws.p("an") + " --batch-size 8 --topk-query " +
            std::to_string(query) + " --topk 3 --topk-batch 6") == 0);
  CHECK(fs::exists(ws.root / "an/attention.csv"));
  CHECK(fs::exists(ws.root / "an/topk.csv"));
  std::ifstream rep(ws.root / "an/report.json");
  json j = json::parse(rep);
  double ss = j.at("attention").at("ss").get<double>();
  double os = j.at("attention").at("os").get<double>();
  CHECK(ss + os == 1.0);
}

TEST_CASE("gradcheck subcommand passes") {
  CHECK(run("gradcheck --seed 5") == 0);
}

TEST_SUITE_END();
