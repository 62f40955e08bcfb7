#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "nlinv/binary_io.hpp"
#include "nlinv/data.hpp"

using namespace nlinv;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string("\"") + NLINV_CLI_PATH + "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path workdir() {
  const fs::path d = fs::temp_directory_path() / "nlinv_test_cli";
  fs::create_directories(d);
  return d;
}

std::string str(const fs::path& p) { return p.string(); }

}  // namespace

TEST_CASE("cli usage and data errors") {
  const fs::path d = workdir();
  save_csv(d / "train.csv", gen_circle(200, 1.0, 0.05, 1));
  CHECK(run("").code == 2);
  CHECK(run("train --features " + str(d / "train.csv") + " --p 150 --out " + str(d / "m")).code == 2);
  CHECK(run("train --features " + str(d / "train.csv") + " --p 0 --out " + str(d / "m")).code == 2);
  CHECK(run("score --model " + str(d / "absent") + " --features x --out y").code == 3);
  const Result j = run("--json score --model " + str(d / "absent") + " --features x --out y");
  CHECK(j.code == 3);
  const auto err = nlohmann::json::parse(j.out);
  CHECK(err["error"] == "io");
}

TEST_CASE("cli train echoes the resolved defaults") {
  const fs::path d = workdir();
  save_csv(d / "train.csv", gen_circle(200, 1.0, 0.05, 1));
  const Result r = run("train --features " + str(d / "train.csv") + " --out " + str(d / "m"));
  REQUIRE(r.code == 0);
  const auto line = r.out.substr(0, r.out.find('\n'));
  REQUIRE(line.rfind("# config ", 0) == 0);
  const auto cfg = nlohmann::json::parse(line.substr(9));
  CHECK(cfg["epochs"] == 25);
  CHECK(cfg["batch"] == 64);
  CHECK(cfg["p"] == 5.0);
  CHECK(cfg["lr"] == 1e-3);
  CHECK(cfg["lr_end"] == 1e-4);
  CHECK(cfg["blocks"] == 4);
  CHECK(r.out.find("epoch 25 ") != std::string::npos);
}

TEST_CASE("cli scale count must match between train and score") {
  const fs::path d = workdir();
  save_csv(d / "a.csv", gen_circle(100, 1.0, 0.05, 2));
  save_csv(d / "b.csv", gen_circle(100, 1.0, 0.05, 3));
  REQUIRE(run("train --quiet --k 1 --features " + str(d / "a.csv") + " " + str(d / "b.csv") + " --out " +
              str(d / "two")).code == 0);
  CHECK(run("score --model " + str(d / "two") + " --features " + str(d / "a.csv") + " --out " +
            str(d / "s.csv")).code == 3);
  CHECK(run("score --model " + str(d / "two") + " --features " + str(d / "a.csv") + " " + str(d / "b.csv") +
            " --out " + str(d / "s.csv")).code == 0);
}

TEST_CASE("cli score on the training set averages to K") {
  const fs::path d = workdir();
  save_csv(d / "train.csv", gen_circle(300, 1.0, 0.05, 4));
  REQUIRE(run("train --quiet --k 1 --no-knn --features " + str(d / "train.csv") + " --out " + str(d / "inv")).code == 0);
  REQUIRE(run("score --score inv --model " + str(d / "inv") + " --features " + str(d / "train.csv") + " --out " +
              str(d / "train_scores.csv")).code == 0);
  std::ifstream in(d / "train_scores.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "id,S_inv,S_2nn,S_final");
  double sum = 0.0;
  int n = 0;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    sum += std::stod(line.substr(a + 1, b - a - 1));
    CHECK(line.substr(b) == ",,");
    ++n;
  }
  CHECK(n == 300);
  CHECK(sum / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("cli score then eval equals bench") {
  const fs::path d = workdir();
  save_csv(d / "tr.csv", gen_circle(300, 1.0, 0.05, 5));
  save_csv(d / "te.csv", concat_rows(with_label(gen_circle(80, 1.0, 0.05, 6), 0),
                                     with_label(gen_box(80, 2, 2.0, 7), 1)));
  nlohmann::json cfg{{"method", "nlinvs"},
                     {"k", 1},
                     {"seeds", {3}},
                     {"datasets", {{{"name", "circle"}, {"train", {str(d / "tr.csv")}}, {"test", {str(d / "te.csv")}}}}}};
  std::ofstream(d / "bench.json") << cfg.dump();
  REQUIRE(run("bench --config " + str(d / "bench.json") + " --out " + str(d / "report.json")).code == 0);
  const Bytes raw = read_file(d / "report.json");
  const auto report = nlohmann::json::parse(raw.begin(), raw.end());
  const double bench_auc = report["results"][0]["per_seed"][0]["auc"].get<double>();
  CHECK(fs::exists(d / "report.csv"));

  REQUIRE(run("train --quiet --k 1 --seed 3 --features " + str(d / "tr.csv") + " --out " + str(d / "m")).code == 0);
  REQUIRE(run("score --labeled --model " + str(d / "m") + " --features " + str(d / "te.csv") + " --out " +
              str(d / "sc.csv")).code == 0);
  const Result e = run("eval --scores " + str(d / "sc.csv") + " --test-with-labels " + str(d / "te.csv"));
  REQUIRE(e.code == 0);
  const auto pos = e.out.find("AUC ");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(e.out.substr(pos + 4)) == bench_auc);
}

TEST_CASE("cli toy and landscape outputs") {
  const fs::path d = workdir() / "toy";
  REQUIRE(run("toy --quiet --n 200 --n-test 50 --epochs 2 --out " + str(d)).code == 0);
  for (const char* f : {"train.csv", "test.csv", "representation.csv", "reconstruction.csv", "scores.csv", "model.nld"}) {
    CHECK(fs::exists(d / f));
  }
  CHECK(load_csv(d / "representation.csv", false).rows() == 200);
  REQUIRE(run("landscape --model " + str(d / "model.nld") + " --test " + str(d / "test.csv") +
              " --grid 3 --out " + str(d / "grid.csv")).code == 0);
  CHECK(load_csv(d / "grid.csv", false).rows() == 9);
  CHECK(run("landscape --model " + str(d / "model.nld") + " --test " + str(d / "test.csv") + " --grid 2").code == 2);
}
