/* Copyright 2026 The PoseWarp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* env = std::getenv("POSEWARP_BIN");
  REQUIRE(env != nullptr);
  return env;
}

int run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string run_capture(const std::string& args) {
  const std::string out_file = (fs::temp_directory_path() / "cli_capture.txt").string();
  const std::string cmd = binary() + " " + args + " >" + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  (void)status;
  std::ifstream f(out_file);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool same_bytes(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str() && !sa.str().empty();
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / "posewarp_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("help is available for the tool and every subcommand") {
  CHECK(run("--help") == 0);
  for (const char* sub : {"make-fixtures", "train-coordnet", "train-generator", "repose",
                          "tryon", "eval", "inspect-uv"})
    CHECK(run(std::string(sub) + " --help") == 0);
}

TEST_CASE("missing inputs and invalid configs yield exit code 2") {
  Workspace ws;
  CHECK(run("repose --gen nope.ckpt --coordnet nope.ckpt --atlas nope.atlas --src a.ppm "
            "--src-iuv a.iuv --trg-iuv b.iuv --out out.ppm") == 2);

  std::ofstream bad(ws.p("bad.json"));
  bad << R"({"coordnet": {"no_such_key": 3}})";
  bad.close();
  CHECK(run("train-coordnet --config " + ws.p("bad.json") + " --data " + ws.p("") +
            " --out " + ws.p("cn.pwsckpt")) == 2);
}

TEST_CASE("full desk pipeline: fixtures, both trainings, repose, tryon, eval") {
  Workspace ws;
  const std::string fx = ws.p("fx");
  // every fifth pair lands in the test split
  CHECK(run("make-fixtures --out " + fx + " --count 5 --seed 11 --difficulty 0.5") == 0);

  std::ofstream cfg(ws.p("run.json"));
  cfg << R"({
    "coordnet": {"base_channels": 16, "depth": 3, "seed": 2, "steps": 60},
    "generator": {"output_resolution": 64, "base_resolution": 4,
                   "channel_schedule": [32, 24, 16, 12, 8], "fpn_channels": 8, "seed": 3},
    "trainer": {"epochs": 5, "batch_size": 1, "seed": 4, "use_face": false},
    "data": {"out_dir": ")" << ws.p("run") << R"("}
  })";
  cfg.close();

  CHECK(run("train-coordnet --config " + ws.p("run.json") + " --data " + fx + " --out " +
            ws.p("cn.pwsckpt")) == 0);
  CHECK(run("train-generator --config " + ws.p("run.json") + " --data " + fx +
            " --coordnet " + ws.p("cn.pwsckpt")) == 0);
  CHECK(fs::exists(ws.p("run") + "/generator_best.pwsckpt"));
  CHECK(fs::exists(ws.p("run") + "/losses.csv"));

  const std::string repose_args =
      "repose --gen " + ws.p("run") + "/generator_best.pwsckpt --coordnet " +
      ws.p("cn.pwsckpt") + " --atlas " + fx + "/atlas.pwsatlas --src " + fx +
      "/pair0_src.ppm --src-iuv " + fx + "/pair0_src.pwsiuv --trg-iuv " + fx +
      "/pair0_trg.pwsiuv --noise zero --out ";
  CHECK(run(repose_args + ws.p("a.ppm")) == 0);
  CHECK(run(repose_args + ws.p("b.ppm")) == 0);
  CHECK(same_bytes(ws.p("a.ppm"), ws.p("b.ppm")));

  CHECK(run("tryon --gen " + ws.p("run") + "/generator_best.pwsckpt --coordnet " +
            ws.p("cn.pwsckpt") + " --atlas " + fx + "/atlas.pwsatlas --person " + fx +
            "/pair0_src.ppm," + fx + "/pair0_src.pwsiuv --garment top=" + fx +
            "/pair1_src.ppm," + fx + "/pair1_src.pwsiuv --trg-iuv " + fx +
            "/pair0_trg.pwsiuv --noise zero --out " + ws.p("tryon.ppm")) == 0);
  CHECK(fs::exists(ws.p("tryon.ppm")));

  CHECK(run("eval --gen " + ws.p("run") + "/generator_best.pwsckpt --coordnet " +
            ws.p("cn.pwsckpt") + " --atlas " + fx + "/atlas.pwsatlas --manifest " + fx +
            "/pairs.tsv --split test --noise zero --out " + ws.p("metrics.csv")) == 0);
  CHECK(fs::exists(ws.p("metrics.csv")));
  CHECK(fs::exists(ws.p("metrics.csv") + ".jsonl"));

  CHECK(run("inspect-uv --atlas " + fx + "/atlas.pwsatlas --src " + fx +
            "/pair0_src.ppm --src-iuv " + fx + "/pair0_src.pwsiuv --coordnet " +
            ws.p("cn.pwsckpt") + " --out " + ws.p("panel")) == 0);
  CHECK(fs::exists(ws.p("panel") + "_base_coords.ppm"));
  CHECK(fs::exists(ws.p("panel") + "_combined_texture.ppm"));
  CHECK(fs::exists(ws.p("panel") + "_inpainted_coords.ppm"));
}

TEST_CASE("eval compare mode scores identical images as SSIM 1") {
  Workspace ws;
  const std::string fx = ws.p("fx");
  REQUIRE(run("make-fixtures --out " + fx + " --count 1 --seed 3") == 0);
  const std::string out = run_capture("eval --compare-a " + fx + "/pair0_src.ppm --compare-b " +
                                      fx + "/pair0_src.ppm");
  CHECK(out.find("ssim 1") != std::string::npos);
  CHECK(out.find("psnr 99") != std::string::npos);
}
