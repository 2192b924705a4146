// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Runs the pimtl executable and checks exit codes, help text and docs.

#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PIMTL_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p) != nullptr) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::set<std::string> flags_in(const std::string& help) {
  std::set<std::string> out;
  const std::regex flag(R"((--[a-z][a-z-]*))");
  for (auto it = std::sregex_iterator(help.begin(), help.end(), flag); it != std::sregex_iterator(); ++it) {
    out.insert((*it)[1]);
  }
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pimtl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("every command-line flag is documented") {
  const std::string doc = read_text(fs::path(PIMTL_SOURCE_DIR) / "docs" / "config.md");
  REQUIRE(!doc.empty());
  const Run top = run("--help");
  CHECK(top.code == 0);
  std::set<std::string> flags = flags_in(top.out);
  for (const char* cmd : {"synth", "preprocess", "train", "personalize", "evaluate", "experiment", "config"}) {
    const Run r = run(std::string(cmd) + " --help");
    CHECK_MESSAGE(r.code == 0, cmd);
    CHECK_MESSAGE(doc.find(std::string("`") + cmd + "`") != std::string::npos, cmd);
    for (const std::string& f : flags_in(r.out)) flags.insert(f);
  }
  CHECK(flags.size() > 20);
  for (const std::string& f : flags) CHECK_MESSAGE(doc.find("`" + f) != std::string::npos, "undocumented flag " << f);
}

TEST_CASE("exit codes") {
  CHECK(run("--version").code == 0);
  const Run bad_method = run("train --data /nonexistent --method CNN-3");
  CHECK(bad_method.code == 2);
  CHECK(bad_method.out.find("\"error\"") != std::string::npos);
  CHECK(run("--frobnicate synth").code == 2);
  CHECK(run("").code == 2);
  CHECK(run("--format xml synth").code == 2);

  const fs::path dir = fresh_dir("codes");
  std::ofstream(dir / "bad.toml") << "[training]\nmax_iters = 3\n";
  const Run cfg = run("--config " + (dir / "bad.toml").string() + " config");
  CHECK(cfg.code == 13);
  CHECK(cfg.out.find("\"status\":\"config\"") != std::string::npos);
  CHECK(cfg.out.find("max_iters") != std::string::npos);
  CHECK(run("--out " + (dir / "ev").string() + " evaluate --data " + (dir / "none").string() + " --model " +
            (dir / "bad.toml").string()).code >= 10);
}

TEST_CASE("config prints a loadable document") {
  const fs::path dir = fresh_dir("config");
  const Run r = run("--seed 9 config");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("seed = 9") != std::string::npos);
  std::ofstream(dir / "c.toml") << r.out;
  const Run again = run("--config " + (dir / "c.toml").string() + " config");
  CHECK(again.code == 0);
  CHECK(again.out == r.out);
}

TEST_CASE("synth, train and experiment from the command line") {
  const fs::path dir = fresh_dir("flow");
  std::ofstream(dir / "c.toml") << "[model]\nconv_channels = 4\nhidden = 8\nbn_calibration = 16\n"
                                   "[training]\nmax_iter = 10\nearly_stopping = false\n";
  const std::string base = "--config " + (dir / "c.toml").string() + " ";
  REQUIRE(run(base + "--out " + (dir / "raw").string() + " synth --subjects 3 --trials 1 --duration 0.6").code == 0);
  CHECK(fs::exists(dir / "raw" / "manifest.json"));
  REQUIRE(run(base + "--out " + (dir / "gen").string() + " train --data " + (dir / "raw").string() +
              " --method CNN-1").code == 0);
  CHECK(fs::exists(dir / "gen" / "model.ckpt"));
  const Run exp = run(base + "--out " + (dir / "runs").string() + " experiment --data " + (dir / "raw").string() +
                      " --methods CNN-2,Pi-CNN-KT --seeds 1 --fractions 0.5");
  REQUIRE(exp.code == 0);
  std::string run_dir = exp.out;
  while (!run_dir.empty() && (run_dir.back() == '\n' || run_dir.back() == '\r')) run_dir.pop_back();
  CHECK(fs::exists(fs::path(run_dir) / "metrics.csv"));
}
