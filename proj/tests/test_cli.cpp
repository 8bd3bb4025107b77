// Copyright 2026 The cosplit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"

#include "cosplit/cli.hpp"
#include "cosplit/io.hpp"
#include "cosplit/keygen.hpp"
#include "cosplit/network.hpp"

using namespace cosplit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::Run(args, out, err);
  return {code, out.str(), err.str()};
}

// Scratch directory removed at scope exit.
struct TempDir {
  TempDir() {
    path = fs::temp_directory_path() / ("cosplit_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  fs::path path;
};

}  // namespace

TEST_CASE("budget prints the composed value") {
  auto r = Call({"budget", "--epsilon", "2", "--eta", "0", "--xi", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("epsilon_total=2\n") != std::string::npos);
}

TEST_CASE("keygen writes a valid key") {
  TempDir dir;
  auto r = Call({"keygen", "--classes", "5", "--seed", "7", "--out", dir.file("key.txt")});
  CHECK(r.code == 0);
  auto key = DerangementKey::FromText(ReadFileText(dir.file("key.txt")));
  CHECK(key.size() == 5);
  CHECK(key.is_derangement());
  // Same seed, same key.
  Call({"keygen", "--classes", "5", "--seed", "7", "--out", dir.file("key2.txt")});
  CHECK(ReadFileText(dir.file("key2.txt")) == ReadFileText(dir.file("key.txt")));
}

TEST_CASE("usage errors exit 1") {
  CHECK(Call({"keygen", "--classes", "1", "--out", "/tmp/x"}).code == cli::kExitUsage);
  CHECK(Call({"nonsense"}).code == cli::kExitUsage);
  CHECK(Call({"budget"}).code == cli::kExitUsage);
  CHECK(Call({"budget", "--epsilon", "1", "--eta", "2"}).code == cli::kExitUsage);
}

TEST_CASE("bad inputs exit 1, runtime failures exit 2") {
  TempDir dir;
  std::ofstream(dir.file("bad.rltm")) << "XXXXjunk";
  std::ofstream(dir.file("key.txt")) << "N=3\nkey=1,2,0\n";
  const std::string data = "blobs:3:5:4:0.1";
  CHECK(Call({"infer", "--model", dir.file("bad.rltm"), "--split-index", "1", "--data", data,
              "--key", dir.file("key.txt")})
            .code == cli::kExitUsage);
  CHECK(Call({"infer", "--model", dir.file("none.rltm"), "--split-index", "1", "--data", data,
              "--key", dir.file("key.txt")})
            .code == cli::kExitUsage);

  REQUIRE(Call({"pretrain", "--data", data, "--widths", "4,6,6,3", "--split-index", "2", "--out",
                dir.file("m.rltm"), "--epochs", "1"})
              .code == 0);
  // Nothing listens on port 1.
  auto r = Call({"infer", "--model", dir.file("m.rltm"), "--split-index", "2", "--data", data,
                 "--key", dir.file("key.txt"), "--addr", "127.0.0.1:1"});
  CHECK(r.code == cli::kExitRuntime);
  CHECK(!r.err.empty());
}

TEST_CASE("blobs source with a sample seed keeps the centers") {
  TempDir dir;
  const std::vector<std::string> base = {"--widths", "4,8,3", "--split-index", "2", "--epochs", "1"};
  auto run = [&](const std::string& data, const std::string& out) {
    std::vector<std::string> a = {"pretrain", "--data", data, "--out", dir.file(out)};
    a.insert(a.end(), base.begin(), base.end());
    return Call(a);
  };
  CHECK(run("blobs:3:5:4:0.1:4:9", "a.rltm").code == 0);
  CHECK(run("blobs:3:5:4:0.1:4:9:1", "b.rltm").code == cli::kExitUsage);
  CHECK(run("blobs:3:5:4:0.1:4:x", "c.rltm").code == cli::kExitUsage);
}

TEST_CASE("reduce --check on a single clause") {
  TempDir dir;
  std::ofstream(dir.file("tiny.cnf")) << "p cnf 3 1\n1 2 3 0\n";
  auto r = Call({"reduce", "--cnf", dir.file("tiny.cnf"), "--check"});
  CHECK(r.code == 0);
  CHECK(r.out.find("completeness_violations=0") != std::string::npos);
  CHECK(r.out.find("counting_violations=0") != std::string::npos);
}

TEST_CASE("config file merging: flags win") {
  auto merged = cli::MergeConfigFile({"budget", "--epsilon", "3"},
                                     "# comment\nepsilon=1\neta=0.5\n");
  auto r = Call(merged);
  CHECK(r.code == 0);
  const auto pos = r.out.find("epsilon_total=");
  REQUIRE(pos != std::string::npos);
  const double v = std::stod(r.out.substr(pos + 14));
  CHECK(v == doctest::Approx(std::log(0.5 * std::exp(3.0) + 0.5)).epsilon(1e-12));
}

TEST_CASE("pretrain, retrain and infer over loopback") {
  TempDir dir;
  const std::string data = "blobs:3:40:4:0.08:5";
  auto p = Call({"pretrain", "--data", data, "--widths", "4,8,8,8,3", "--split-index", "3",
                 "--out", dir.file("full.rltm"), "--epochs", "15", "--seed", "3"});
  REQUIRE(p.code == 0);
  CHECK(p.out.find("checkpoint_hash=") != std::string::npos);
  Network full = LoadCheckpoint(dir.file("full.rltm"));

  REQUIRE(Call({"keygen", "--classes", "3", "--seed", "1", "--out", dir.file("key.txt")}).code == 0);
  auto t = Call({"retrain", "--model", dir.file("full.rltm"), "--split-index", "3", "--data", data,
                 "--key", dir.file("key.txt"), "--out", dir.file("re.rltm"), "--epochs", "2",
                 "--epsilon", "inf", "--log", dir.file("train.tsv"), "--seed", "3"});
  REQUIRE(t.code == 0);
  CHECK(t.out.find("decrypted_accuracy=") != std::string::npos);
  CHECK(fs::exists(dir.file("train.tsv")));
  Network re = LoadCheckpoint(dir.file("re.rltm"));
  // Back-end layers are untouched.
  CHECK(re.slice(3, re.depth()) == full.slice(3, full.depth()));

  auto i = Call({"infer", "--model", dir.file("re.rltm"), "--split-index", "3", "--data", data,
                 "--key", dir.file("key.txt"), "--out", dir.file("pred.txt"), "--epsilon", "inf"});
  CHECK(i.code == 0);
  CHECK(i.out.find("accuracy=") != std::string::npos);
  CHECK(fs::exists(dir.file("pred.txt")));

  auto again = Call({"pretrain", "--data", data, "--widths", "4,8,8,8,3", "--split-index", "3",
                     "--out", dir.file("full2.rltm"), "--epochs", "15", "--seed", "3"});
  CHECK(ReadFileBytes(dir.file("full2.rltm")) == ReadFileBytes(dir.file("full.rltm")));
}

TEST_CASE("verify-dp reports a passing check") {
  auto r = Call({"verify-dp", "--bound", "1", "--epsilon", "1", "--samples", "200000", "--seed", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("pass=1") != std::string::npos);
}
