#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "red/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "red");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = red::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  const auto prefix = key + " = ";
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  return {};
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("red_cli_test_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("config dump shows the defaults") {
  const auto r = cli({"config", "--dump"});
  CHECK(r.code == 0);
  CHECK(value_of(r.out, "dim") == "128");
  CHECK(value_of(r.out, "lambda1") == "0.1");
  CHECK(value_of(r.out, "lambda2") == "0.5");
  CHECK(value_of(r.out, "mask_strategy") == "road-aware");

  const auto o = cli({"config", "--dump", "--dim", "16", "--set", "lambda1=0.3"});
  CHECK(o.code == 0);
  CHECK(value_of(o.out, "dim") == "16");
  CHECK(value_of(o.out, "lambda1") == "0.3");
}

TEST_CASE("argument and input errors") {
  CHECK(cli({"pretrain", "--out", "x"}).code == 1);
  CHECK(cli({"config"}).code == 1);
  CHECK(cli({"nonsense"}).code == 1);
  CHECK(cli({"config", "--dump", "--set", "noequals"}).code == 1);
  CHECK(cli({"config", "--dump", "--set", "dim=abc"}).code == 1);
  CHECK(cli({"config", "--dump", "--lambda2", "2"}).code == 1);
  CHECK(cli({"generate", "--grid", "3by3", "--out", "x"}).code == 1);

  TempDir tmp;
  const auto missing = cli({"pretrain", "--data", tmp / "nowhere", "--out", tmp / "ck"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("error:") != std::string::npos);
}

TEST_CASE("generate is deterministic") {
  TempDir tmp;
  const std::vector<std::string> base{"generate", "--grid", "3x3", "--traj", "20", "--users", "2", "--seed", "9"};
  auto a = base, b = base, c = base;
  a.insert(a.end(), {"--out", tmp / "a"});
  b.insert(b.end(), {"--out", tmp / "b"});
  c.back() = "10";
  c.insert(c.end(), {"--out", tmp / "c"});
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  REQUIRE(cli(c).code == 0);
  for (const char* file : {"network.txt", "trajectories.jsonl"}) {
    CHECK(slurp(tmp.path / "a" / file) == slurp(tmp.path / "b" / file));
    CHECK_FALSE(slurp(tmp.path / "a" / file).empty());
  }
  CHECK(slurp(tmp.path / "a" / "trajectories.jsonl") != slurp(tmp.path / "c" / "trajectories.jsonl"));
}

TEST_CASE("end to end on a tiny dataset") {
  TempDir tmp;
  const auto data = tmp / "data";
  REQUIRE(cli({"generate", "--grid", "3x3", "--traj", "60", "--users", "3", "--seed", "2", "--out", data}).code == 0);

  const std::vector<std::string> tiny{"--dim", "8", "--encoder-layers", "1", "--decoder-layers", "1", "--heads", "2",
                                      "--batch-size", "8", "--lr", "0.001", "--set", "gat_heads=2,1",
                                      "--set", "ffn_dim=16"};
  auto pre = std::vector<std::string>{"pretrain", "--data", data, "--out", tmp / "ck", "--epochs", "2"};
  pre.insert(pre.end(), tiny.begin(), tiny.end());
  const auto p = cli(pre);
  INFO(p.err);
  REQUIRE(p.code == 0);
  CHECK(value_of(p.out, "kept") == "60");
  const auto ckpt = tmp / "ck/best.ckpt";
  REQUIRE(fs::exists(ckpt));

  const auto e = cli({"embed", "--checkpoint", ckpt, "--data", data, "--out", tmp / "emb.bin"});
  REQUIRE(e.code == 0);
  CHECK(value_of(e.out, "rows") == "60");
  CHECK(value_of(e.out, "dim") == "8");
  CHECK(fs::file_size(tmp / "emb.bin") == 16 + 60 * 8 * sizeof(double));
  std::ifstream ids(tmp / "emb.bin.ids");
  CHECK(std::count(std::istreambuf_iterator<char>(ids), {}, '\n') == 60);

  const auto exact = cli({"evaluate", "--checkpoint", ckpt, "--data", data, "--queries", "5", "--database", "20",
                          "--p", "0"});
  REQUIRE(exact.code == 0);
  CHECK(value_of(exact.out, "mean_rank") == "1");
  const auto sim = cli({"evaluate", "--checkpoint", ckpt, "--data", data, "--task", "similarity", "--queries", "5",
                        "--database", "20", "--k", "1,5"});
  REQUIRE(sim.code == 0);
  CHECK_FALSE(value_of(sim.out, "hr@5").empty());
  CHECK(cli({"evaluate", "--checkpoint", ckpt, "--data", data, "--queries", "50", "--database", "50"}).code == 1);

  const auto tte = cli({"finetune-tte", "--checkpoint", ckpt, "--data", data, "--epochs", "1", "--batch-size", "16",
                        "--out", tmp / "tte.ckpt"});
  REQUIRE(tte.code == 0);
  CHECK_FALSE(value_of(tte.out, "mae_min").empty());
  CHECK(fs::exists(tmp / "tte.ckpt"));

  const auto cls = cli({"finetune-cls", "--checkpoint", ckpt, "--data", data, "--epochs", "1", "--freeze-encoder"});
  REQUIRE(cls.code == 0);
  CHECK(value_of(cls.out, "classes") == "3");

  const auto sb = cli({"simbench", "--data", data, "--measure", "frechet", "--limit", "4"});
  REQUIRE(sb.code == 0);
  CHECK(std::count(sb.out.begin(), sb.out.end(), '\n') == 7);
  CHECK(sb.out.rfind("query_id,candidate_id,score\n", 0) == 0);
}

TEST_CASE("installed binary reports exit codes") {
  const char* bin = std::getenv("RED_CLI");
  if (!bin) return;
  const std::string exe = bin;
  CHECK(std::system((exe + " config --dump > /dev/null").c_str()) == 0);
  const int status = std::system((exe + " pretrain --out /tmp/x > /dev/null 2>&1").c_str());
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 1);
}
