// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gta/cli.hpp"
#include "gta/data.hpp"
#include "gta/error.hpp"
#include "gta/model.hpp"
#include "gta/serialize.hpp"

using namespace gta;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("gta");
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code =
      run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path test_dir() {
  static const std::filesystem::path dir = [] {
    std::filesystem::path d =
        std::filesystem::temp_directory_path() / "gta_cli_tests";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

void clear_out_env() { unsetenv("GTA_OUT_DIR"); }

}  // namespace

TEST_CASE("help and argument errors") {
  clear_out_env();
  CliResult help = run({"--help"});
  CHECK(help.code == kExitOk);
  CHECK(help.out.find("gen-data") != std::string::npos);
  CHECK(help.out.find("dump-attn") != std::string::npos);

  CHECK(run({}).code == kExitConfig);                    // subcommand required
  CHECK(run({"frobnicate"}).code == kExitConfig);        // unknown subcommand
  CHECK(run({"flops", "--bogus"}).code == kExitConfig);  // unknown flag
  CHECK(run({"eval"}).code == kExitConfig);              // missing required
}

TEST_CASE("gen-data writes a loadable dataset and respects --force") {
  clear_out_env();
  const std::filesystem::path target = test_dir() / "dd.gtad";
  const std::vector<std::string> args = {
      "gen-data", "--task", "directional-dot", "--n", "8",
      "--t", "4", "--h", "4", "--w", "8",
      "--seed", "3", "--out", target.string()};
  CliResult first = run(args);
  CAPTURE(first.err);
  CHECK(first.code == kExitOk);
  CHECK(first.out.find("wrote 8 samples") != std::string::npos);
  CHECK(first.out.find("class balance: 4 4") != std::string::npos);
  CHECK(std::filesystem::exists(target));
  CHECK(std::filesystem::exists(test_dir() / "config.resolved"));

  VideoDataset ds = load_dataset(target.string());
  CHECK(ds.size() == 8);
  CHECK(ds.task == "directional-dot");

  CliResult refused = run(args);
  CHECK(refused.code == kExitIo);
  CHECK(refused.err.find("--force") != std::string::npos);

  std::vector<std::string> forced = args;
  forced.push_back("--force");
  CHECK(run(forced).code == kExitOk);
}

TEST_CASE("gen-data validates its configuration") {
  clear_out_env();
  CliResult odd = run({"gen-data", "--n", "7", "--out",
                       (test_dir() / "odd.gtad").string()});
  CHECK(odd.code == kExitConfig);
  CHECK(odd.err.find("even") != std::string::npos);

  CliResult task = run({"gen-data", "--task", "nonsense", "--out",
                        (test_dir() / "x.gtad").string()});
  CHECK(task.code == kExitConfig);
  CHECK(task.err.find("unknown task") != std::string::npos);

  // No --out and no environment fallback.
  CliResult nowhere = run({"gen-data", "--n", "4", "--t", "4", "--w", "8"});
  CHECK(nowhere.code == kExitConfig);
  CHECK(nowhere.err.find("GTA_OUT_DIR") != std::string::npos);
}

TEST_CASE("the output directory falls back to GTA_OUT_DIR") {
  const std::filesystem::path env_dir = test_dir() / "env_out";
  setenv("GTA_OUT_DIR", env_dir.string().c_str(), 1);
  CliResult r = run({"gen-data", "--task", "reveal-cover", "--n", "4",
                     "--t", "4", "--h", "4", "--w", "4"});
  clear_out_env();
  CAPTURE(r.err);
  CHECK(r.code == kExitOk);
  CHECK(std::filesystem::exists(env_dir / "reveal-cover.gtad"));
  CHECK(std::filesystem::exists(env_dir / "config.resolved"));
}

TEST_CASE("flops reports the reference stack with ratio lines") {
  clear_out_env();
  CliResult r = run({"flops", "--dims", "paper"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("# config.resolved") != std::string::npos);
  CHECK(r.out.find("convention: paper") != std::string::npos);
  CHECK(r.out.find("extra-cost ordering: nl > gta > dnl") != std::string::npos);
  CHECK(r.out.find("nl/dnl flop ratio: 1.458780") != std::string::npos);
  CHECK(r.out.find("(gta - dnl)/dnl: +4.6699%") != std::string::npos);
  CHECK(r.out.find("params (M): nl 7.3400, dnl 7.3400, gta 7.8397") !=
        std::string::npos);
}

TEST_CASE("flops costs explicit plans in both conventions") {
  clear_out_env();
  CliResult csv = run({"flops", "--dims", "t=8,h=16,w=16,c=64", "--blocks",
                       "nl,dnl,gta[g=8]", "--csv"});
  CHECK(csv.code == kExitOk);
  CHECK(csv.out.find("kind,T,H,W,C,config,flops,params") != std::string::npos);
  CHECK(csv.out.find("nl,8,16,16,64,-,1157627904,16384") != std::string::npos);
  CHECK(csv.out.find("gta,8,16,16,64,g=8;k=8;ccmh=on;pixel=on;region=on,"
                     "58195968,25088") != std::string::npos);

  CliResult paper = run({"flops", "--dims", "t=8,h=28,w=28,c=512", "--blocks",
                         "nl", "--convention", "paper", "--csv"});
  CHECK(paper.code == kExitOk);
  CHECK(paper.out.find("nl,8,28,28,512,-,16686530560,524288") !=
        std::string::npos);

  CHECK(run({"flops", "--dims", "t=8", "--convention", "sideways"}).code ==
        kExitConfig);
  CHECK(run({"flops", "--dims", "t=-3"}).code == kExitConfig);
  CHECK(run({"flops", "--dims", "q=3"}).code == kExitConfig);
  CHECK(run({"flops", "--dims", "t=4,h=8,w=8,c=9", "--blocks", "gta[g=8]"})
            .code == kExitConfig);
}

TEST_CASE("gradcheck passes on a small stack and reports the worst entry") {
  clear_out_env();
  CliResult r = run({"gradcheck", "--spec", "t=2,h=2,w=2,patch=2,c=4",
                     "--blocks", "sa,tape,gta[g=2,k=1]", "--batch", "1"});
  CAPTURE(r.err);
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("max relative error") != std::string::npos);
  CHECK(r.out.find("gradient check passed") != std::string::npos);

  CHECK(run({"gradcheck", "--spec", "nonsense"}).code == kExitConfig);
  CHECK(run({"gradcheck", "--blocks", "sx"}).code == kExitConfig);
}

TEST_CASE("train, eval, and dump-attn share artifacts") {
  clear_out_env();
  const std::filesystem::path run_dir = test_dir() / "run";
  const std::vector<std::string> train_args = {
      "train", "--spec", "t=4,h=8,w=8,patch=4,c=8", "--blocks", "sa,ta",
      "--task", "directional-dot", "--n", "8", "--test-n", "4",
      "--epochs", "1", "--batch", "4", "--seed", "7",
      "--out", run_dir.string()};
  CliResult tr = run(train_args);
  CAPTURE(tr.err);
  REQUIRE(tr.code == kExitOk);
  CHECK(tr.out.find("epoch 1: test loss") != std::string::npos);
  CHECK(tr.out.find("final test accuracy") != std::string::npos);
  CHECK(std::filesystem::exists(run_dir / "metrics.csv"));
  CHECK(std::filesystem::exists(run_dir / "model.ckpt"));
  CHECK(std::filesystem::exists(run_dir / "config.resolved"));

  // The resolved config is a readable key=value block naming the command.
  {
    const std::vector<unsigned char> bytes =
        read_file_bytes((run_dir / "config.resolved").string());
    const KvPairs kv = decode_kv(std::string(bytes.begin(), bytes.end()));
    CHECK(kv_get(kv, "command") == "train");
    CHECK(kv_get(kv, "blocks") == "sa,ta");
    CHECK(kv_get_u64(kv, "epochs") == 1);
  }

  CHECK(run(train_args).code == kExitIo);  // refuses to clobber
  std::vector<std::string> forced = train_args;
  forced.push_back("--force");
  CHECK(run(forced).code == kExitOk);

  // A dataset with the same geometry for eval and dumps.
  const std::filesystem::path data = test_dir() / "eval.gtad";
  REQUIRE(run({"gen-data", "--n", "6", "--t", "4", "--h", "8", "--w", "8",
               "--seed", "9", "--out", data.string()})
              .code == kExitOk);

  CliResult ev = run({"eval", "--ckpt", (run_dir / "model.ckpt").string(),
                      "--data", data.string()});
  CAPTURE(ev.err);
  CHECK(ev.code == kExitOk);
  CHECK(ev.out.find("samples 6, loss ") != std::string::npos);
  CHECK(ev.out.find("# config.resolved") != std::string::npos);

  CliResult ev_missing = run({"eval", "--ckpt", "no-such.ckpt", "--data",
                              data.string()});
  CHECK(ev_missing.code == kExitIo);

  const std::filesystem::path dump_dir = test_dir() / "attn";
  CliResult da = run({"dump-attn", "--ckpt", (run_dir / "model.ckpt").string(),
                      "--data", data.string(), "--index", "1",
                      "--out", dump_dir.string()});
  CAPTURE(da.err);
  CHECK(da.code == kExitOk);
  CHECK(da.out.find("wrote 8 matrix files") != std::string::npos);
  CHECK(std::filesystem::exists(dump_dir / "block0_spatial_t0.csv"));
  CHECK(std::filesystem::exists(dump_dir / "block1_temporal_pos3.csv"));

  CliResult da_again =
      run({"dump-attn", "--ckpt", (run_dir / "model.ckpt").string(),
           "--data", data.string(), "--out", dump_dir.string()});
  CHECK(da_again.code == kExitIo);
  CHECK(da_again.err.find("--force") != std::string::npos);

  CliResult da_oob =
      run({"dump-attn", "--ckpt", (run_dir / "model.ckpt").string(),
           "--data", data.string(), "--index", "99",
           "--out", (test_dir() / "attn2").string()});
  CHECK(da_oob.code == kExitConfig);
  CHECK(da_oob.err.find("out of range") != std::string::npos);
}

TEST_CASE("train rejects contradictory data sources") {
  clear_out_env();
  CHECK(run({"train", "--task", "directional-dot", "--data", "x.gtad",
             "--out", (test_dir() / "t1").string()})
            .code == kExitConfig);
  CHECK(run({"train", "--data", "x.gtad",
             "--out", (test_dir() / "t2").string()})
            .code == kExitConfig);  // --data needs --test-data
  CHECK(run({"train", "--spec", "t=4,h=7,w=8,patch=4,c=8",
             "--out", (test_dir() / "t3").string()})
            .code == kExitConfig);  // patch does not divide height
  CHECK(run({"train", "--blocks", "gta[g=5]", "--spec", "c=8",
             "--out", (test_dir() / "t4").string()})
            .code == kExitConfig);  // 8 % 5 != 0
  CHECK(run({"train", "--task", "directional-dot", "--epochs", "1"}).code ==
        kExitConfig);  // nowhere to write
}

TEST_CASE("geometry mismatches surface as configuration failures") {
  clear_out_env();
  // Model wants T=4 but the stored dataset was generated at T=6.
  const std::filesystem::path data = test_dir() / "t6.gtad";
  REQUIRE(run({"gen-data", "--n", "4", "--t", "6", "--h", "8", "--w", "8",
               "--out", data.string()})
              .code == kExitOk);
  CliResult r = run({"train", "--spec", "t=4,h=8,w=8,patch=4,c=8",
                     "--blocks", "sa", "--epochs", "1",
                     "--data", data.string(), "--test-data", data.string(),
                     "--out", (test_dir() / "t7").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("does not match the model") != std::string::npos);
}
