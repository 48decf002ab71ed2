#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "fdfo/checkpoint.hpp"
#include "fdfo/cli.hpp"
#include "fdfo/config.hpp"
#include "fdfo/metrics.hpp"
#include "fdfo/net.hpp"
#include "fdfo/rng.hpp"
#include "fdfo/svgplot.hpp"

using namespace fdfo;
namespace fs = std::filesystem;

namespace {

int cli(std::initializer_list<std::string> args) {
  std::vector<std::string> store = {"fdfo"};
  store.insert(store.end(), args);
  std::vector<const char*> argv;
  argv.reserve(store.size());
  for (const std::string& s : store) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

const char* kTinyConfig = R"({
  "dataset": {"name": "gauss1d", "sigma_d": 1.0},
  "model": {"hidden": 8, "layers": 2, "embed": 2},
  "pretrain": {"steps": 60, "batch": 16, "lr": 0.001, "log_every": 20},
  "reward": {"kind": "linear", "b": [1.0]},
  "posttrain": {
    "algo": "fdfo",
    "pairs": 4,
    "batches": 2,
    "steps": 6,
    "schedule": {"family": "uniform", "gamma": 0.05},
    "epochs": 2,
    "ckpt_every": 0
  },
  "seed": 5,
  "out": "/tmp/fdfo_io/run"
})";

std::string tmp(const std::string& leaf) { return "/tmp/fdfo_io/" + leaf; }

struct Workspace {
  Workspace() {
    fs::remove_all("/tmp/fdfo_io");
    fs::create_directories("/tmp/fdfo_io");
  }
};

}  // namespace

TEST_CASE("fnv1a matches the published test vectors") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("hello") != fnv1a("hellp"));
}

TEST_CASE("an empty object parses to the documented defaults") {
  ExperimentConfig cfg = parse_config_text("{}", "test");
  CHECK(cfg.dataset == "ring8");
  CHECK(cfg.sigma_d == 1.0);
  CHECK(cfg.model.hidden == 64);
  CHECK(cfg.posttrain.algo == "fdfo");
  CHECK(cfg.seed == 1);
  CHECK(cfg.out == "runs/out");
  CHECK(cfg.text_hash == fnv1a("{}"));
  // model dims propagate into the pretraining settings
  CHECK(cfg.pretrain.hidden == cfg.model.hidden);
  CHECK(cfg.pretrain.layers == cfg.model.layers);
  CHECK(cfg.pretrain.embed == cfg.model.embed);
  CHECK(cfg.pretrain.seed == cfg.seed);
  CHECK(cfg.posttrain.seed == cfg.seed);
}

TEST_CASE("unknown keys, bad types, and syntax errors are rejected with "
          "anchored messages") {
  CHECK_THROWS_AS(parse_config_text(R"({"bogus": 1})", "t"), ConfigError);
  try {
    parse_config_text(R"({"bogus": 1})", "t");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(
      parse_config_text(R"({"posttrain": {"gammma": 1}})", "t"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"posttrain": {"lr": "fast"}})", "t"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"seed": 1.5})", "t"), ConfigError);
  try {
    parse_config_text("{\n  \"dataset\": {\n", "t");
    FAIL("syntax error not raised");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line ") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text(R"({"dataset": {"name": "moons"}})", "t"),
                  ConfigError);
}

TEST_CASE("reward construction validates dimensions and mode ids") {
  // cross-validation runs at parse time
  CHECK_THROWS_AS(parse_config_text(
                      R"({"reward": {"kind": "linear", "b": [1.0, 2.0, 3.0]}})",
                      "t"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_config_text(
          R"({"reward": {"kind": "mode_indicator", "preferred": [42]}})", "t"),
      ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"reward": {"kind": "glory"}})", "t"),
                  ConfigError);

  // defaults: sigmoid along the last axis
  ExperimentConfig ok = parse_config_text("{}", "t");
  DatasetSpec d3 = make_dataset(ok);
  RewardBinding rb = make_reward(ok, d3);
  CHECK(rb.spec.kind == RewardSpec::kSigmoidHalfplane);
  REQUIRE(rb.spec.u.size() == 2);
  CHECK(rb.spec.u[1] == 1.0);
}

TEST_CASE("missing config files name the path") {
  try {
    load_config("/tmp/fdfo_io/definitely_absent.json");
    FAIL("missing file not raised");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("definitely_absent.json") !=
          std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly including optimizer state") {
  Workspace ws;
  Checkpoint ck;
  ck.net = make_net(2, 5, 3, 8, 2, 4);
  Rng rng(9, stream_id(StreamKind::mc, 50, 0));
  for (double& th : ck.net.theta) th += rng.gaussian();
  ck.has_opt = true;
  ck.opt = AdamWState(ck.net.theta.size(), 3e-4, 0.9, 0.999, 1e-8, 0.01);
  Vec g(ck.net.theta.size());
  for (double& gi : g) gi = rng.gaussian();
  Vec theta_copy = ck.net.theta;
  adamw_step(theta_copy, g, ck.opt);  // populate nonzero moments
  ck.config_hash = 0xdeadbeefcafe1234ull;
  ck.epoch = 7;

  std::string path = tmp("round.ckpt");
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.net.theta == ck.net.theta);
  CHECK(back.net.d == 2);
  CHECK(back.net.C == 5);
  CHECK(back.net.hidden == 8);
  CHECK(back.net.layers == 2);
  CHECK(back.net.embed == 4);
  CHECK(back.has_opt);
  CHECK(back.opt.m == ck.opt.m);
  CHECK(back.opt.v == ck.opt.v);
  CHECK(back.opt.step == 1);
  // optimizer hyperparameters are owned by the config, not the checkpoint
  CHECK(back.config_hash == ck.config_hash);
  CHECK(back.epoch == 7);

  // saving the loaded copy reproduces the file byte-for-byte
  std::string path2 = tmp("round2.ckpt");
  save_checkpoint(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("corrupt checkpoints are rejected") {
  Workspace ws;
  CHECK_THROWS_AS(load_checkpoint(tmp("nope.ckpt")), std::runtime_error);
  spit(tmp("garbage.ckpt"), "this is not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(tmp("garbage.ckpt")), std::runtime_error);

  Checkpoint ck;
  ck.net = make_net(1, 1, 2, 4, 2, 2);
  save_checkpoint(tmp("ok.ckpt"), ck);
  std::string bytes = slurp(tmp("ok.ckpt"));
  spit(tmp("cut.ckpt"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(tmp("cut.ckpt")), std::runtime_error);
}

TEST_CASE("numeric tables round-trip") {
  Workspace ws;
  Table t;
  t.cols = {"alpha", "beta"};
  t.rows = {{0.5, 1.25}, {-3.0, 1e10}, {0.1234567891, 2.5e-7}};
  write_table(tmp("t.csv"), t);
  Table back = read_table(tmp("t.csv"));
  CHECK(back.cols == t.cols);
  REQUIRE(back.rows.size() == 3);
  for (size_t r = 0; r < 3; ++r) {
    for (size_t c = 0; c < 2; ++c) {
      CHECK(back.rows[r][c] == t.rows[r][c]);  // all within 10 significant digits
    }
  }
  CHECK(back.col_index("beta") == 1);
  CHECK(back.col_index("gamma") == -1);
  CHECK_THROWS_AS(back.column("gamma"), std::runtime_error);
  std::vector<double> col = back.column("alpha");
  CHECK(col[2] == 0.1234567891);
}

TEST_CASE("malformed tables are rejected") {
  Workspace ws;
  CHECK_THROWS_AS(read_table(tmp("absent.csv")), std::runtime_error);
  spit(tmp("bad_cell.csv"), "a,b\n1,x\n");
  CHECK_THROWS_AS(read_table(tmp("bad_cell.csv")), std::runtime_error);
  spit(tmp("ragged.csv"), "a,b\n1\n");
  CHECK_THROWS_AS(read_table(tmp("ragged.csv")), std::runtime_error);
  spit(tmp("empty.csv"), "");
  CHECK_THROWS_AS(read_table(tmp("empty.csv")), std::runtime_error);
}

TEST_CASE("the incremental writer produces the same format") {
  Workspace ws;
  {
    CsvWriter w(tmp("inc.csv"), {"x", "y"});
    w.append({1.0, 2.0});
    w.append({3.0, 4.5});
    CHECK_THROWS_AS(w.append({1.0}), std::runtime_error);
  }
  Table back = read_table(tmp("inc.csv"));
  CHECK(back.cols == std::vector<std::string>{"x", "y"});
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[1][1] == 4.5);
}

TEST_CASE("plots are deterministic byte-for-byte and validate input") {
  Workspace ws;
  Series s1{"alpha", {0.0, 1.0, 2.0}, {1.0, 4.0, 2.0}};
  Series s2{"beta", {0.0, 1.0, 2.0}, {2.0, 1.0, 5.0}};
  write_svg_plot(tmp("p1.svg"), "title", "x", "y", {s1, s2});
  write_svg_plot(tmp("p2.svg"), "title", "x", "y", {s1, s2});
  std::string a = slurp(tmp("p1.svg"));
  CHECK(a == slurp(tmp("p2.svg")));
  CHECK(a.find("<svg") != std::string::npos);
  CHECK(a.find("alpha") != std::string::npos);
  CHECK(a.find("beta") != std::string::npos);

  write_svg_plot(tmp("empty.svg"), "t", "x", "y", {});
  CHECK(slurp(tmp("empty.svg")).find("<svg") != std::string::npos);

  Series ragged{"r", {0.0, 1.0}, {1.0}};
  CHECK_THROWS_AS(write_svg_plot(tmp("bad.svg"), "t", "x", "y", {ragged}),
                  std::runtime_error);
}

TEST_CASE("command line usage errors exit with code 2") {
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({}) == 2);                    // a subcommand is required
  CHECK(cli({"pretrain"}) == 2);          // --config is required
  CHECK(cli({"frobnicate"}) == 2);        // unknown subcommand
  CHECK(cli({"eval", "--config", "x"}) == 2);  // --init is required
  CHECK(cli({"verify", "warp-drive"}) == 2);   // unknown check name
  CHECK(cli({"pretrain", "--config", "/tmp/fdfo_io/no_such.json"}) == 2);
}

TEST_CASE("verify subcommands emit JSON reports and status codes") {
  Workspace ws;
  CHECK(cli({"verify", "sampler-degeneracy", "--n", "5",
             "--out", tmp("deg.json")}) == 0);
  std::string rep = slurp(tmp("deg.json"));
  CHECK(rep.find("\"pass\": true") != std::string::npos);
  CHECK(cli({"verify", "jacobian"}) == 0);
  CHECK(cli({"verify", "gradcheck", "--n", "10"}) == 0);
  // prototype with a checkpoint but no config is a usage error
  CHECK(cli({"verify", "prototype", "--init", tmp("deg.json")}) == 2);
}

TEST_CASE("the full pipeline runs end to end with correct artifacts") {
  Workspace ws;
  spit(tmp("tiny.json"), kTinyConfig);

  CHECK(cli({"pretrain", "--config", tmp("tiny.json"),
             "--out", tmp("pre")}) == 0);
  CHECK(fs::exists(tmp("pre/pre.ckpt")));
  Table loss = read_table(tmp("pre/pretrain_loss.csv"));
  CHECK(loss.cols == std::vector<std::string>{"step", "loss"});
  CHECK(loss.rows.size() >= 3);

  Checkpoint pre = load_checkpoint(tmp("pre/pre.ckpt"));
  CHECK(pre.net.d == 1);
  CHECK(pre.net.hidden == 8);
  CHECK_FALSE(pre.has_opt);
  CHECK(pre.epoch == 0);

  CHECK(cli({"posttrain", "--config", tmp("tiny.json"),
             "--init", tmp("pre/pre.ckpt"), "--out", tmp("post")}) == 0);
  Table metrics = read_table(tmp("post/metrics.csv"));
  CHECK(metrics.rows.size() == 2);
  CHECK(metrics.col_index("mean_reward") >= 0);
  CHECK(metrics.col_index("net_evals") >= 0);
  CHECK(fs::exists(tmp("post/epoch_2.ckpt")));

  CHECK(cli({"eval", "--config", tmp("tiny.json"),
             "--init", tmp("post/epoch_2.ckpt"), "--n", "8",
             "--out", tmp("eval.csv")}) == 0);
  Table ev = read_table(tmp("eval.csv"));
  CHECK(ev.rows.size() == 2);  // one condition plus the overall row
  CHECK(ev.rows.back()[ev.col_index("condition")] == -1.0);

  CHECK(cli({"plot", tmp("post/metrics.csv"), "--out", tmp("m.svg")}) == 0);
  CHECK(slurp(tmp("m.svg")).find("<svg") != std::string::npos);
  CHECK(cli({"plot", tmp("post/metrics.csv"), "--out", tmp("m2.svg"),
             "--col", "no_such_column"}) == 2);
}

TEST_CASE("pipeline runs are byte-identical across repeats") {
  Workspace ws;
  spit(tmp("tiny.json"), kTinyConfig);
  CHECK(cli({"pretrain", "--config", tmp("tiny.json"), "--out", tmp("a")}) == 0);
  CHECK(cli({"pretrain", "--config", tmp("tiny.json"), "--out", tmp("b")}) == 0);
  CHECK(slurp(tmp("a/pre.ckpt")) == slurp(tmp("b/pre.ckpt")));
  CHECK(slurp(tmp("a/pretrain_loss.csv")) == slurp(tmp("b/pretrain_loss.csv")));

  CHECK(cli({"posttrain", "--config", tmp("tiny.json"),
             "--init", tmp("a/pre.ckpt"), "--out", tmp("pa")}) == 0);
  CHECK(cli({"posttrain", "--config", tmp("tiny.json"),
             "--init", tmp("a/pre.ckpt"), "--out", tmp("pb")}) == 0);
  CHECK(slurp(tmp("pa/metrics.csv")) == slurp(tmp("pb/metrics.csv")));
  CHECK(slurp(tmp("pa/epoch_2.ckpt")) == slurp(tmp("pb/epoch_2.ckpt")));

  // a different seed must change the artifacts
  CHECK(cli({"pretrain", "--config", tmp("tiny.json"), "--out", tmp("c"),
             "--seed", "99"}) == 0);
  CHECK(slurp(tmp("a/pre.ckpt")) != slurp(tmp("c/pre.ckpt")));
}

TEST_CASE("divergent training exits with code 3") {
  Workspace ws;
  std::string text(kTinyConfig);
  size_t pos = text.find("\"lr\": 0.001");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, std::string("\"lr\": 0.001").size(), "\"lr\": 1e200");
  spit(tmp("diverge.json"), text);
  CHECK(cli({"pretrain", "--config", tmp("diverge.json"),
             "--out", tmp("dv")}) == 3);
}

TEST_CASE("architecture mismatches between checkpoint and config exit with "
          "code 2") {
  Workspace ws;
  spit(tmp("tiny.json"), kTinyConfig);
  CHECK(cli({"pretrain", "--config", tmp("tiny.json"), "--out", tmp("p")}) == 0);
  std::string text(kTinyConfig);
  size_t pos = text.find("\"hidden\": 8");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, std::string("\"hidden\": 8").size(), "\"hidden\": 16");
  spit(tmp("wider.json"), text);
  CHECK(cli({"posttrain", "--config", tmp("wider.json"),
             "--init", tmp("p/pre.ckpt"), "--out", tmp("pw")}) == 2);
  // corrupted checkpoint input surfaces as a runtime failure (code 1)
  spit(tmp("junk.ckpt"), "junk");
  CHECK(cli({"posttrain", "--config", tmp("tiny.json"),
             "--init", tmp("junk.ckpt"), "--out", tmp("pj")}) == 1);
}
