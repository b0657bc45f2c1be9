#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/oracles.hpp"
#include "selftime/checkpoint.hpp"
#include "selftime/cli.hpp"
#include "selftime/dataset.hpp"
#include "selftime/synthetic.hpp"

using namespace selftime;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct Workspace {
  fs::path dir;
  fs::path data;
  Workspace() {
    dir = fs::temp_directory_path() / ("selftime_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    data::WaveformOptions o;
    o.count = 24;
    o.length = 32;
    data = dir / "waves.tsv";
    data::save_ucr(data::make_waveforms(o), data);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

const std::vector<std::string> kQuick{"--epochs", "2", "--K", "2", "--C", "2", "--piece_ratio", "0.5", "--batch_size", "8"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"pretrain"}).code == cli::kUsage);
  CHECK(run({"augment", "--op", "flip", "--data", "x"}).code == cli::kUsage);
  const auto help = run({"pretrain", "--help"});
  CHECK(help.code == cli::kOk);
  CHECK(help.out.find("--epochs") != std::string::npos);
  CHECK(help.out.find("default 400") != std::string::npos);
  for (const char* sub : {"eval-linear", "transfer", "supervised", "random-baseline", "sweep", "augment",
                          "relation-labels", "embed"})
    CHECK(run({sub, "--help"}).code == cli::kOk);
}

TEST_CASE("relation-labels matches the enumeration oracle") {
  const auto r = run({"relation-labels", "--length", "300", "--classes", "3", "--piece", "60"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "label,count,fraction");
  const auto p = testing::exact_label_distribution(300, 3, 60);
  for (int k = 0; k < 3; ++k) {
    REQUIRE(std::getline(in, line));
    std::istringstream cells(line);
    std::string label, count, fraction;
    std::getline(cells, label, ',');
    std::getline(cells, count, ',');
    std::getline(cells, fraction, ',');
    CHECK(std::stoi(label) == k);
    CHECK(std::stod(count) == doctest::Approx(p[static_cast<std::size_t>(k)] * 241 * 241));
  }
  CHECK(run({"relation-labels", "--length", "10", "--classes", "3", "--piece", "20"}).code == cli::kConfig);
}

TEST_CASE("pretrain, evaluate and embed through the CLI") {
  Workspace ws;
  const auto ck = ws.path("a.stck"), ck2 = ws.path("b.stck");
  const auto base = with({"pretrain", "--data", ws.data.string(), "--seed", "3"}, kQuick);
  const auto a = run(with(base, {"--out", ck}));
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("epoch,loss_inter,loss_intra,loss_total,inter_acc,class_acc\n", 0) == 0);
  CHECK(lines(a.out) == 3);
  CHECK(a.err.find("epoch 1/2") != std::string::npos);
  REQUIRE(run(with(base, {"--out", ck2, "--log", ws.path("log.csv")})).code == 0);
  CHECK(slurp(ck) == slurp(ck2));
  CHECK(slurp(ws.path("log.csv")) == a.out);

  const auto ev = run(with({"eval-linear", "--data", ws.data.string(), "--checkpoint", ck, "--trials", "2", "--splits",
                            "1", "--eval_epochs", "5"},
                           {}));
  REQUIRE(ev.code == 0);
  CHECK(ev.out.rfind("method,split_index,split_seed,trial,accuracy\n", 0) == 0);
  CHECK(lines(ev.out) == 3);
  CHECK(ev.err.find("population std") != std::string::npos);

  const auto em = run({"embed", "--data", ws.data.string(), "--checkpoint", ck});
  REQUIRE(em.code == 0);
  CHECK(lines(em.out) == 25);

  const auto sw = run(with({"sweep", "--data", ws.data.string(), "--classes", "2,3", "--ratios", "0.5,0.1", "--trials",
                            "1", "--splits", "1", "--eval_epochs", "3"},
                           {"--epochs", "1", "--K", "2", "--batch_size", "8"}));
  REQUIRE(sw.code == 0);
  CHECK(lines(sw.out) == 5);
  CHECK(sw.err.find("skipped C=2 piece_ratio=0.1") != std::string::npos);
}

TEST_CASE("exit codes per error class") {
  Workspace ws;
  const auto out = ws.path("x.stck");
  CHECK(run(with({"pretrain", "--data", ws.data.string(), "--out", out, "--epochs", "-1"}, {})).code == cli::kConfig);
  CHECK(run({"pretrain", "--data", ws.path("missing.tsv"), "--out", out}).code == cli::kData);
  {
    std::ofstream(ws.path("bad.cfg")) << "learning_rate = 2\n";
    const auto r = run({"pretrain", "--data", ws.data.string(), "--out", out, "--config", ws.path("bad.cfg")});
    CHECK(r.code == cli::kConfig);
    CHECK(r.err.find("learning_rate") != std::string::npos);
  }
  {
    std::ofstream(ws.path("ragged.tsv")) << "1\t1\t2\n1\t1\n";
    CHECK(run({"embed", "--data", ws.path("ragged.tsv"), "--checkpoint", out}).code == cli::kData);
  }
  std::ofstream(ws.path("junk.stck")) << "XXXXjunk";
  CHECK(run({"embed", "--data", ws.data.string(), "--checkpoint", ws.path("junk.stck")}).code == cli::kData);
  // Piece length below 16 for T=32.
  CHECK(run(with({"pretrain", "--data", ws.data.string(), "--out", out}, {"--epochs", "1", "--piece_ratio", "0.2"}))
            .code == cli::kConfig);
}

TEST_CASE("seed precedence: flag over config over environment") {
  Workspace ws;
  const auto seed_of = [&](std::vector<std::string> extra) {
    const auto out = ws.path("s.stck");
    auto args = with({"pretrain", "--data", ws.data.string(), "--out", out}, kQuick);
    args.insert(args.end(), extra.begin(), extra.end());
    REQUIRE(run(args).code == 0);
    return io::load_checkpoint(out).meta("seed").value_or("");
  };
  std::ofstream(ws.path("seed.cfg")) << "seed = 11\n";
  ::setenv("SELFTIME_SEED", "7", 1);
  CHECK(seed_of({}) == "7");
  CHECK(seed_of({"--config", ws.path("seed.cfg")}) == "11");
  CHECK(seed_of({"--config", ws.path("seed.cfg"), "--seed", "13"}) == "13");
  ::unsetenv("SELFTIME_SEED");
  CHECK(seed_of({}) == "0");
}

TEST_CASE("augment csv") {
  Workspace ws;
  const auto a = run({"augment", "--op", "magnitude_warp", "--data", ws.data.string(), "--seed", "1"});
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("id,t,original,transformed\n", 0) == 0);
  CHECK(lines(a.out) == 1 + 24 * 32);
  CHECK(run({"augment", "--op", "magnitude_warp", "--data", ws.data.string(), "--seed", "1"}).out == a.out);
  CHECK(run({"augment", "--op", "magnitude_warp", "--data", ws.data.string(), "--seed", "2"}).out != a.out);
  const auto one = run({"augment", "--op", "cutout", "--param", "ratio=0.25", "--data", ws.data.string(), "--row", "3"});
  REQUIRE(one.code == 0);
  CHECK(lines(one.out) == 33);
  CHECK(run({"augment", "--op", "cutout", "--param", "ratio=3", "--data", ws.data.string()}).code == cli::kConfig);
  CHECK(run({"augment", "--op", "cutout", "--param", "sigma=1", "--data", ws.data.string()}).code == cli::kConfig);
  const auto file = ws.path("aug.csv");
  REQUIRE(run({"augment", "--op", "jitter", "--data", ws.data.string(), "--out", file}).code == 0);
  CHECK(lines(slurp(file)) == 1 + 24 * 32);
}
