#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  static int counter = 0;
  fs::path log = fs::temp_directory_path() /
                 ("sfp-cli-out-" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string(SFP_CLI_PATH) + " " + args + " > " +
                    log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = slurp(log);
  fs::remove(log);
  return r;
}

// One disposable workspace per binary run.
const fs::path& workspace() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "sfp-cli-test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("help exits cleanly and lists the subcommands") {
  RunResult r = run("--help");
  CHECK(r.code == 0);
  for (const char* sub : {"generate", "extract", "compare", "attack",
                          "augment", "train", "verify", "false-claim",
                          "ablate"})
    CHECK(r.output.find(sub) != std::string::npos);
  CHECK(run("extract --help").code == 0);
  CHECK(run("attack finetune --help").code == 0);
}

TEST_CASE("usage errors exit with 2") {
  RunResult r = run("extract");  // --model and --out are required
  CHECK(r.code == 2);
  CHECK(r.output.find("--model") != std::string::npos);
  CHECK(run("no-such-command").code == 2);
  CHECK(run("attack prune --ratio 0.1").code == 2);
}

TEST_CASE("runtime failures exit with 1 and explain themselves") {
  fs::path out = workspace() / "missing.fp";
  RunResult r = run("extract --model /nonexistent/sfp-model --out " + q(out) +
                    " --n-f 2 --h 4");
  CHECK(r.code == 1);
  CHECK(r.output.find("sfp: error:") != std::string::npos);
  CHECK(r.output.find("sfp-model") != std::string::npos);
}

TEST_CASE("generate is deterministic in the seed") {
  fs::path a = workspace() / "fam-a";
  fs::path b = workspace() / "fam-b";
  std::string dims = " --d-model 12 --d 8 --layers 3 --vocab 8 --seed 5";
  CHECK(run("generate --out " + q(a) + dims).code == 0);
  CHECK(run("generate --out " + q(b) + dims).code == 0);
  CHECK(slurp(a / "target" / "layer000.q.mat") ==
        slurp(b / "target" / "layer000.q.mat"));
  CHECK(slurp(a / "target" / "manifest.json") ==
        slurp(b / "target" / "manifest.json"));
}

TEST_CASE("the full pipeline holds together") {
  const fs::path& ws = workspace();
  fs::path fam = ws / "family";
  REQUIRE(run("generate --out " + q(fam) +
              " --d-model 12 --d 8 --layers 3 --vocab 8 --seed 9"
              " --related 1 --unrelated 2").code == 0);
  REQUIRE(fs::exists(fam / "target"));
  REQUIRE(fs::exists(fam / "rel-000"));
  REQUIRE(fs::exists(fam / "unr-001"));

  fs::path target_fp = ws / "target.fp";
  REQUIRE(run("extract --model " + q(fam / "target") + " --out " +
              q(target_fp) + " --n-f 2 --h 8").code == 0);
  REQUIRE(fs::exists(target_fp));
  REQUIRE(fs::exists(ws / "target.fp.json"));

  SUBCASE("attacks leave the fingerprint where it was") {
    fs::path hit = ws / "attacked";
    fs::path rec = ws / "rec.json";
    REQUIRE(run("attack combined --model " + q(fam / "target") + " --out " +
                q(hit) + " --seed 4 --record " + q(rec)).code == 0);
    fs::path hit_fp = ws / "attacked.fp";
    REQUIRE(run("extract --model " + q(hit) + " --out " + q(hit_fp) +
                " --n-f 2 --h 8").code == 0);

    fs::path cmp = ws / "compare.json";
    REQUIRE(run("compare --a " + q(target_fp) + " --b " + q(hit_fp) +
                " --out-json " + q(cmp)).code == 0);
    json report = json::parse(slurp(cmp));
    CHECK(report["distance"].get<double>() < 1e-8);
    CHECK(report["n_f"] == 2);
    CHECK(report["h"] == 8);

    // Replay the record and undo it.
    fs::path replay = ws / "replayed";
    REQUIRE(run("attack apply --model " + q(fam / "target") + " --record " +
                q(rec) + " --out " + q(replay)).code == 0);
    CHECK(slurp(replay / "layer000.q.mat") == slurp(hit / "layer000.q.mat"));
    fs::path undone = ws / "undone";
    REQUIRE(run("attack invert --model " + q(hit) + " --record " + q(rec) +
                " --out " + q(undone)).code == 0);
    CHECK(fs::exists(undone / "manifest.json"));
  }

  SUBCASE("training and verification close the loop") {
    fs::path net = ws / "net";
    fs::path hist = ws / "history.csv";
    REQUIRE(run("train --target " + q(fam / "target") + " --related " +
                q(fam / "rel-000") + " --unrelated " + q(fam / "unr-000") +
                " --unrelated " + q(fam / "unr-001") +
                " --noise-alpha 0.005 --mask-rate 0.1 --corpus-seed 3"
                " --n-f 2 --h 8 --epochs 5 --lr 1e-3 --train-seed 2"
                " --out " + q(net) + " --history " + q(hist)).code == 0);
    REQUIRE(fs::exists(net / "manifest.json"));
    std::string history = slurp(hist);
    CHECK(history.find("epoch,lr,clean_loss,adv_loss,accuracy") == 0);

    fs::path verdict = ws / "verdict.json";
    REQUIRE(run("verify --net " + q(net) + " --target-fp " + q(target_fp) +
                " --suspect " + q(fam / "rel-000") + " --out-json " +
                q(verdict)).code == 0);
    json v = json::parse(slurp(verdict));
    CHECK(v.contains("verdict"));
    CHECK(v.contains("score"));
    CHECK(v["tau"].get<double>() == 0.5);
    double score = v["score"].get<double>();
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);
  }

  SUBCASE("adversarial subcommands emit their artifacts") {
    fs::path pruned = ws / "pruned";
    REQUIRE(run("attack prune --model " + q(fam / "target") + " --out " +
                q(pruned) + " --ratio 0.25 --seed 6").code == 0);
    json manifest = json::parse(slurp(pruned / "manifest.json"));
    CHECK(manifest["d_model"] == 9);

    fs::path rel_copy = fam / "rel-000";
    fs::path tuned = ws / "tuned";
    fs::path traj = ws / "trajectory.csv";
    REQUIRE(run("attack finetune --model " + q(rel_copy) + " --target-fp " +
                q(target_fp) + " --steps 3 --lr 1e-3 --seed 8 --out " +
                q(tuned) + " --trajectory " + q(traj)).code == 0);
    std::string t = slurp(traj);
    CHECK(t.find("step,distance,attack_loss,data_loss") == 0);

    fs::path claim = ws / "claim.json";
    fs::path ga_hist = ws / "ga.csv";
    REQUIRE(run("false-claim --claimant " + q(fam / "unr-000") +
                " --accused " + q(fam / "target") +
                " --population 12 --generations 8 --length 6 --seed 1"
                " --out-json " + q(claim) + " --history " +
                q(ga_hist)).code == 0);
    json c = json::parse(slurp(claim));
    CHECK(c.contains("best_fitness"));
    CHECK(c.contains("best_tokens"));
    std::string ga_csv = slurp(ga_hist);
    CHECK(ga_csv.find("generation,best_fitness") == 0);
    // Header plus the initial population and one row per generation.
    CHECK(std::count(ga_csv.begin(), ga_csv.end(), '\n') == 10);

    fs::path ab_csv = ws / "ablate.csv";
    REQUIRE(run("ablate --target " + q(fam / "target") + " --related " +
                q(fam / "rel-000") + " --unrelated " + q(fam / "unr-000") +
                " --windows first --subsets both --kinds both"
                " --n-f-values 2 --h-values 2,4 --out-csv " +
                q(ab_csv)).code == 0);
    std::string csv = slurp(ab_csv);
    CHECK(csv.find("window,subset,values,n_f,h,feasible") == 0);
  }

  SUBCASE("augment subcommands write derived bundles") {
    fs::path noised = ws / "noised";
    REQUIRE(run("augment noise --model " + q(fam / "target") + " --out " +
                q(noised) + " --alpha 0.01 --n-f 2 --seed 3").code == 0);
    json manifest = json::parse(slurp(noised / "manifest.json"));
    CHECK(manifest["model_id"].get<std::string>().find("+noise-a0.01") !=
          std::string::npos);

    fs::path cut = ws / "cut";
    REQUIRE(run("augment delete-rows --model " + q(fam / "target") +
                " --out " + q(cut) + " --count 2 --seed 3").code == 0);
    CHECK(json::parse(slurp(cut / "manifest.json"))["d_model"] == 10);
  }
}
