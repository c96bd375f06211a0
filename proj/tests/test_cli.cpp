#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("GEO2_CLI");
    REQUIRE_MESSAGE(p != nullptr, "GEO2_CLI must point at the built binary");
    return p;
}

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("geo2_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct RunResult {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run(const std::string& args, const fs::path& dir) {
    fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    std::string cmd =
        cli_path() + " " + args + " >" + out.string() + " 2>" + err.string();
    int rc = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string file_bytes(const fs::path& p) { return slurp(p); }

// config matching the toy dataset below; small enough that the full schedule
// finishes in well under a second
const char* kToyConfig = R"({
  "t1": 2, "t2": 3, "t3": 4,
  "eta1": 0.001, "eta2": 0.002, "eta3": 0.0005,
  "batch_size": 4, "adaptive": true, "val_every": 1, "seed": 9,
  "flow_image": 8, "codec_factor": 4, "pano_v_range": 1.5707963267948966,
  "geomap": {
    "dim": 8, "heads": 2, "views": 4, "crop_res": 16,
    "geometry": {"channels": 4, "out_h": 4, "out_w": 4, "input_res": 16, "seed": 101},
    "semantic": {"dim": 8, "sat_grid_h": 2, "sat_grid_w": 2,
                 "ground_grid_h": 1, "ground_grid_w": 4, "patch": 4, "seed": 202}
  },
  "velocity": {"channels": 48, "tokens": 4, "hidden": 8, "depth": 1, "heads": 2,
               "head_hidden": 8, "cond_dim": 8, "mlp_ratio": 2, "seed": 404}
})";

fs::path write_config(const fs::path& dir) {
    fs::path p = dir / "cfg.json";
    std::ofstream(p) << kToyConfig;
    return p;
}

}  // namespace

TEST_CASE("cli: help and unknown subcommands") {
    auto dir = fresh_dir("help");

    auto help = run("--help", dir);
    CHECK(help.code == 0);
    CHECK(help.out.find("gen-data") != std::string::npos);
    CHECK(help.out.find("eval-retrieval") != std::string::npos);

    auto bare = run("", dir);
    CHECK(bare.code == 0);
    CHECK(bare.out.find("Usage") != std::string::npos);

    auto typo = run("trian", dir);
    CHECK(typo.code == 1);
    CHECK(typo.err.find("did you mean 'train'") != std::string::npos);

    auto junk = run("frobnicate", dir);
    CHECK(junk.code == 1);
    CHECK(junk.err.find("unknown subcommand") != std::string::npos);
}

TEST_CASE("cli: exit codes follow the error taxonomy") {
    auto dir = fresh_dir("codes");
    auto cfg = write_config(dir);

    // missing required flag: argument error
    auto miss = run("train --config " + cfg.string() + " --out-dir " + (dir / "x").string(),
                    dir);
    CHECK(miss.code == 1);

    // --config required by the subcommand but absent: usage error
    auto nocfg = run("train --data nowhere.jsonl --out-dir " + (dir / "x").string(), dir);
    CHECK(nocfg.code == 1);
    CHECK(nocfg.err.find("--config") != std::string::npos);

    // structurally valid JSON with an impossible schedule: config error
    fs::path bad = dir / "bad.json";
    std::ofstream(bad) << R"({"t1": 5, "t2": 3, "t3": 9})";
    auto badcfg = run("train --config " + bad.string() + " --data nowhere.jsonl --out-dir " +
                          (dir / "x").string(),
                      dir);
    CHECK(badcfg.code == 2);

    // unreadable input file: I/O error
    auto noinput = run("degradation --input missing.png --out " + (dir / "z.json").string(),
                       dir);
    CHECK(noinput.code == 2);

    // violated metric precondition: usage error
    auto gen = run("gen-data --out " + (dir / "d").string() +
                       " --train 2 --sat-size 16 --pano-width 32 --pano-height 16",
                   dir);
    REQUIRE(gen.code == 0);
    auto desc = run("degradation --input " + (dir / "d/satellite/000000.png").string() +
                        " --sigmas 8,4 --out " + (dir / "z.json").string(),
                    dir);
    CHECK(desc.code == 1);
    CHECK(desc.err.find("ascend") != std::string::npos);

    // a config that is not a plottable report: parse error
    auto noplot = run("plot --report " + cfg.string() + " --out " + (dir / "z.svg").string(),
                      dir);
    CHECK(noplot.code == 2);
}

TEST_CASE("cli: full pipeline on a toy dataset") {
    auto dir = fresh_dir("pipeline");
    auto cfg = write_config(dir);
    std::string base = " --config " + cfg.string();

    auto gen = run("gen-data" + base + " --out " + (dir / "data").string() +
                       " --train 6 --val 4 --sat-size 32 --pano-width 64 --pano-height 32",
                   dir);
    REQUIRE_MESSAGE(gen.code == 0, gen.err);
    std::string manifest = (dir / "data/manifest.jsonl").string();
    CHECK(fs::exists(manifest));
    CHECK(json::parse(gen.out).at("entries").get<int>() == 10);

    auto train = run("train" + base + " --data " + manifest + " --out-dir " +
                         (dir / "run").string(),
                     dir);
    REQUIRE_MESSAGE(train.code == 0, train.err);
    fs::path ckpt = dir / "run/checkpoint.ckpt";
    CHECK(fs::exists(ckpt));
    CHECK(json::parse(train.out).at("epochs").get<int>() == 4);

    // an epoch budget only makes sense for the full schedule
    auto bad_budget = run("train" + base + " --data " + manifest + " --stage 1" +
                              " --max-epochs 1 --out-dir " + (dir / "run_bb").string(),
                          dir);
    CHECK(bad_budget.code == 1);
    CHECK(bad_budget.err.find("--max-epochs") != std::string::npos);

    // four epochs logged, stage transitions visible
    std::ifstream log(dir / "run/log.jsonl");
    std::string line;
    int lines = 0, last_stage = 0;
    while (std::getline(log, line)) {
        ++lines;
        last_stage = json::parse(line).at("stage").get<int>();
    }
    CHECK(lines == 4);
    CHECK(last_stage == 3);

    auto emb = run("embed" + base + " --data " + manifest + " --split val --ckpt " +
                       ckpt.string() + " --out-dir " + (dir / "banks").string(),
                   dir);
    REQUIRE_MESSAGE(emb.code == 0, emb.err);
    CHECK(fs::exists(dir / "banks/ground.f32"));
    CHECK(fs::exists(dir / "banks/satellite.json"));

    auto retr = run("eval-retrieval --queries " + (dir / "banks/ground").string() +
                        " --refs " + (dir / "banks/satellite").string() + " --data " +
                        manifest + " --split val --ks 1,2,4 --out " +
                        (dir / "retr.json").string(),
                    dir);
    REQUIRE_MESSAGE(retr.code == 0, retr.err);
    json rj = json::parse(slurp(dir / "retr.json"));
    CHECK(rj.at("kind") == "retrieval");
    CHECK(rj.at("n_queries") == 4);
    double r1 = rj.at("r_at").at("1").get<double>();
    double r4 = rj.at("r_at").at("4").get<double>();
    CHECK(r1 <= r4);
    CHECK(r4 == 1.0);  // every positive is in a bank of four

    auto synth = run("synthesize" + base + " --ckpt " + ckpt.string() + " --input " +
                         (dir / "data/ground/000000.png").string() +
                         " --direction g2s --steps 5 --out " + (dir / "synth.png").string(),
                     dir);
    REQUIRE_MESSAGE(synth.code == 0, synth.err);
    CHECK(fs::exists(dir / "synth.png"));

    auto evs = run("eval-synthesis" + base + " --ckpt " + ckpt.string() + " --data " +
                       manifest + " --split val --direction g2s --steps 5 --out " +
                       (dir / "synthrep.json").string(),
                   dir);
    REQUIRE_MESSAGE(evs.code == 0, evs.err);
    json sj = json::parse(slurp(dir / "synthrep.json"));
    CHECK(sj.at("kind") == "synthesis");
    CHECK(sj.at("n") == 4);
    CHECK(sj.at("mse").get<double>() > 0.0);
    CHECK(sj.at("paired_better_fraction").get<double>() >= 0.0);

    auto deg = run("degradation --input " + (dir / "data/satellite/000000.png").string() +
                       " --sigmas 0,4,8 --shifts 0,4 --out " + (dir / "degr.json").string(),
                   dir);
    REQUIRE_MESSAGE(deg.code == 0, deg.err);
    json dj = json::parse(slurp(dir / "degr.json"));
    CHECK(dj.at("kind") == "degradation");
    CHECK(dj.at("psnr_clipped")[0] == "inf");

    auto abl = run("ablate-steps" + base + " --ckpt " + ckpt.string() + " --data " +
                       manifest + " --split val --steps 2,5 --out " +
                       (dir / "abl.json").string(),
                   dir);
    REQUIRE_MESSAGE(abl.code == 0, abl.err);
    json aj = json::parse(slurp(dir / "abl.json"));
    CHECK(aj.at("kind") == "ode_steps");
    CHECK(aj.at("rows").size() == 2);

    // every report kind renders
    for (const std::string spec : {"--report " + (dir / "retr.json").string(),
                                   "--report " + (dir / "degr.json").string(),
                                   "--report " + (dir / "degr.json").string() + " --curve shift",
                                   "--report " + (dir / "abl.json").string() + " --curve psnr"}) {
        static int n = 0;
        fs::path svg = dir / ("plot_" + std::to_string(n++) + ".svg");
        auto pl = run("plot " + spec + " --out " + svg.string(), dir);
        REQUIRE_MESSAGE(pl.code == 0, pl.err);
        std::string body = slurp(svg);
        CHECK(body.find("<svg") != std::string::npos);
        CHECK(body.find("polyline") != std::string::npos);
    }
}

TEST_CASE("cli: training resume and embeddings are deterministic") {
    auto dir = fresh_dir("determinism");
    auto cfg = write_config(dir);
    std::string base = " --config " + cfg.string();

    auto gen = run("gen-data" + base + " --out " + (dir / "data").string() +
                       " --train 6 --val 2 --sat-size 32 --pano-width 64 --pano-height 32",
                   dir);
    REQUIRE(gen.code == 0);
    std::string manifest = (dir / "data/manifest.jsonl").string();

    auto full = run("train" + base + " --data " + manifest + " --out-dir " +
                        (dir / "full").string(),
                    dir);
    REQUIRE_MESSAGE(full.code == 0, full.err);

    auto half = run("train" + base + " --data " + manifest + " --out-dir " +
                        (dir / "half").string() + " --max-epochs 2",
                    dir);
    REQUIRE(half.code == 0);
    auto rest = run("train" + base + " --data " + manifest + " --out-dir " +
                        (dir / "rest").string() + " --resume " +
                        (dir / "half/checkpoint.ckpt").string(),
                    dir);
    REQUIRE_MESSAGE(rest.code == 0, rest.err);
    CHECK(file_bytes(dir / "rest/checkpoint.ckpt") == file_bytes(dir / "full/checkpoint.ckpt"));

    // embeddings from the same checkpoint match byte for byte
    for (const char* out : {"b1", "b2"}) {
        auto emb = run("embed" + base + " --data " + manifest + " --split val --ckpt " +
                           (dir / "full/checkpoint.ckpt").string() + " --out-dir " +
                           (dir / out).string(),
                       dir);
        REQUIRE(emb.code == 0);
    }
    CHECK(file_bytes(dir / "b1/ground.f32") == file_bytes(dir / "b2/ground.f32"));
    CHECK(file_bytes(dir / "b1/satellite.f32") == file_bytes(dir / "b2/satellite.f32"));
}
