#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "geo2/common.hpp"
#include "geo2/trainer.hpp"

using namespace geo2;
using trainer::RunConfig;
using trainer::Trainer;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& tag) {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("geo2_trainer_" + tag + "_" +
                                              std::to_string(counter++) + "_" +
                                              std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
}

RunConfig tiny_config() {
    RunConfig c;
    c.t1 = 2;
    c.t2 = 3;
    c.t3 = 4;
    c.batch_size = 4;
    c.val_every = 1;
    c.seed = 9;
    c.flow_image = 8;
    c.codec_factor = 4;
    c.pano_v_range = kPi / 2;
    c.geomap.dim = 8;
    c.geomap.heads = 2;
    c.geomap.views = 4;
    c.geomap.crop_res = 16;
    c.geomap.geometry = {4, 4, 4, 16, 101};
    c.geomap.semantic = {8, 2, 2, 1, 4, 4, 202};
    c.velocity = {48, 4, 8, 1, 2, 8, 8, 2, 404};
    return c;
}

// one tiny rendered dataset shared by every case: 8 train + 4 val pairs
const synth::DatasetManifest& tiny_data() {
    static synth::DatasetManifest m = [] {
        synth::BuildOptions o;
        o.n_train = 8;
        o.n_val = 4;
        o.seed = 5;
        o.sat_size = 32;
        o.pano_width = 64;
        o.pano_height = 32;
        o.v_range = kPi / 2;
        return synth::build_dataset(o, fresh_dir("data"));
    }();
    return m;
}

uint64_t head_hash(Trainer& t) { return nn::params_hash(t.geomap().head_params()); }
uint64_t flow_hash(Trainer& t) { return nn::params_hash(t.velocity().params()); }

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config json round trip keeps the digest stable") {
    RunConfig c = tiny_config();
    RunConfig back = trainer::parse_config(trainer::config_to_json(c));
    CHECK(trainer::config_digest(back) == trainer::config_digest(c));
    CHECK(back.t1 == c.t1);
    CHECK(back.velocity.channels == 48);
    CHECK(back.geomap.semantic.patch == 4);

    RunConfig defaults = trainer::parse_config("{}");
    CHECK(defaults.t1 == 50);
    CHECK(defaults.t3 == 550);
    CHECK(defaults.batch_size == 128);
    CHECK(defaults.eta2 == doctest::Approx(2e-4));

    RunConfig partial = trainer::parse_config(R"({"t1": 3, "loss": {"tau": 0.5}})");
    CHECK(partial.t1 == 3);
    CHECK(partial.loss.tau == doctest::Approx(0.5));
    CHECK(partial.loss.alpha == doctest::Approx(0.1));
    CHECK(trainer::config_digest(partial) != trainer::config_digest(defaults));
}

TEST_CASE("config validation rejects bad schedules and typos") {
    CHECK_THROWS_AS(trainer::parse_config(R"({"tau": 1})"), ConfigError);
    CHECK_THROWS_AS(trainer::parse_config(R"({"loss": {"tua": 1}})"), ConfigError);
    CHECK_THROWS_AS(trainer::parse_config(R"({"t1": "many"})"), ConfigError);
    CHECK_THROWS_AS(trainer::parse_config("[1,2]"), ConfigError);
    CHECK_THROWS_AS(trainer::parse_config("{"), ParseError);

    RunConfig c = tiny_config();
    c.t2 = c.t1 - 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.eta2 = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.flow_image = 10;  // not a multiple of the codec factor
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.flow_image = 16;  // token count no longer matches the velocity net
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.velocity.cond_dim = 16;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("stage 1 trains the head and nothing else") {
    RunConfig c = tiny_config();
    c.t1 = 2;
    Trainer tr(c, tiny_data());
    uint64_t geo_before = tr.geomap().geometry.weights_hash();
    uint64_t sem_before = tr.geomap().semantic.weights_hash();
    uint64_t head_before = head_hash(tr);
    uint64_t flow_before = flow_hash(tr);

    tr.train_stage1();

    CHECK(tr.epoch() == 2);
    CHECK(tr.geomap().geometry.weights_hash() == geo_before);
    CHECK(tr.geomap().semantic.weights_hash() == sem_before);
    CHECK(head_hash(tr) != head_before);
    CHECK(flow_hash(tr) == flow_before);

    REQUIRE(tr.logs().size() == 2);
    for (const auto& l : tr.logs()) {
        CHECK(l.stage == 1);
        CHECK(std::isfinite(l.l_gl));
        CHECK(std::isnan(l.l_ig));
        CHECK(std::isnan(l.l_kl));
        CHECK(std::isfinite(l.r1_val));  // val_every = 1 and a val split exists
    }
}

TEST_CASE("t1 = 0 leaves the state at initialization") {
    RunConfig c = tiny_config();
    c.t1 = 0;
    c.t2 = 0;
    c.t3 = 0;
    Trainer tr(c, tiny_data());
    uint64_t head_before = head_hash(tr);
    tr.run_schedule();
    CHECK(tr.epoch() == 0);
    CHECK(tr.logs().empty());
    CHECK(head_hash(tr) == head_before);
    CHECK(tr.adam_steps_head() == 0);
    CHECK(tr.adam_steps_flow() == 0);
}

TEST_CASE("eight-pair retrieval loss drops below its first-epoch value") {
    RunConfig c = tiny_config();
    c.t1 = 3;
    c.t2 = 3;
    c.t3 = 3;
    c.batch_size = 8;  // the whole train split in one batch
    c.eta1 = 1e-3;
    Trainer tr(c, tiny_data());
    tr.train_stage1();
    REQUIRE(tr.logs().size() == 3);
    CHECK(tr.logs()[2].l_gl < tr.logs()[0].l_gl);
}

TEST_CASE("stage 2 trains the flow and freezes the head") {
    RunConfig c = tiny_config();
    c.t1 = 1;
    c.t2 = 3;
    c.t3 = 3;
    Trainer tr(c, tiny_data());
    tr.train_stage1();
    uint64_t head_after_1 = head_hash(tr);
    uint64_t flow_before = flow_hash(tr);

    tr.train_stage2();

    CHECK(tr.epoch() == 3);
    CHECK(head_hash(tr) == head_after_1);
    CHECK(flow_hash(tr) != flow_before);
    REQUIRE(tr.logs().size() == 3);
    CHECK(tr.logs()[1].stage == 2);
    CHECK(std::isfinite(tr.logs()[1].l_ig));
    CHECK(std::isnan(tr.logs()[1].l_gl));
}

TEST_CASE("stage preconditions are enforced") {
    RunConfig c = tiny_config();
    Trainer tr(c, tiny_data());
    CHECK_THROWS_AS(tr.train_stage2(), UsageError);
    CHECK_THROWS_AS(tr.joint_finetune(), UsageError);
    CHECK_THROWS_AS(tr.run_schedule(-1), UsageError);
}

TEST_CASE("toy flow training cuts the loss well below its start") {
    RunConfig c = tiny_config();
    c.t1 = 0;
    c.t2 = 40;
    c.t3 = 40;
    c.adaptive = true;
    c.eta2 = 5e-3;
    Trainer tr(c, tiny_data());
    tr.run_schedule();
    REQUIRE(tr.logs().size() == 40);
    double first = tr.logs().front().l_ig;
    double last = tr.logs().back().l_ig;
    CHECK(std::isfinite(first));
    CHECK(last < 0.5 * first);
}

TEST_CASE("joint finetune updates both models and reduces the consistency gap") {
    RunConfig c = tiny_config();
    c.t1 = 2;
    c.t2 = 3;
    c.t3 = 9;
    c.adaptive = true;
    c.eta1 = 1e-3;
    c.eta3 = 1e-3;
    c.loss.alpha = 1.0;
    Trainer tr(c, tiny_data());
    tr.train_stage1();
    tr.train_stage2();
    double kl_before = tr.validation_kl();
    uint64_t head_before = head_hash(tr);
    uint64_t flow_before = flow_hash(tr);

    tr.joint_finetune();

    CHECK(tr.epoch() == 9);
    CHECK(head_hash(tr) != head_before);
    CHECK(flow_hash(tr) != flow_before);
    CHECK(tr.validation_kl() < kl_before);
    const auto& joint = tr.logs().back();
    CHECK(joint.stage == 3);
    CHECK(std::isfinite(joint.l_gl));
    CHECK(std::isfinite(joint.l_ig));
    CHECK(std::isfinite(joint.l_kl));
}

TEST_CASE("alpha = 0 reduces the joint head update to the stage-1 rule") {
    RunConfig base = tiny_config();
    base.batch_size = 8;
    base.eta1 = 0.02;
    base.eta3 = 0.02;
    base.loss.alpha = 0.0;

    RunConfig joint_cfg = base;
    joint_cfg.t1 = 1;
    joint_cfg.t2 = 1;  // stage 2 is empty; epoch 1 runs under the joint rule
    joint_cfg.t3 = 2;
    Trainer joint(joint_cfg, tiny_data());
    joint.run_schedule();

    RunConfig plain_cfg = base;
    plain_cfg.t1 = 2;
    plain_cfg.t2 = 2;
    plain_cfg.t3 = 2;
    Trainer plain(plain_cfg, tiny_data());
    plain.run_schedule();

    auto pj = joint.geomap().head_params();
    auto pp = plain.geomap().head_params();
    REQUIRE(pj.size() == pp.size());
    double worst = 0;
    for (size_t i = 0; i < pj.size(); ++i)
        worst = std::max(worst, (pj[i]->value - pp[i]->value).cwiseAbs().maxCoeff());
    CHECK(worst <= 1e-7);
}

TEST_CASE("t3 == t2 makes the finetune a no-op") {
    RunConfig c = tiny_config();
    c.t1 = 1;
    c.t2 = 2;
    c.t3 = 2;
    Trainer tr(c, tiny_data());
    tr.run_schedule();
    CHECK(tr.epoch() == 2);
    uint64_t head_before = head_hash(tr);
    tr.joint_finetune();
    CHECK(tr.epoch() == 2);
    CHECK(head_hash(tr) == head_before);
    CHECK(tr.logs().size() == 2);
}

TEST_CASE("epoch logs follow the documented shape") {
    RunConfig c = tiny_config();
    c.t1 = 1;
    c.t2 = 2;
    c.t3 = 3;
    c.val_every = 2;
    Trainer tr(c, tiny_data());
    tr.run_schedule();
    REQUIRE(tr.logs().size() == 3);

    for (int i = 0; i < 3; ++i) {
        auto j = nlohmann::json::parse(tr.logs()[i].json());
        REQUIRE(j.is_object());
        CHECK(j.size() == 6);
        for (const char* key : {"epoch", "stage", "L_GL", "L_IG", "L_KL", "r1_val"})
            CHECK(j.contains(key));
        CHECK(j["epoch"] == i);
        CHECK(j["stage"] == i + 1);
    }
    auto j0 = nlohmann::json::parse(tr.logs()[0].json());
    CHECK(j0["L_IG"].is_null());
    CHECK(j0["r1_val"].is_null());  // epoch 0 is off the val_every = 2 cadence
    auto j1 = nlohmann::json::parse(tr.logs()[1].json());
    CHECK(j1["L_GL"].is_null());
    CHECK(j1["L_IG"].is_number());
    CHECK(j1["r1_val"].is_number());
    auto j2 = nlohmann::json::parse(tr.logs()[2].json());
    CHECK(j2["L_GL"].is_number());
    CHECK(j2["L_KL"].is_number());

    fs::path log = fresh_dir("log") / "train.jsonl";
    tr.write_log(log);
    std::ifstream in(log);
    int lines = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 3);
}

TEST_CASE("checkpoint save, load, save is byte identical") {
    RunConfig c = tiny_config();
    c.t1 = 2;
    c.t2 = 3;
    c.t3 = 4;
    c.adaptive = true;
    Trainer tr(c, tiny_data());
    tr.run_schedule();
    fs::path dir = fresh_dir("ckpt");
    tr.save_checkpoint(dir / "a.ckpt");

    Trainer fresh(c, tiny_data());
    fresh.load_checkpoint(dir / "a.ckpt");
    CHECK(fresh.epoch() == tr.epoch());
    CHECK(fresh.adam_steps_head() == tr.adam_steps_head());
    CHECK(fresh.adam_steps_flow() == tr.adam_steps_flow());
    CHECK(head_hash(fresh) == head_hash(tr));
    CHECK(flow_hash(fresh) == flow_hash(tr));
    fresh.save_checkpoint(dir / "b.ckpt");
    CHECK(file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt"));
}

TEST_CASE("checkpoint mismatches are rejected") {
    RunConfig c = tiny_config();
    Trainer tr(c, tiny_data());
    fs::path dir = fresh_dir("ckpt_err");
    tr.save_checkpoint(dir / "x.ckpt");

    RunConfig other = tiny_config();
    other.loss.tau = 0.5;
    Trainer wrong(other, tiny_data());
    CHECK_THROWS_AS(wrong.load_checkpoint(dir / "x.ckpt"), ConfigError);

    CHECK_THROWS_AS(tr.load_checkpoint(dir / "missing.ckpt"), IoError);

    std::string bytes = file_bytes(dir / "x.ckpt");
    {
        std::ofstream out(dir / "trunc.ckpt", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(tr.load_checkpoint(dir / "trunc.ckpt"), ParseError);
    {
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream out(dir / "magic.ckpt", std::ios::binary);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    CHECK_THROWS_AS(tr.load_checkpoint(dir / "magic.ckpt"), ParseError);
}

TEST_CASE("same seed gives identical logs and resume matches uninterrupted bitwise") {
    RunConfig c = tiny_config();
    c.t1 = 2;
    c.t2 = 4;
    c.t3 = 5;
    c.adaptive = true;  // exercises the Adam moment and step-count state
    fs::path dir = fresh_dir("resume");

    Trainer full(c, tiny_data());
    full.run_schedule();
    full.save_checkpoint(dir / "full.ckpt");

    Trainer rerun(c, tiny_data());
    rerun.run_schedule();
    REQUIRE(rerun.logs().size() == full.logs().size());
    for (size_t i = 0; i < full.logs().size(); ++i)
        CHECK(rerun.logs()[i].json() == full.logs()[i].json());

    Trainer head(c, tiny_data());
    head.run_schedule(3);  // interrupt mid stage 2
    CHECK(head.epoch() == 3);
    head.save_checkpoint(dir / "mid.ckpt");

    Trainer tail(c, tiny_data());
    tail.load_checkpoint(dir / "mid.ckpt");
    tail.run_schedule();
    CHECK(tail.epoch() == 5);
    tail.save_checkpoint(dir / "resumed.ckpt");
    CHECK(file_bytes(dir / "resumed.ckpt") == file_bytes(dir / "full.ckpt"));
}

TEST_CASE("non-finite losses abort with epoch and batch context") {
    RunConfig c = tiny_config();
    c.t1 = 1;
    Trainer tr(c, tiny_data());
    tr.geomap().head_params()[0]->value.setConstant(std::nan(""));
    try {
        tr.train_stage1();
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        std::string msg = e.what();
        CHECK(msg.find("epoch 0") != std::string::npos);
        CHECK(msg.find("batch 0") != std::string::npos);
    }
}
