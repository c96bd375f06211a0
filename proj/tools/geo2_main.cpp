#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geo2/common.hpp"
#include "geo2/e2p.hpp"
#include "geo2/evalsuite.hpp"
#include "geo2/geoflow.hpp"
#include "geo2/geomap.hpp"
#include "geo2/image.hpp"
#include "geo2/svgplot.hpp"
#include "geo2/synthdata.hpp"
#include "geo2/trainer.hpp"

namespace {

using namespace geo2;
using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> kSubcommands = {
    "gen-data",  "e2p",        "embed",          "train",       "synthesize",
    "eval-retrieval", "eval-synthesis", "degradation", "ablate-steps", "plot"};

int edit_distance(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= b.size(); ++j) {
            int sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// shared --config/--seed pair; flags override config values override defaults
struct Common {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_given = false;

    std::optional<trainer::RunConfig> config;

    void resolve() {
        if (!config_path.empty()) config = trainer::load_config(config_path);
    }
    uint64_t pick_seed(uint64_t fallback) const {
        if (seed_given) return seed;
        if (config) return config->seed;
        return fallback;
    }
    trainer::RunConfig require_config() const {
        if (!config) throw UsageError("this subcommand needs --config");
        trainer::RunConfig c = *config;
        if (seed_given) c.seed = seed;
        return c;
    }
};

void attach_common(CLI::App* sc, Common& c) {
    sc->add_option("--config", c.config_path, "pipeline config JSON");
    sc->add_option("--seed", c.seed, "override the config seed")
        ->each([&c](const std::string&) { c.seed_given = true; });
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw UsageError("bad integer list entry: '" + tok + "'");
        }
    }
    if (out.empty()) throw UsageError("empty integer list");
    return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw UsageError("bad number list entry: '" + tok + "'");
        }
    }
    if (out.empty()) throw UsageError("empty number list");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
}

double json_metric(const json& v) {
    if (v.is_string() && v.get<std::string>() == "inf")
        return std::numeric_limits<double>::infinity();
    if (v.is_number()) return v.get<double>();
    throw ParseError("report: expected a number or \"inf\"");
}

// ---------------------------------------------------------------- gen-data

struct GenDataOpts {
    Common common;
    std::string out;
    int n_train = 8, n_val = 0, n_test = 0;
    std::string protocol = "one_to_one";
    int clones = 2;
    int sat_size = 64;
    int pano_width = 256, pano_height = 64;
    double v_range = -1;  // <0: fall back to config, then the dataset default
};

void run_gen_data(GenDataOpts& o) {
    synth::BuildOptions b;
    b.n_train = o.n_train;
    b.n_val = o.n_val;
    b.n_test = o.n_test;
    b.seed = o.common.pick_seed(b.seed);
    if (o.protocol == "one_to_one") b.protocol = synth::Protocol::one_to_one;
    else if (o.protocol == "many_to_one") b.protocol = synth::Protocol::many_to_one;
    else throw UsageError("protocol must be one_to_one or many_to_one");
    b.clones = o.clones;
    b.sat_size = o.sat_size;
    b.pano_width = o.pano_width;
    b.pano_height = o.pano_height;
    if (o.v_range > 0) b.v_range = o.v_range;
    else if (o.common.config) b.v_range = o.common.config->pano_v_range;

    auto manifest = synth::build_dataset(b, o.out);
    json j{{"manifest", (fs::path(o.out) / "manifest.jsonl").string()},
           {"entries", manifest.entries.size()},
           {"seed", b.seed}};
    std::cout << j.dump() << "\n";
}

// --------------------------------------------------------------------- e2p

struct E2pOpts {
    Common common;
    std::string input, out_dir;
    int res = 64;
    double v_range = -1;
    double yaw = 0, pitch = 0, fov = 0;  // fov > 0 switches to a single custom crop
};

void run_e2p(E2pOpts& o) {
    double v_range = o.v_range > 0 ? o.v_range
                     : o.common.config ? o.common.config->pano_v_range
                                       : kPi / 2;
    e2p::Panorama pano{read_png(o.input), v_range};
    fs::create_directories(o.out_dir);
    if (o.fov > 0) {
        e2p::CropSpec spec{o.yaw, o.pitch, o.fov, o.fov, o.res, o.res};
        spec.validate();
        auto crop = e2p::extract_crop(pano, spec);
        write_png((fs::path(o.out_dir) / "crop.png").string(), crop.image);
        std::cout << json{{"crops", 1}, {"dir", o.out_dir}}.dump() << "\n";
        return;
    }
    auto crops = e2p::e2p_transform(pano, e2p::default_crop_specs(o.res, o.res));
    for (size_t i = 0; i < crops.size(); ++i)
        write_png((fs::path(o.out_dir) / ("crop_" + std::to_string(i) + ".png")).string(),
                  crops[i].image);
    std::cout << json{{"crops", crops.size()}, {"dir", o.out_dir}}.dump() << "\n";
}

// ------------------------------------------------------------------- embed

struct EmbedOpts {
    Common common;
    std::string data, ckpt, out_dir;
    std::string split = "val";
};

void run_embed(EmbedOpts& o) {
    trainer::RunConfig cfg = o.common.require_config();
    geomap::GeoMapModel model(cfg.geomap);
    flow::VelocityNet net(cfg.velocity);
    if (!o.ckpt.empty()) trainer::load_weights(o.ckpt, cfg, model, net);

    auto manifest = synth::load_manifest(o.data);
    auto entries = o.split == "all" ? manifest.entries : manifest.split_entries(o.split);
    if (entries.empty()) throw ConfigError("no entries in split '" + o.split + "'");

    geomap::EmbeddingBank ground, sat;
    ground.vectors.resize(static_cast<Eigen::Index>(entries.size()), cfg.geomap.dim);
    std::vector<std::string> sat_paths;
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        Image g = read_png((manifest.root / e.ground).string());
        ground.ids.push_back(e.id);
        ground.vectors.row(static_cast<Eigen::Index>(i)) =
            model.embed_ground({g, cfg.pano_v_range}).transpose();
        if (std::find(sat_paths.begin(), sat_paths.end(), e.satellite) == sat_paths.end())
            sat_paths.push_back(e.satellite);
    }
    sat.vectors.resize(static_cast<Eigen::Index>(sat_paths.size()), cfg.geomap.dim);
    for (size_t i = 0; i < sat_paths.size(); ++i) {
        Image s = read_png((manifest.root / sat_paths[i]).string());
        sat.ids.push_back(fs::path(sat_paths[i]).stem().string());
        sat.vectors.row(static_cast<Eigen::Index>(i)) = model.embed_satellite(s).transpose();
    }
    fs::create_directories(o.out_dir);
    geomap::save_bank(ground, fs::path(o.out_dir) / "ground");
    geomap::save_bank(sat, fs::path(o.out_dir) / "satellite");
    std::cout << json{{"ground", ground.ids.size()}, {"satellite", sat.ids.size()},
                      {"dir", o.out_dir}}
                     .dump()
              << "\n";
}

// ------------------------------------------------------------------- train

struct TrainOpts {
    Common common;
    std::string data, out_dir, resume;
    std::string stage = "all";
    int max_epochs = -1;
};

void run_train(TrainOpts& o) {
    trainer::RunConfig cfg = o.common.require_config();
    auto manifest = synth::load_manifest(o.data);
    trainer::Trainer tr(cfg, manifest);
    if (!o.resume.empty()) tr.load_checkpoint(o.resume);

    std::optional<int> budget;
    if (o.max_epochs >= 0) budget = o.max_epochs;
    if (budget && o.stage != "all")
        throw UsageError("--max-epochs only applies to --stage all");
    if (o.stage == "1") tr.train_stage1();
    else if (o.stage == "2") tr.train_stage2();
    else if (o.stage == "3") tr.joint_finetune();
    else if (o.stage == "all") tr.run_schedule(budget);
    else throw UsageError("--stage must be 1, 2, 3 or all");

    fs::create_directories(o.out_dir);
    fs::path ckpt = fs::path(o.out_dir) / "checkpoint.ckpt";
    tr.save_checkpoint(ckpt);
    tr.write_log(fs::path(o.out_dir) / "log.jsonl");
    json j{{"checkpoint", ckpt.string()},
           {"epochs", tr.epoch()},
           {"log", (fs::path(o.out_dir) / "log.jsonl").string()}};
    std::cout << j.dump() << "\n";
}

// -------------------------------------------------------------- synthesize

struct SynthOpts {
    Common common;
    std::string input, ckpt, out;
    std::string direction = "g2s";
    int steps = 10;
};

void run_synthesize(SynthOpts& o) {
    trainer::RunConfig cfg = o.common.require_config();
    geomap::GeoMapModel model(cfg.geomap);
    flow::VelocityNet net(cfg.velocity);
    if (!o.ckpt.empty()) trainer::load_weights(o.ckpt, cfg, model, net);
    flow::SpaceToDepthCodec codec(cfg.codec_factor, cfg.codec_seed);

    flow::Direction dir = flow::parse_direction(o.direction);
    flow::SamplerConfig sampler{o.steps, dir};
    sampler.validate();
    Image out = flow::synthesize(read_png(o.input), dir, model, codec, net, sampler,
                                 cfg.pano_v_range);
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    write_png(o.out, out);
    std::cout << json{{"out", o.out}, {"width", out.width}, {"height", out.height}}.dump()
              << "\n";
}

// ---------------------------------------------------------- eval-retrieval

struct EvalRetrOpts {
    Common common;
    std::string queries, refs, data, out;
    std::string split = "val";
    std::string ks = "1,5,10";
};

void run_eval_retrieval(EvalRetrOpts& o) {
    geomap::EmbeddingBank q = geomap::load_bank(o.queries);
    geomap::EmbeddingBank r = geomap::load_bank(o.refs);
    auto manifest = synth::load_manifest(o.data);
    auto entries = o.split == "all" ? manifest.entries : manifest.split_entries(o.split);

    std::vector<std::vector<int>> positives;
    for (const auto& id : q.ids) {
        auto e = std::find_if(entries.begin(), entries.end(),
                              [&](const synth::ManifestEntry& m) { return m.id == id; });
        if (e == entries.end())
            throw ConfigError("query id '" + id + "' not found in split '" + o.split + "'");
        std::vector<int> ps;
        for (const auto& pid : e->positives) {
            auto it = std::find(r.ids.begin(), r.ids.end(), pid);
            if (it != r.ids.end()) ps.push_back(static_cast<int>(it - r.ids.begin()));
        }
        if (ps.empty()) throw ConfigError("no positives in the reference bank for '" + id + "'");
        positives.push_back(std::move(ps));
    }
    std::vector<int> ks = parse_int_list(o.ks);
    auto rep = eval::retrieval_report(q.vectors, r.vectors, positives, ks);
    write_text(o.out, rep.json());
    std::cout << rep.json() << "\n";
}

// ---------------------------------------------------------- eval-synthesis

struct EvalSynthOpts {
    Common common;
    std::string data, ckpt, out, dump_dir;
    std::string split = "val";
    std::string direction = "g2s";
    int steps = 10;
};

void run_eval_synthesis(EvalSynthOpts& o) {
    trainer::RunConfig cfg = o.common.require_config();
    geomap::GeoMapModel model(cfg.geomap);
    flow::VelocityNet net(cfg.velocity);
    if (!o.ckpt.empty()) trainer::load_weights(o.ckpt, cfg, model, net);
    flow::SpaceToDepthCodec codec(cfg.codec_factor, cfg.codec_seed);
    flow::Direction dir = flow::parse_direction(o.direction);
    flow::SamplerConfig sampler{o.steps, dir};
    sampler.validate();

    auto manifest = synth::load_manifest(o.data);
    auto entries = o.split == "all" ? manifest.entries : manifest.split_entries(o.split);
    if (entries.empty()) throw ConfigError("no entries in split '" + o.split + "'");

    double mse_acc = 0, ssim_acc = 0;
    int paired_better = 0;
    std::vector<Image> targets;
    std::vector<Image> outputs;
    for (const auto& e : entries) {
        Image ground = read_png((manifest.root / e.ground).string());
        Image satellite = read_png((manifest.root / e.satellite).string());
        const Image& input = dir == flow::Direction::g2s ? ground : satellite;
        const Image& target = dir == flow::Direction::g2s ? satellite : ground;
        Image out = flow::synthesize(input, dir, model, codec, net, sampler, cfg.pano_v_range);
        targets.push_back(resize_bilinear(target, out.width, out.height));
        outputs.push_back(std::move(out));
    }
    for (size_t i = 0; i < outputs.size(); ++i) {
        double true_mse = eval::mse(outputs[i], targets[i]);
        // shuffled baseline: compare against the next entry's target
        double shuf_mse = eval::mse(outputs[i], targets[(i + 1) % targets.size()]);
        mse_acc += true_mse;
        ssim_acc += eval::ssim(outputs[i], targets[i]);
        if (targets.size() > 1 && true_mse < shuf_mse) ++paired_better;
        if (!o.dump_dir.empty()) {
            fs::create_directories(o.dump_dir);
            write_png((fs::path(o.dump_dir) / (entries[i].id + "_synth.png")).string(),
                      outputs[i]);
        }
    }
    double n = static_cast<double>(outputs.size());
    double mean_mse = mse_acc / n;
    json j{{"kind", "synthesis"},
           {"direction", o.direction},
           {"steps", o.steps},
           {"n", outputs.size()},
           {"mse", mean_mse},
           {"psnr", mean_mse == 0.0 ? json("inf")
                                    : json(10.0 * std::log10(255.0 * 255.0 / mean_mse))},
           {"ssim", ssim_acc / n},
           {"paired_better_fraction", targets.size() > 1 ? paired_better / n : 1.0}};
    write_text(o.out, j.dump());
    std::cout << j.dump() << "\n";
}

// --------------------------------------------------------------- degradation

struct DegradeOpts {
    Common common;
    std::string input, out;
    std::string sigmas = "0,2,4,8,16";
    std::string shifts = "0,4,16";
};

void run_degradation(DegradeOpts& o) {
    Image img = read_png(o.input);
    auto curves = eval::degradation_sweep(img, parse_double_list(o.sigmas),
                                          parse_int_list(o.shifts), o.common.pick_seed(1234));
    write_text(o.out, curves.json());
    std::cout << curves.json() << "\n";
}

// -------------------------------------------------------------- ablate-steps

struct AblateOpts {
    Common common;
    std::string data, ckpt, out;
    std::string split = "val";
    std::string direction = "g2s";
    std::string steps = "2,5,10";
};

void run_ablate(AblateOpts& o) {
    trainer::RunConfig cfg = o.common.require_config();
    geomap::GeoMapModel model(cfg.geomap);
    flow::VelocityNet net(cfg.velocity);
    if (!o.ckpt.empty()) trainer::load_weights(o.ckpt, cfg, model, net);
    flow::SpaceToDepthCodec codec(cfg.codec_factor, cfg.codec_seed);
    flow::Direction dir = flow::parse_direction(o.direction);

    auto manifest = synth::load_manifest(o.data);
    auto entries = o.split == "all" ? manifest.entries : manifest.split_entries(o.split);
    if (entries.empty()) throw ConfigError("no entries in split '" + o.split + "'");
    std::vector<std::pair<Image, Image>> pairs;
    for (const auto& e : entries) {
        Image ground = read_png((manifest.root / e.ground).string());
        Image satellite = read_png((manifest.root / e.satellite).string());
        if (dir == flow::Direction::g2s) pairs.emplace_back(ground, satellite);
        else pairs.emplace_back(satellite, ground);
    }
    auto rows = eval::ode_step_ablation(pairs, dir, model, codec, net, parse_int_list(o.steps),
                                        cfg.pano_v_range);
    write_text(o.out, eval::ablation_json(rows));
    std::cout << eval::ablation_json(rows) << "\n";
}

// -------------------------------------------------------------------- plot

struct PlotOpts {
    Common common;
    std::string report, out;
    std::string curve;  // empty: per-kind default
};

void run_plot(PlotOpts& o) {
    std::ifstream in(o.report, std::ios::binary);
    if (!in) throw IoError("cannot open report: " + o.report);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    std::string kind = j.value("kind", "");
    std::vector<plot::Series> series;
    std::string title, xlab, ylab;
    if (kind == "retrieval") {
        plot::Series s{"recall", {}, {}};
        for (const auto& [k, v] : j.at("r_at").items()) {
            s.x.push_back(std::stod(k));
            s.y.push_back(json_metric(v));
        }
        series.push_back(s);
        title = "recall vs K";
        xlab = "K";
        ylab = "recall";
    } else if (kind == "degradation") {
        std::string curve = o.curve.empty() ? "psnr" : o.curve;
        if (curve == "psnr") {
            plot::Series f{"float", {}, {}}, c{"clipped", {}, {}};
            for (size_t i = 0; i < j.at("sigmas").size(); ++i) {
                double sg = j.at("sigmas")[i].get<double>();
                f.x.push_back(sg);
                f.y.push_back(json_metric(j.at("psnr_float")[i]));
                c.x.push_back(sg);
                c.y.push_back(json_metric(j.at("psnr_clipped")[i]));
            }
            series = {f, c};
            title = "PSNR vs sigma";
            xlab = "sigma";
            ylab = "PSNR (dB)";
        } else if (curve == "ssim") {
            plot::Series s{"ssim", {}, {}};
            for (size_t i = 0; i < j.at("sigmas").size(); ++i) {
                s.x.push_back(j.at("sigmas")[i].get<double>());
                s.y.push_back(json_metric(j.at("ssim_clipped")[i]));
            }
            series = {s};
            title = "SSIM vs sigma";
            xlab = "sigma";
            ylab = "SSIM";
        } else if (curve == "shift") {
            plot::Series s{"ssim", {}, {}};
            for (size_t i = 0; i < j.at("shifts").size(); ++i) {
                s.x.push_back(j.at("shifts")[i].get<double>());
                s.y.push_back(json_metric(j.at("shift_ssim")[i]));
            }
            series = {s};
            title = "SSIM vs vertical shift";
            xlab = "shift (px)";
            ylab = "SSIM";
        } else {
            throw UsageError("--curve must be psnr, ssim or shift for degradation reports");
        }
    } else if (kind == "ode_steps") {
        std::string curve = o.curve.empty() ? "mse" : o.curve;
        if (curve != "mse" && curve != "psnr" && curve != "ssim" && curve != "wall_ms")
            throw UsageError("--curve must be mse, psnr, ssim or wall_ms for step reports");
        plot::Series s{curve, {}, {}};
        for (const auto& row : j.at("rows")) {
            s.x.push_back(row.at("steps").get<double>());
            s.y.push_back(json_metric(row.at(curve)));
        }
        series = {s};
        title = curve + " vs ODE steps";
        xlab = "steps";
        ylab = curve;
    } else {
        throw ParseError("report kind '" + kind + "' is not plottable");
    }
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    plot::write_line_chart(o.out, title, xlab, ylab, series);
    std::cout << json{{"out", o.out}, {"kind", kind}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    // early unknown-subcommand check so the error can carry a suggestion
    if (argc >= 2 && argv[1][0] != '-') {
        std::string given = argv[1];
        if (std::find(kSubcommands.begin(), kSubcommands.end(), given) == kSubcommands.end()) {
            std::string best = kSubcommands.front();
            int best_d = edit_distance(given, best);
            for (const auto& s : kSubcommands) {
                int d = edit_distance(given, s);
                if (d < best_d) {
                    best_d = d;
                    best = s;
                }
            }
            std::cerr << "unknown subcommand '" << given << "'; did you mean '" << best << "'?\n";
            return 1;
        }
    }

    CLI::App app{"cross-view geo-localization and synthesis pipeline"};
    app.require_subcommand(0, 1);

    GenDataOpts gen;
    auto* sc_gen = app.add_subcommand("gen-data", "render a synthetic paired dataset");
    attach_common(sc_gen, gen.common);
    sc_gen->add_option("--out", gen.out, "output directory")->required();
    sc_gen->add_option("--train", gen.n_train, "train pairs");
    sc_gen->add_option("--val", gen.n_val, "val pairs");
    sc_gen->add_option("--test", gen.n_test, "test pairs");
    sc_gen->add_option("--protocol", gen.protocol, "one_to_one | many_to_one");
    sc_gen->add_option("--clones", gen.clones, "panoramas per satellite (many_to_one)");
    sc_gen->add_option("--sat-size", gen.sat_size, "satellite image side");
    sc_gen->add_option("--pano-width", gen.pano_width, "panorama width");
    sc_gen->add_option("--pano-height", gen.pano_height, "panorama height");
    sc_gen->add_option("--v-range", gen.v_range, "panorama vertical span (radians)");

    E2pOpts e2po;
    auto* sc_e2p = app.add_subcommand("e2p", "perspective crops from a panorama");
    attach_common(sc_e2p, e2po.common);
    sc_e2p->add_option("--input", e2po.input, "panorama PNG")->required();
    sc_e2p->add_option("--out-dir", e2po.out_dir, "crop output directory")->required();
    sc_e2p->add_option("--res", e2po.res, "crop resolution");
    sc_e2p->add_option("--v-range", e2po.v_range, "panorama vertical span (radians)");
    sc_e2p->add_option("--yaw", e2po.yaw, "custom crop yaw (radians)");
    sc_e2p->add_option("--pitch", e2po.pitch, "custom crop pitch (radians)");
    sc_e2p->add_option("--fov", e2po.fov, "custom crop field of view (radians)");

    EmbedOpts emb;
    auto* sc_emb = app.add_subcommand("embed", "write embedding banks for a dataset split");
    attach_common(sc_emb, emb.common);
    sc_emb->add_option("--data", emb.data, "manifest.jsonl")->required();
    sc_emb->add_option("--ckpt", emb.ckpt, "checkpoint to load");
    sc_emb->add_option("--split", emb.split, "train | val | test | all");
    sc_emb->add_option("--out-dir", emb.out_dir, "bank output directory")->required();

    TrainOpts tro;
    auto* sc_train = app.add_subcommand("train", "run the staged training schedule");
    attach_common(sc_train, tro.common);
    sc_train->add_option("--data", tro.data, "manifest.jsonl")->required();
    sc_train->add_option("--out-dir", tro.out_dir, "checkpoint and log directory")->required();
    sc_train->add_option("--stage", tro.stage, "1 | 2 | 3 | all");
    sc_train->add_option("--resume", tro.resume, "resume from a checkpoint");
    sc_train->add_option("--max-epochs", tro.max_epochs, "stop after this many epochs");

    SynthOpts syn;
    auto* sc_syn = app.add_subcommand("synthesize", "cross-view image synthesis");
    attach_common(sc_syn, syn.common);
    sc_syn->add_option("--input", syn.input, "source view PNG")->required();
    sc_syn->add_option("--ckpt", syn.ckpt, "checkpoint to load");
    sc_syn->add_option("--direction", syn.direction, "g2s | s2g");
    sc_syn->add_option("--steps", syn.steps, "sampler steps");
    sc_syn->add_option("--out", syn.out, "output PNG")->required();

    EvalRetrOpts evr;
    auto* sc_evr = app.add_subcommand("eval-retrieval", "recall metrics from embedding banks");
    attach_common(sc_evr, evr.common);
    sc_evr->add_option("--queries", evr.queries, "query bank base path")->required();
    sc_evr->add_option("--refs", evr.refs, "reference bank base path")->required();
    sc_evr->add_option("--data", evr.data, "manifest.jsonl for positive sets")->required();
    sc_evr->add_option("--split", evr.split, "split the queries came from");
    sc_evr->add_option("--ks", evr.ks, "comma-separated K values");
    sc_evr->add_option("--out", evr.out, "report JSON path")->required();

    EvalSynthOpts evs;
    auto* sc_evs = app.add_subcommand("eval-synthesis", "image metrics for synthesized views");
    attach_common(sc_evs, evs.common);
    sc_evs->add_option("--data", evs.data, "manifest.jsonl")->required();
    sc_evs->add_option("--ckpt", evs.ckpt, "checkpoint to load");
    sc_evs->add_option("--split", evs.split, "train | val | test | all");
    sc_evs->add_option("--direction", evs.direction, "g2s | s2g");
    sc_evs->add_option("--steps", evs.steps, "sampler steps");
    sc_evs->add_option("--dump-dir", evs.dump_dir, "write synthesized PNGs here");
    sc_evs->add_option("--out", evs.out, "report JSON path")->required();

    DegradeOpts deg;
    auto* sc_deg = app.add_subcommand("degradation", "noise and shift metric sweep");
    attach_common(sc_deg, deg.common);
    sc_deg->add_option("--input", deg.input, "image PNG")->required();
    sc_deg->add_option("--sigmas", deg.sigmas, "comma-separated noise scales");
    sc_deg->add_option("--shifts", deg.shifts, "comma-separated row shifts");
    sc_deg->add_option("--out", deg.out, "report JSON path")->required();

    AblateOpts abl;
    auto* sc_abl = app.add_subcommand("ablate-steps", "synthesis metrics per ODE step count");
    attach_common(sc_abl, abl.common);
    sc_abl->add_option("--data", abl.data, "manifest.jsonl")->required();
    sc_abl->add_option("--ckpt", abl.ckpt, "checkpoint to load");
    sc_abl->add_option("--split", abl.split, "train | val | test | all");
    sc_abl->add_option("--direction", abl.direction, "g2s | s2g");
    sc_abl->add_option("--steps", abl.steps, "comma-separated step counts");
    sc_abl->add_option("--out", abl.out, "report JSON path")->required();

    PlotOpts plo;
    auto* sc_plot = app.add_subcommand("plot", "SVG curves from a report file");
    attach_common(sc_plot, plo.common);
    sc_plot->add_option("--report", plo.report, "report JSON")->required();
    sc_plot->add_option("--out", plo.out, "output SVG")->required();
    sc_plot->add_option("--curve", plo.curve, "which curve family to draw");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (app.get_subcommands().empty()) {
        std::cout << app.help();
        return 0;
    }

    try {
        if (*sc_gen) {
            gen.common.resolve();
            run_gen_data(gen);
        } else if (*sc_e2p) {
            e2po.common.resolve();
            run_e2p(e2po);
        } else if (*sc_emb) {
            emb.common.resolve();
            run_embed(emb);
        } else if (*sc_train) {
            tro.common.resolve();
            run_train(tro);
        } else if (*sc_syn) {
            syn.common.resolve();
            run_synthesize(syn);
        } else if (*sc_evr) {
            evr.common.resolve();
            run_eval_retrieval(evr);
        } else if (*sc_evs) {
            evs.common.resolve();
            run_eval_synthesis(evs);
        } else if (*sc_deg) {
            deg.common.resolve();
            run_degradation(deg);
        } else if (*sc_abl) {
            abl.common.resolve();
            run_ablate(abl);
        } else if (*sc_plot) {
            plo.common.resolve();
            run_plot(plo);
        }
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
