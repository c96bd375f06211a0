// Release gate: every project acceptance criterion, one [PASS]/[FAIL] line
// per criterion, nonzero exit when anything fails. Training criteria run at
// desk scale on synthetic data with fixed seeds, so reruns are bit-identical.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geo2/common.hpp"
#include "geo2/e2p.hpp"
#include "geo2/evalsuite.hpp"
#include "geo2/geoflow.hpp"
#include "geo2/geomap.hpp"
#include "geo2/image.hpp"
#include "geo2/objectives.hpp"
#include "geo2/synthdata.hpp"
#include "geo2/trainer.hpp"
#include "../gradcheck.hpp"

using namespace geo2;
namespace fs = std::filesystem;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++g_failures;
    std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
}

fs::path scratch_root() {
    fs::path p = fs::path(cache_dir()) / "acceptance";
    fs::create_directories(p);
    return p;
}

uint64_t file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    return fnv1a(bytes.data(), bytes.size());
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: perspective geometry exactness

// independent projection oracle: spherical point -> crop pixel with its own
// rotation and pinhole math
bool oracle_project(double lambda, double phi, const e2p::CropSpec& s, double* px, double* py) {
    double dx = std::cos(phi) * std::sin(lambda);
    double dy = std::sin(phi);
    double dz = std::cos(phi) * std::cos(lambda);
    double cp = std::cos(s.pitch), sp = std::sin(s.pitch);
    double x1 = dx, y1 = cp * dy + sp * dz, z1 = -sp * dy + cp * dz;
    double ct = std::cos(s.yaw), st = std::sin(s.yaw);
    double x2 = ct * x1 - st * z1, y2 = y1, z2 = st * x1 + ct * z1;
    if (z2 <= 0) return false;
    double nx = x2 / z2 / std::tan(s.fov_h / 2);
    double ny = y2 / z2 / std::tan(s.fov_v / 2);
    if (std::abs(nx) > 1 || std::abs(ny) > 1) return false;
    *px = (nx + 1) * s.out_width / 2 - 0.5;
    *py = (1 - ny) * s.out_height / 2 - 0.5;
    return true;
}

void criterion_1() {
    double t0 = now_s();
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> un(0, 1);

    // pixel <-> spherical round trip on random panorama geometries
    double rt_err = 0;
    for (int k = 0; k < 100; ++k) {
        int w = 64 + static_cast<int>(rng() % 961);
        int h = 32 + static_cast<int>(rng() % 225);
        double vr = 0.5 + un(rng) * (kPi - 0.5);
        double u = un(rng) * w;
        double v = un(rng) * h;
        auto sph = e2p::pixel_to_spherical(u, v, w, h, vr);
        auto [u2, v2] = e2p::spherical_to_pixel(sph, w, h, vr);
        double du = std::abs(u2 - u);
        du = std::min(du, w - du);  // longitude wraps
        rt_err = std::max({rt_err, du, std::abs(v2 - v)});
    }

    // crop rotations are orthogonal with unit determinant
    double orth_err = 0;
    for (int k = 0; k < 100; ++k) {
        double yaw = (un(rng) * 2 - 1) * kPi;
        double pitch = (un(rng) - 0.5) * kPi;
        Eigen::Matrix3d R = e2p::crop_rotation(yaw, pitch);
        orth_err = std::max(orth_err, (R * R.transpose() - Eigen::Matrix3d::Identity())
                                          .cwiseAbs()
                                          .maxCoeff());
        orth_err = std::max(orth_err, std::abs(R.determinant() - 1.0));
    }

    // landmark localization: render a scene panorama, extract the crop aimed
    // at one landmark, and require the color-matched blob centroid to land
    // within one pixel of the independent oracle projection
    double loc_err = 0;
    int done = 0, skipped = 0;
    for (uint64_t seed = 0; done < 100 && seed < 400; ++seed) {
        synth::SceneSpec scene = synth::generate_scene(seed);
        const synth::Landmark* pick = nullptr;
        for (const auto& lm : scene.landmarks)
            if (lm.distance > 12.0 && synth::landmark_angular_radius(lm) < 0.10) pick = &lm;
        if (!pick) {
            ++skipped;
            continue;
        }
        e2p::Panorama pano = synth::render_panorama(scene, 512, 128, kPi / 2);
        double phi = synth::landmark_center_latitude(pick->distance);
        e2p::CropSpec spec{pick->azimuth, 0.0, kPi / 2, kPi / 2, 129, 129};
        auto crop = e2p::extract_crop(pano, spec);

        double ex, ey;
        if (!oracle_project(pick->azimuth, phi, spec, &ex, &ey)) continue;
        double lx, ly;
        if (!e2p::project_to_crop({pick->azimuth, phi}, spec, &lx, &ly)) continue;
        loc_err = std::max({loc_err, std::abs(lx - ex), std::abs(ly - ey)});

        double sx = 0, sy = 0;
        int n = 0;
        for (int y = 0; y < 129; ++y)
            for (int x = 0; x < 129; ++x) {
                int d = std::abs(crop.image.at(x, y, 0) - pick->color[0]);
                d = std::max(d, std::abs(crop.image.at(x, y, 1) - pick->color[1]));
                d = std::max(d, std::abs(crop.image.at(x, y, 2) - pick->color[2]));
                if (d <= 20) {
                    sx += x;
                    sy += y;
                    ++n;
                }
            }
        if (n < 12) continue;
        loc_err = std::max({loc_err, std::abs(sx / n - ex), std::abs(sy / n - ey)});
        ++done;
    }
    double wall = now_s() - t0;

    bool pass = rt_err < 1e-9 && orth_err < 1e-10 && done == 100 && loc_err <= 1.0 &&
                wall < 30.0;
    report(1, "perspective geometry exactness", pass,
           fmt("round-trip %.2e, orthogonality %.2e, localization %.2f px over %d panoramas "
               "(%d without a compact landmark), %.1f s",
               rt_err, orth_err, loc_err, done, skipped, wall));
}

// ---------------------------------------------------------------------------
// criterion 2: loss oracles

using objectives::Mat;

Mat random_mat(int r, int c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Mat m(r, c);
    for (int i = 0; i < m.size(); ++i) m(i) = d(rng);
    return m;
}

Mat random_unit_rows(int r, int c, uint64_t seed) {
    Mat m = random_mat(r, c, seed);
    for (int i = 0; i < r; ++i) m.row(i).normalize();
    return m;
}

// naive softmax cross entropy without max subtraction
double infonce_oracle(const Eigen::VectorXd& f, const Mat& bank, int pos, double tau) {
    double z = 0.0;
    for (int i = 0; i < bank.rows(); ++i) z += std::exp(bank.row(i).dot(f) / tau);
    return -std::log(std::exp(bank.row(pos).dot(f) / tau) / z);
}

double kl_oracle(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double temp) {
    int n = static_cast<int>(a.size());
    Eigen::VectorXd p(n), q(n);
    double zp = 0, zq = 0;
    for (int i = 0; i < n; ++i) {
        p(i) = std::exp(a(i) / temp);
        q(i) = std::exp(b(i) / temp);
        zp += p(i);
        zq += q(i);
    }
    p /= zp;
    q /= zq;
    double acc = 0;
    for (int i = 0; i < n; ++i) acc += p(i) * std::log(p(i) / q(i)) + q(i) * std::log(q(i) / p(i));
    return acc;
}

void criterion_2() {
    double t0 = now_s();
    std::mt19937_64 rng(99);
    double worst = 0;
    for (int k = 0; k < 100; ++k) {
        int n = 2 + static_cast<int>(rng() % 11);
        int d = 4 + static_cast<int>(rng() % 29);
        Mat bank = random_unit_rows(n, d, rng());
        Eigen::VectorXd f = random_unit_rows(1, d, rng()).row(0).transpose();
        int pos = static_cast<int>(rng() % n);
        double got = objectives::infonce(f, bank, pos, 0.07);
        double want = infonce_oracle(f, bank, pos, 0.07);
        worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));

        Eigen::VectorXd a = random_mat(d, 1, rng()).col(0);
        Eigen::VectorXd b = random_mat(d, 1, rng()).col(0);
        double kg = objectives::kl_consistency(a, b, 1.0);
        double kw = kl_oracle(a, b, 1.0);
        worst = std::max(worst, std::abs(kg - kw) / std::max(1.0, std::abs(kw)));

        Mat pred = random_mat(3, d, rng());
        Mat xg = random_mat(3, d, rng());
        Mat xs = random_mat(3, d, rng());
        double fg = objectives::flow_loss_value(pred, xg, xs, false);
        double fw = (pred - (xs - xg)).squaredNorm() / (3.0 * d);
        worst = std::max(worst, std::abs(fg - fw) / std::max(1.0, std::abs(fw)));
    }

    // identical rows leave a uniform posterior, so the loss is exactly ln n
    bool uniform_exact = true;
    for (int n = 2; n <= 9; ++n) {
        Mat bank(n, 4);
        for (int i = 0; i < n; ++i) bank.row(i) << 0.5, 0.5, 0.5, 0.5;
        Eigen::VectorXd f(4);
        f << 1, 0, 0, 0;
        for (int pos = 0; pos < n; ++pos)
            uniform_exact =
                uniform_exact && objectives::infonce(f, bank, pos, 0.07) == std::log(double(n));
    }

    double worst_grad = 0;
    {
        Mat fg = random_unit_rows(5, 8, 7);
        Mat fs = random_unit_rows(5, 8, 8);
        for (bool sym : {false, true}) {
            ad::Parameter pg("fg", fg), ps("fs", fs);
            auto res = gradcheck::check({&pg, &ps}, [&](ad::Tape& tt) {
                return objectives::infonce_batch(tt, tt.param(pg), tt.param(ps), 0.07, sym);
            });
            worst_grad = std::max(worst_grad, res.max_rel_err);
        }
        Mat ka = random_mat(3, 8, 11), kb = random_mat(3, 8, 12);
        ad::Parameter pa("a", ka), pb("b", kb);
        auto res = gradcheck::check({&pa, &pb}, [&](ad::Tape& tt) {
            return objectives::kl_consistency(tt, tt.param(pa), tt.param(pb), 1.0);
        });
        worst_grad = std::max(worst_grad, res.max_rel_err);

        Mat pred = random_mat(4, 6, 13), xg = random_mat(4, 6, 14), xs = random_mat(4, 6, 15);
        for (bool norm : {false, true}) {
            ad::Parameter pp("pred", pred);
            auto r2 = gradcheck::check({&pp}, [&](ad::Tape& tt) {
                return objectives::flow_loss(tt, tt.param(pp), xg, xs, norm);
            });
            worst_grad = std::max(worst_grad, r2.max_rel_err);
        }
    }

    bool pass = worst < 1e-6 && uniform_exact && worst_grad < 1e-4;
    report(2, "loss values match brute-force oracles", pass,
           fmt("worst oracle gap %.2e over 300 instances, uniform case %s ln n, "
               "worst gradcheck %.2e, %.1f s",
               worst, uniform_exact ? "equals" : "misses", worst_grad, now_s() - t0));
}

// ---------------------------------------------------------------------------
// shared training configs

trainer::RunConfig retrieval_config() {
    trainer::RunConfig cfg;
    cfg.t1 = 50;
    cfg.t2 = 50;
    cfg.t3 = 50;
    cfg.eta1 = 3e-3;
    cfg.batch_size = 64;
    cfg.adaptive = true;
    cfg.val_every = 1000;
    cfg.seed = 0;
    cfg.flow_image = 32;
    cfg.codec_factor = 8;
    cfg.pano_v_range = kPi / 2;
    cfg.loss.tau = 0.07;
    cfg.geomap.dim = 64;
    cfg.geomap.heads = 4;
    cfg.geomap.use_geometry = true;
    cfg.geomap.views = 4;
    cfg.geomap.crop_res = 64;
    cfg.geomap.geometry.channels = 32;
    cfg.geomap.geometry.out_h = 32;
    cfg.geomap.geometry.out_w = 32;
    cfg.geomap.geometry.input_res = 64;
    cfg.geomap.semantic.dim = 64;
    cfg.geomap.semantic.sat_grid_h = 8;
    cfg.geomap.semantic.sat_grid_w = 8;
    cfg.geomap.semantic.ground_grid_h = 4;
    cfg.geomap.semantic.ground_grid_w = 16;
    cfg.geomap.semantic.patch = 8;
    cfg.velocity.channels = 192;
    cfg.velocity.tokens = 16;
    cfg.velocity.hidden = 32;
    cfg.velocity.depth = 1;
    cfg.velocity.heads = 2;
    cfg.velocity.head_hidden = 32;
    cfg.velocity.cond_dim = 64;
    cfg.velocity.mlp_ratio = 2;
    return cfg;
}

synth::DatasetManifest build_data(const fs::path& dir, int n_train, int n_val,
                                  synth::Protocol proto, int clones, uint64_t seed) {
    synth::BuildOptions opt;
    opt.n_train = n_train;
    opt.n_val = n_val;
    opt.seed = seed;
    opt.protocol = proto;
    opt.clones = clones;
    opt.sat_size = 64;
    opt.pano_width = 256;
    opt.pano_height = 64;
    opt.v_range = kPi / 2;
    fs::remove_all(dir);
    return synth::build_dataset(opt, dir);
}

// corpus-fit recall: every ground in the manifest queried against the bank
// of every satellite, eval-mode embeddings
double corpus_r1(trainer::Trainer& tr, const synth::DatasetManifest& manifest) {
    auto& model = tr.geomap();
    std::vector<std::string> sat_ids;
    std::vector<Eigen::VectorXd> sat_vecs;
    std::vector<Eigen::VectorXd> ground_vecs;
    std::vector<int> ground_pos;
    for (const auto& e : manifest.entries) {
        Image g = read_png(manifest.root / e.ground);
        ground_vecs.push_back(model.embed_ground({g, tr.cfg.pano_v_range}));
        const std::string& sid = e.positives.front();
        int idx = -1;
        for (size_t i = 0; i < sat_ids.size(); ++i)
            if (sat_ids[i] == sid) idx = static_cast<int>(i);
        if (idx < 0) {
            idx = static_cast<int>(sat_ids.size());
            sat_ids.push_back(sid);
            sat_vecs.push_back(model.embed_satellite(read_png(manifest.root / e.satellite)));
        }
        ground_pos.push_back(idx);
    }
    Mat queries(ground_vecs.size(), ground_vecs[0].size());
    for (size_t i = 0; i < ground_vecs.size(); ++i) queries.row(i) = ground_vecs[i];
    Mat refs(sat_vecs.size(), sat_vecs[0].size());
    for (size_t i = 0; i < sat_vecs.size(); ++i) refs.row(i) = sat_vecs[i];
    std::vector<std::vector<int>> positives;
    for (int p : ground_pos) positives.push_back({p});
    return eval::recall_at_k(queries, refs, positives, 1);
}

void criterion_3() {
    double t0 = now_s();
    auto manifest = build_data(scratch_root() / "retrieval512", 512, 0,
                               synth::Protocol::one_to_one, 2, 0);
    auto cfg = retrieval_config();
    trainer::Trainer tr(cfg, manifest);
    tr.run_schedule();
    double r1 = corpus_r1(tr, manifest);
    double wall = now_s() - t0;
    bool pass = r1 >= 0.90 && tr.epoch() <= 50 && cfg.adaptive && wall <= 900.0;
    report(3, "stage-1 retrieval at desk scale", pass,
           fmt("R@1 %.3f over 512 pairs (chance 0.002) after %d epochs, %.0f s", r1,
               tr.epoch(), wall));
}

// ---------------------------------------------------------------------------
// criterion 4: geometry branch and joint finetune directionality

trainer::RunConfig ablation_config() {
    trainer::RunConfig cfg;
    cfg.t1 = 25;
    cfg.t2 = 31;
    cfg.t3 = 37;
    cfg.eta1 = 3e-3;
    cfg.eta2 = 2e-3;
    cfg.eta3 = 1e-5;
    cfg.batch_size = 64;
    cfg.adaptive = true;
    cfg.val_every = 1000;
    cfg.seed = 0;
    cfg.flow_image = 32;
    cfg.codec_factor = 8;
    cfg.pano_v_range = kPi / 2;
    cfg.loss.tau = 0.07;
    cfg.loss.alpha = 0.1;
    cfg.geomap.dim = 64;
    cfg.geomap.heads = 4;
    cfg.geomap.use_geometry = true;
    cfg.geomap.views = 4;
    cfg.geomap.crop_res = 64;
    cfg.geomap.proj_stride = 1;
    cfg.geomap.geometry.channels = 32;
    cfg.geomap.geometry.out_h = 16;
    cfg.geomap.geometry.out_w = 16;
    cfg.geomap.geometry.input_res = 64;
    cfg.geomap.semantic.dim = 64;
    cfg.geomap.semantic.sat_grid_h = 4;
    cfg.geomap.semantic.sat_grid_w = 4;
    cfg.geomap.semantic.ground_grid_h = 2;
    cfg.geomap.semantic.ground_grid_w = 8;
    cfg.geomap.semantic.patch = 16;
    cfg.velocity.channels = 192;
    cfg.velocity.tokens = 16;
    cfg.velocity.hidden = 32;
    cfg.velocity.depth = 1;
    cfg.velocity.heads = 2;
    cfg.velocity.head_hidden = 32;
    cfg.velocity.cond_dim = 64;
    cfg.velocity.mlp_ratio = 2;
    return cfg;
}

void criterion_4() {
    double t0 = now_s();
    // four renders per scene; the last clone of every scene becomes the
    // validation query set, so validation sees unseen renders of known scenes
    auto manifest = build_data(scratch_root() / "ablation256", 256, 0,
                               synth::Protocol::many_to_one, 4, 0);
    for (auto& e : manifest.entries)
        e.split = e.id.size() >= 2 && e.id.substr(e.id.size() - 2) == "_3" ? "val" : "train";

    auto cfg = ablation_config();
    trainer::Trainer geo(cfg, manifest);
    geo.train_stage1();
    double r1_geo = geo.validation_r1();
    geo.train_stage2();
    double r1_before = geo.validation_r1();
    double kl_before = geo.validation_kl();
    geo.joint_finetune();
    double r1_after = geo.validation_r1();
    double kl_after = geo.validation_kl();

    auto sem_cfg = cfg;
    sem_cfg.geomap.use_geometry = false;
    sem_cfg.t2 = sem_cfg.t1;
    sem_cfg.t3 = sem_cfg.t1;
    trainer::Trainer sem(sem_cfg, manifest);
    sem.train_stage1();
    double r1_sem = sem.validation_r1();

    bool geometry_gain = r1_geo - r1_sem >= 0.01;
    bool joint_keeps_r1 = r1_after >= r1_before - 0.01;
    bool joint_tightens_kl = kl_after < kl_before;
    bool pass = geometry_gain && joint_keeps_r1 && joint_tightens_kl;
    report(4, "geometry branch and joint finetune directionality", pass,
           fmt("val R@1 geometry %.4f vs semantic-only %.4f, joint %.4f -> %.4f, "
               "pairwise KL %.6f -> %.6f, %.0f s",
               r1_geo, r1_sem, r1_before, r1_after, kl_before, kl_after, now_s() - t0));
}

// ---------------------------------------------------------------------------
// criteria 5, 6, 7: one stage-2 checkpoint, both synthesis directions, and
// the sampler step trend

trainer::RunConfig synthesis_config() {
    trainer::RunConfig cfg;
    cfg.t1 = 25;
    cfg.t2 = 45;
    cfg.t3 = 45;
    cfg.eta1 = 3e-3;
    cfg.eta2 = 1e-3;
    cfg.batch_size = 64;
    cfg.adaptive = true;
    cfg.val_every = 1000;
    cfg.seed = 0;
    cfg.flow_image = 32;
    cfg.codec_factor = 8;
    cfg.pano_v_range = kPi / 2;
    cfg.loss.tau = 0.07;
    cfg.geomap.dim = 64;
    cfg.geomap.heads = 4;
    cfg.geomap.use_geometry = true;
    cfg.geomap.views = 4;
    cfg.geomap.crop_res = 64;
    cfg.geomap.proj_stride = 2;
    cfg.geomap.geometry.channels = 32;
    cfg.geomap.geometry.out_h = 16;
    cfg.geomap.geometry.out_w = 16;
    cfg.geomap.geometry.input_res = 64;
    cfg.geomap.semantic.dim = 64;
    cfg.geomap.semantic.sat_grid_h = 4;
    cfg.geomap.semantic.sat_grid_w = 4;
    cfg.geomap.semantic.ground_grid_h = 2;
    cfg.geomap.semantic.ground_grid_w = 8;
    cfg.geomap.semantic.patch = 16;
    cfg.velocity.channels = 192;
    cfg.velocity.tokens = 16;
    cfg.velocity.hidden = 24;
    cfg.velocity.depth = 1;
    cfg.velocity.heads = 4;
    cfg.velocity.head_hidden = 24;
    cfg.velocity.cond_dim = 64;
    cfg.velocity.mlp_ratio = 2;
    return cfg;
}

// fraction of held-out pairs whose synthesis lands closer to its true target
// than to the next pair's target (a fixed derangement of the val set)
double paired_better(trainer::Trainer& tr, flow::Direction dir, int steps) {
    int n = tr.val_size();
    flow::SamplerConfig scfg{steps, dir};
    int wins = 0;
    for (int i = 0; i < n; ++i) {
        const Image& input =
            dir == flow::Direction::g2s ? tr.val_ground(i) : tr.val_satellite(i);
        Image out = flow::synthesize(input, dir, tr.geomap(), tr.codec(), tr.velocity(), scfg,
                                     tr.cfg.pano_v_range);
        auto target = [&](int j) {
            const Image& t =
                dir == flow::Direction::g2s ? tr.val_satellite(j) : tr.val_ground(j);
            return resize_bilinear(t, out.width, out.height);
        };
        if (eval::mse(out, target(i)) < eval::mse(out, target((i + 1) % n))) ++wins;
    }
    return double(wins) / n;
}

void criteria_5_6_7() {
    double t0 = now_s();
    auto manifest = build_data(scratch_root() / "synthesis256", 256, 64,
                               synth::Protocol::one_to_one, 2, 1);
    auto cfg = synthesis_config();
    trainer::Trainer tr(cfg, manifest);
    tr.run_schedule();

    fs::path ckpt = scratch_root() / "synthesis256.ckpt";
    tr.save_checkpoint(ckpt);
    uint64_t hash_before = file_hash(ckpt);

    double pb_g2s = paired_better(tr, flow::Direction::g2s, 10);
    report(5, "ground-to-satellite synthesis beats shuffled baseline", pb_g2s >= 0.80,
           fmt("true satellite closer for %.3f of 64 held-out pairs (need 0.80), %.0f s",
               pb_g2s, now_s() - t0));

    double t6 = now_s();
    double pb_s2g = paired_better(tr, flow::Direction::s2g, 10);
    fs::path ckpt2 = scratch_root() / "synthesis256_after.ckpt";
    tr.save_checkpoint(ckpt2);
    uint64_t hash_after = file_hash(ckpt2);
    bool same_weights = hash_before == hash_after;
    report(6, "reverse direction without retraining", pb_s2g >= 0.70 && same_weights,
           fmt("true ground closer for %.3f of 64 held-out pairs (need 0.70), checkpoint "
               "hash %s, %.0f s",
               pb_s2g, same_weights ? "unchanged" : "CHANGED", now_s() - t6));

    double t7 = now_s();
    std::vector<std::pair<Image, Image>> pairs;
    for (int i = 0; i < tr.val_size(); ++i)
        pairs.emplace_back(tr.val_satellite(i), tr.val_ground(i));
    auto rows = eval::ode_step_ablation(pairs, flow::Direction::s2g, tr.geomap(), tr.codec(),
                                        tr.velocity(), {2, 5, 10}, cfg.pano_v_range);
    double m2 = rows[0].mse, m5 = rows[1].mse, m10 = rows[2].mse;
    bool monotone = m2 >= m5 && m5 >= m10 - 0.02 * m10;
    bool converging = std::abs(m5 - m10) <= std::abs(m2 - m10);
    report(7, "sampler step trend", monotone && converging,
           fmt("held-out MSE %.2f / %.2f / %.2f at 2 / 5 / 10 steps, %.0f s", m2, m5, m10,
               now_s() - t7));
}

// ---------------------------------------------------------------------------
// criterion 8: noise and shift degradation

void criterion_8() {
    double t0 = now_s();
    const double step_db = 20.0 * std::log10(2.0);
    double worst_db = 0;
    bool ssim_strict = true;
    for (int i = 0; i < 20; ++i) {
        Image sat = synth::render_satellite(synth::generate_scene(1000 + i), 64);
        auto curves = eval::degradation_sweep(sat, {4, 8, 16, 32}, {0, 4, 16}, 1234);
        for (size_t k = 1; k < curves.psnr_float.size(); ++k)
            worst_db = std::max(
                worst_db,
                std::abs(curves.psnr_float[k - 1] - curves.psnr_float[k] - step_db));
        for (size_t k = 1; k < curves.shift_ssim.size(); ++k)
            ssim_strict = ssim_strict && curves.shift_ssim[k] < curves.shift_ssim[k - 1];
    }
    bool pass = worst_db < 1e-6 && ssim_strict;
    report(8, "noise and shift degradation", pass,
           fmt("float PSNR per sigma doubling off by %.2e dB (tolerance 1e-6), shift SSIM "
               "%s over {0,4,16} px on 20 satellites, %.1f s",
               worst_db, ssim_strict ? "strictly decreasing" : "NOT strictly decreasing",
               now_s() - t0));
}

// ---------------------------------------------------------------------------
// criterion 9: determinism and resume

trainer::RunConfig tiny_config() {
    trainer::RunConfig cfg;
    cfg.t1 = 2;
    cfg.t2 = 3;
    cfg.t3 = 4;
    cfg.eta1 = 1e-3;
    cfg.eta2 = 2e-3;
    cfg.eta3 = 5e-4;
    cfg.batch_size = 4;
    cfg.adaptive = true;
    cfg.val_every = 1000;
    cfg.seed = 9;
    cfg.flow_image = 8;
    cfg.codec_factor = 4;
    cfg.pano_v_range = kPi / 2;
    cfg.geomap.dim = 8;
    cfg.geomap.heads = 2;
    cfg.geomap.views = 4;
    cfg.geomap.crop_res = 16;
    cfg.geomap.geometry.channels = 4;
    cfg.geomap.geometry.out_h = 4;
    cfg.geomap.geometry.out_w = 4;
    cfg.geomap.geometry.input_res = 16;
    cfg.geomap.semantic.dim = 8;
    cfg.geomap.semantic.sat_grid_h = 2;
    cfg.geomap.semantic.sat_grid_w = 2;
    cfg.geomap.semantic.ground_grid_h = 1;
    cfg.geomap.semantic.ground_grid_w = 4;
    cfg.geomap.semantic.patch = 4;
    cfg.velocity.channels = 48;
    cfg.velocity.tokens = 4;
    cfg.velocity.hidden = 8;
    cfg.velocity.depth = 1;
    cfg.velocity.heads = 2;
    cfg.velocity.head_hidden = 8;
    cfg.velocity.cond_dim = 8;
    cfg.velocity.mlp_ratio = 2;
    return cfg;
}

std::string log_text(const trainer::Trainer& tr) {
    std::string out;
    for (const auto& l : tr.logs()) out += l.json() + "\n";
    return out;
}

void criterion_9() {
    double t0 = now_s();
    synth::BuildOptions opt;
    opt.n_train = 8;
    opt.seed = 7;
    opt.sat_size = 32;
    opt.pano_width = 64;
    opt.pano_height = 32;
    opt.v_range = kPi / 2;
    fs::path dir = scratch_root() / "tiny8";
    fs::remove_all(dir);
    auto manifest = synth::build_dataset(opt, dir);
    auto cfg = tiny_config();

    trainer::Trainer a(cfg, manifest);
    a.run_schedule();
    fs::path ca = scratch_root() / "tiny_a.ckpt";
    a.save_checkpoint(ca);

    trainer::Trainer b(cfg, manifest);
    b.run_schedule();
    bool logs_equal = log_text(a) == log_text(b);

    trainer::Trainer c(cfg, manifest);
    c.run_schedule(2);
    fs::path mid = scratch_root() / "tiny_mid.ckpt";
    c.save_checkpoint(mid);
    trainer::Trainer d(cfg, manifest);
    d.load_checkpoint(mid);
    d.run_schedule();
    fs::path cd = scratch_root() / "tiny_d.ckpt";
    d.save_checkpoint(cd);
    bool resume_identical = file_hash(ca) == file_hash(cd);

    report(9, "determinism and resume", logs_equal && resume_identical,
           fmt("same-seed logs %s, resumed checkpoint %s, %.1f s",
               logs_equal ? "identical" : "DIFFER",
               resume_identical ? "byte-identical" : "DIFFERS", now_s() - t0));
}

}  // namespace

int main() {
    double t0 = now_s();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criteria_5_6_7();
    criterion_8();
    criterion_9();
    std::printf("%d/9 criteria passed, %.0f s total\n", 9 - g_failures, now_s() - t0);
    return g_failures == 0 ? 0 : 1;
}
