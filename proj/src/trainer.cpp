#include "geo2/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "geo2/common.hpp"

namespace geo2::trainer {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

// Reads known keys from j into the fields, rejecting strangers so config
// typos fail loudly instead of silently training with defaults.
template <typename Fn>
void read_object(const json& j, const std::string& where, std::initializer_list<const char*> keys,
                 Fn&& assign) {
    require(j.is_object(), where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = std::find_if(keys.begin(), keys.end(), [&](const char* k) {
                         return it.key() == k;
                     }) != keys.end();
        require(known, where + ": unknown key '" + it.key() + "'");
    }
    for (const char* k : keys)
        if (j.contains(k)) assign(std::string(k), j.at(k));
}

template <typename T>
void get_into(const json& v, const std::string& where, T& out) {
    try {
        out = v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": wrong value type");
    }
}

}  // namespace

void RunConfig::validate() const {
    if (t1 < 0 || t2 < t1 || t3 < t2)
        throw ConfigError("schedule: need 0 <= t1 <= t2 <= t3");
    if (eta1 <= 0 || eta2 <= 0 || eta3 <= 0) throw ConfigError("learning rates must be positive");
    if (batch_size < 2) throw ConfigError("batch size must be at least 2 for in-batch negatives");
    if (val_every < 1) throw ConfigError("val_every must be positive");
    if (codec_factor < 1) throw ConfigError("codec factor must be positive");
    if (flow_image < codec_factor || flow_image % codec_factor != 0)
        throw ConfigError("flow image side must be a positive multiple of the codec factor");
    if (!(pano_v_range > 0.0) || pano_v_range > kPi)
        throw ConfigError("pano_v_range must lie in (0, pi]");
    loss.validate();
    geomap.validate();
    velocity.validate();
    int side = flow_image / codec_factor;
    if (velocity.tokens != side * side)
        throw ConfigError("velocity token count must equal (flow_image / codec_factor)^2");
    if (velocity.channels != 3 * codec_factor * codec_factor)
        throw ConfigError("velocity channels must equal 3 * codec_factor^2");
    if (velocity.cond_dim != geomap.dim)
        throw ConfigError("velocity cond_dim must equal the embedding dim");
}

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    RunConfig c;
    read_object(j, "config",
                {"t1", "t2", "t3", "eta1", "eta2", "eta3", "batch_size", "adaptive", "val_every",
                 "seed", "flow_image", "codec_factor", "codec_seed", "pano_v_range", "loss",
                 "geomap", "velocity"},
                [&](const std::string& k, const json& v) {
                    if (k == "t1") get_into(v, k, c.t1);
                    else if (k == "t2") get_into(v, k, c.t2);
                    else if (k == "t3") get_into(v, k, c.t3);
                    else if (k == "eta1") get_into(v, k, c.eta1);
                    else if (k == "eta2") get_into(v, k, c.eta2);
                    else if (k == "eta3") get_into(v, k, c.eta3);
                    else if (k == "batch_size") get_into(v, k, c.batch_size);
                    else if (k == "adaptive") get_into(v, k, c.adaptive);
                    else if (k == "val_every") get_into(v, k, c.val_every);
                    else if (k == "seed") get_into(v, k, c.seed);
                    else if (k == "flow_image") get_into(v, k, c.flow_image);
                    else if (k == "codec_factor") get_into(v, k, c.codec_factor);
                    else if (k == "codec_seed") get_into(v, k, c.codec_seed);
                    else if (k == "pano_v_range") get_into(v, k, c.pano_v_range);
                    else if (k == "loss") {
                        read_object(v, "loss",
                                    {"tau", "alpha", "kl_temperature", "infonce_symmetric",
                                     "flow_norm_reduction"},
                                    [&](const std::string& lk, const json& lv) {
                                        if (lk == "tau") get_into(lv, lk, c.loss.tau);
                                        else if (lk == "alpha") get_into(lv, lk, c.loss.alpha);
                                        else if (lk == "kl_temperature")
                                            get_into(lv, lk, c.loss.kl_temperature);
                                        else if (lk == "infonce_symmetric")
                                            get_into(lv, lk, c.loss.infonce_symmetric);
                                        else get_into(lv, lk, c.loss.flow_norm_reduction);
                                    });
                    } else if (k == "geomap") {
                        auto& g = c.geomap;
                        read_object(
                            v, "geomap",
                            {"dim", "heads", "use_geometry", "views", "crop_res", "proj_kernel",
                             "proj_stride", "proj_pad", "ln_eps", "seed", "geometry", "semantic"},
                            [&](const std::string& gk, const json& gv) {
                                if (gk == "dim") get_into(gv, gk, g.dim);
                                else if (gk == "heads") get_into(gv, gk, g.heads);
                                else if (gk == "use_geometry") get_into(gv, gk, g.use_geometry);
                                else if (gk == "views") get_into(gv, gk, g.views);
                                else if (gk == "crop_res") get_into(gv, gk, g.crop_res);
                                else if (gk == "proj_kernel") get_into(gv, gk, g.proj_kernel);
                                else if (gk == "proj_stride") get_into(gv, gk, g.proj_stride);
                                else if (gk == "proj_pad") get_into(gv, gk, g.proj_pad);
                                else if (gk == "ln_eps") get_into(gv, gk, g.ln_eps);
                                else if (gk == "seed") get_into(gv, gk, g.seed);
                                else if (gk == "geometry") {
                                    read_object(gv, "geometry",
                                                {"channels", "out_h", "out_w", "input_res", "seed"},
                                                [&](const std::string& bk, const json& bv) {
                                                    auto& b = g.geometry;
                                                    if (bk == "channels")
                                                        get_into(bv, bk, b.channels);
                                                    else if (bk == "out_h")
                                                        get_into(bv, bk, b.out_h);
                                                    else if (bk == "out_w")
                                                        get_into(bv, bk, b.out_w);
                                                    else if (bk == "input_res")
                                                        get_into(bv, bk, b.input_res);
                                                    else get_into(bv, bk, b.seed);
                                                });
                                } else {
                                    read_object(gv, "semantic",
                                                {"dim", "sat_grid_h", "sat_grid_w", "ground_grid_h",
                                                 "ground_grid_w", "patch", "seed"},
                                                [&](const std::string& sk, const json& sv) {
                                                    auto& s = g.semantic;
                                                    if (sk == "dim") get_into(sv, sk, s.dim);
                                                    else if (sk == "sat_grid_h")
                                                        get_into(sv, sk, s.sat_grid_h);
                                                    else if (sk == "sat_grid_w")
                                                        get_into(sv, sk, s.sat_grid_w);
                                                    else if (sk == "ground_grid_h")
                                                        get_into(sv, sk, s.ground_grid_h);
                                                    else if (sk == "ground_grid_w")
                                                        get_into(sv, sk, s.ground_grid_w);
                                                    else if (sk == "patch")
                                                        get_into(sv, sk, s.patch);
                                                    else get_into(sv, sk, s.seed);
                                                });
                                }
                            });
                    } else {
                        auto& n = c.velocity;
                        read_object(v, "velocity",
                                    {"channels", "tokens", "hidden", "depth", "heads",
                                     "head_hidden", "cond_dim", "mlp_ratio", "seed"},
                                    [&](const std::string& nk, const json& nv) {
                                        if (nk == "channels") get_into(nv, nk, n.channels);
                                        else if (nk == "tokens") get_into(nv, nk, n.tokens);
                                        else if (nk == "hidden") get_into(nv, nk, n.hidden);
                                        else if (nk == "depth") get_into(nv, nk, n.depth);
                                        else if (nk == "heads") get_into(nv, nk, n.heads);
                                        else if (nk == "head_hidden")
                                            get_into(nv, nk, n.head_hidden);
                                        else if (nk == "cond_dim") get_into(nv, nk, n.cond_dim);
                                        else if (nk == "mlp_ratio") get_into(nv, nk, n.mlp_ratio);
                                        else get_into(nv, nk, n.seed);
                                    });
                    }
                });
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
    json j{
        {"t1", c.t1},
        {"t2", c.t2},
        {"t3", c.t3},
        {"eta1", c.eta1},
        {"eta2", c.eta2},
        {"eta3", c.eta3},
        {"batch_size", c.batch_size},
        {"adaptive", c.adaptive},
        {"val_every", c.val_every},
        {"seed", c.seed},
        {"flow_image", c.flow_image},
        {"codec_factor", c.codec_factor},
        {"codec_seed", c.codec_seed},
        {"pano_v_range", c.pano_v_range},
        {"loss",
         {{"tau", c.loss.tau},
          {"alpha", c.loss.alpha},
          {"kl_temperature", c.loss.kl_temperature},
          {"infonce_symmetric", c.loss.infonce_symmetric},
          {"flow_norm_reduction", c.loss.flow_norm_reduction}}},
        {"geomap",
         {{"dim", c.geomap.dim},
          {"heads", c.geomap.heads},
          {"use_geometry", c.geomap.use_geometry},
          {"views", c.geomap.views},
          {"crop_res", c.geomap.crop_res},
          {"proj_kernel", c.geomap.proj_kernel},
          {"proj_stride", c.geomap.proj_stride},
          {"proj_pad", c.geomap.proj_pad},
          {"ln_eps", c.geomap.ln_eps},
          {"seed", c.geomap.seed},
          {"geometry",
           {{"channels", c.geomap.geometry.channels},
            {"out_h", c.geomap.geometry.out_h},
            {"out_w", c.geomap.geometry.out_w},
            {"input_res", c.geomap.geometry.input_res},
            {"seed", c.geomap.geometry.seed}}},
          {"semantic",
           {{"dim", c.geomap.semantic.dim},
            {"sat_grid_h", c.geomap.semantic.sat_grid_h},
            {"sat_grid_w", c.geomap.semantic.sat_grid_w},
            {"ground_grid_h", c.geomap.semantic.ground_grid_h},
            {"ground_grid_w", c.geomap.semantic.ground_grid_w},
            {"patch", c.geomap.semantic.patch},
            {"seed", c.geomap.semantic.seed}}}}},
        {"velocity",
         {{"channels", c.velocity.channels},
          {"tokens", c.velocity.tokens},
          {"hidden", c.velocity.hidden},
          {"depth", c.velocity.depth},
          {"heads", c.velocity.heads},
          {"head_hidden", c.velocity.head_hidden},
          {"cond_dim", c.velocity.cond_dim},
          {"mlp_ratio", c.velocity.mlp_ratio},
          {"seed", c.velocity.seed}}},
    };
    return j.dump();
}

std::string config_digest(const RunConfig& cfg) {
    std::string canon = config_to_json(cfg);
    uint64_t h = fnv1a(canon.data(), canon.size());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string EpochLog::json() const {
    using J = nlohmann::json;  // the method name shadows the alias here
    auto field = [](double v) { return std::isnan(v) ? J() : J(v); };
    J j{{"epoch", epoch},      {"stage", stage},      {"L_GL", field(l_gl)},
        {"L_IG", field(l_ig)}, {"L_KL", field(l_kl)}, {"r1_val", field(r1_val)}};
    return j.dump();
}

Trainer::Trainer(RunConfig config, const synth::DatasetManifest& manifest)
    : cfg([&] {
          config.validate();
          return config;
      }()),
      geomap_(cfg.geomap),
      velocity_(cfg.velocity),
      codec_(cfg.codec_factor, cfg.codec_seed) {
    adam_head_.lr = cfg.eta1;
    adam_flow_.lr = cfg.eta2;
    sgd_head_.lr = cfg.eta1;
    sgd_flow_.lr = cfg.eta2;

    std::unordered_map<std::string, int> ref_of;
    auto load_split = [&](const std::string& split, std::vector<Item>& out) {
        for (const auto& e : manifest.entries) {
            if (e.split != split) continue;
            Item it;
            it.id = e.id;
            it.ground = read_png((manifest.root / e.ground).string());
            auto [pos, fresh] = ref_of.try_emplace(e.satellite, static_cast<int>(refs_.size()));
            if (fresh) {
                RefSat r;
                r.id = std::filesystem::path(e.satellite).stem().string();
                r.img = read_png((manifest.root / e.satellite).string());
                refs_.push_back(std::move(r));
            }
            it.sat = pos->second;
            for (const std::string& pid : e.positives) {
                bool found = false;
                for (int ri = 0; ri < static_cast<int>(refs_.size()) && !found; ++ri)
                    if (refs_[ri].id == pid) {
                        it.positives.push_back(ri);
                        found = true;
                    }
                // positives naming satellites outside this split pair up later;
                // for synthetic one_to_one the own satellite always resolves
            }
            if (it.positives.empty()) it.positives.push_back(it.sat);
            out.push_back(std::move(it));
        }
    };
    load_split("train", train_);
    load_split("val", val_);
    if (train_.size() < 2) throw ConfigError("trainer: need at least 2 train pairs");
}

int Trainer::stage() const {
    if (epoch_ < cfg.t1) return 1;
    if (epoch_ < cfg.t2) return 2;
    return 3;
}

const Image& Trainer::val_ground(int i) const { return val_.at(i).ground; }
const Image& Trainer::val_satellite(int i) const { return refs_.at(val_.at(i).sat).img; }

void Trainer::ensure_features() {
    if (features_ready_) return;
    for (auto& r : refs_) r.feat = geomap_.backbone_satellite(r.img);
    for (auto* split : {&train_, &val_})
        for (auto& it : *split)
            it.feat = geomap_.backbone_ground({it.ground, cfg.pano_v_range});
    features_ready_ = true;
}

Mat Trainer::encode_resized(const Image& img) {
    const Image* src = &img;
    Image resized;
    if (img.width != cfg.flow_image || img.height != cfg.flow_image) {
        resized = resize_bilinear(img, cfg.flow_image, cfg.flow_image);
        src = &resized;
    }
    return codec_.encode(*src);
}

void Trainer::ensure_latents() {
    if (latents_ready_) return;
    for (auto& r : refs_) r.latent = encode_resized(r.img);
    for (auto& it : train_) it.latent = encode_resized(it.ground);
    latents_ready_ = true;
}

Eigen::VectorXd Trainer::eval_embed(const geomap::ViewFeatures& f, bool ground) {
    ad::Tape t;
    ad::Var e = geomap_.embed_features(t, f, ground);
    return e.value().row(0).transpose();
}

void Trainer::refresh_conditions() {
    ensure_features();
    cond_.resize(train_.size());
    for (size_t i = 0; i < train_.size(); ++i) cond_[i] = eval_embed(train_[i].feat, true);
}

bool Trainer::take_budget() {
    if (budget_ == 0) return false;
    if (budget_ > 0) --budget_;
    return true;
}

void Trainer::step_head(double lr) {
    auto params = geomap_.head_params();
    if (cfg.adaptive) {
        adam_head_.lr = lr;
        adam_head_.step(params);
    } else {
        sgd_head_.lr = lr;
        sgd_head_.step(params);
    }
    nn::zero_grads(params);
}

double Trainer::retrieval_epoch(bool with_kl, double lr, double& kl_out) {
    std::vector<int> order(train_.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(stream_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch_)));
    std::shuffle(order.begin(), order.end(), rng);

    double gl_total = 0, kl_total = 0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
        size_t end = std::min(order.size(), start + cfg.batch_size);
        if (end - start < 2) break;  // a trailing singleton has no negatives
        double gl_here = 0, kl_here = kNaN;
        try {
            ad::Tape t;
            std::vector<ad::Var> gs, ss;
            for (size_t k = start; k < end; ++k) {
                const Item& it = train_[order[k]];
                gs.push_back(geomap_.embed_features(t, it.feat, true));
                ss.push_back(geomap_.embed_features(t, refs_[it.sat].feat, false));
            }
            ad::Var fg = ad::vconcat(gs), fs = ad::vconcat(ss);
            ad::Var l_gl =
                objectives::infonce_batch(t, fg, fs, cfg.loss.tau, cfg.loss.infonce_symmetric);
            ad::Var objective = l_gl;
            if (with_kl) {
                ad::Var l_kl = objectives::kl_consistency(t, fg, fs, cfg.loss.kl_temperature);
                kl_here = l_kl.value()(0, 0);
                objective = ad::add(l_gl, ad::scale(l_kl, cfg.loss.alpha));
            }
            if (!std::isfinite(objective.value()(0, 0))) throw NumericError("non-finite loss");
            t.backward(objective);
            gl_here = l_gl.value()(0, 0);
        } catch (const NumericError& e) {
            throw NumericError("stage " + std::to_string(stage()) + ": " + e.what() +
                               " at epoch " + std::to_string(epoch_) + ", batch " +
                               std::to_string(batches));
        }
        step_head(lr);
        gl_total += gl_here;
        if (with_kl) kl_total += kl_here;
        ++batches;
    }
    kl_out = (with_kl && batches) ? kl_total / batches : kNaN;
    return batches ? gl_total / batches : kNaN;
}

double Trainer::flow_epoch() {
    std::vector<int> order(train_.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(stream_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch_)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    flow::TrainStepOptions opts;
    opts.norm_reduction = cfg.loss.flow_norm_reduction;
    double total = 0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
        size_t end = std::min(order.size(), start + cfg.batch_size);
        std::vector<flow::FlowSample> batch;
        batch.reserve(end - start);
        for (size_t k = start; k < end; ++k) {
            const Item& it = train_[order[k]];
            batch.push_back({it.latent, refs_[it.sat].latent, cond_[order[k]]});
        }
        std::mt19937_64 t_rng(stream_seed(cfg.seed, "flow-t", static_cast<uint64_t>(epoch_),
                                          static_cast<uint64_t>(batches)));
        double loss;
        try {
            loss = cfg.adaptive ? flow::train_step(velocity_, batch, t_rng, adam_flow_, opts)
                                : flow::train_step(velocity_, batch, t_rng, sgd_flow_, opts);
        } catch (const NumericError& e) {
            throw NumericError("stage " + std::to_string(stage()) + ": " + e.what() +
                               " at epoch " + std::to_string(epoch_) + ", batch " +
                               std::to_string(batches));
        }
        total += loss;
        ++batches;
    }
    return batches ? total / batches : kNaN;
}

void Trainer::finish_epoch(int stage_no, double l_gl, double l_ig, double l_kl) {
    double r1 = kNaN;
    if (!val_.empty() && (epoch_ + 1) % cfg.val_every == 0) r1 = validation_r1();
    logs_.push_back({epoch_, stage_no, l_gl, l_ig, l_kl, r1});
    ++epoch_;
}

void Trainer::train_stage1() {
    if (epoch_ >= cfg.t1) return;
    ensure_features();
    while (epoch_ < cfg.t1 && take_budget()) {
        double kl;
        double gl = retrieval_epoch(false, cfg.eta1, kl);
        finish_epoch(1, gl, kNaN, kNaN);
    }
}

void Trainer::train_stage2() {
    if (epoch_ >= cfg.t2) return;
    if (epoch_ < cfg.t1) throw UsageError("stage 2 requires stage 1 to be complete");
    ensure_latents();
    refresh_conditions();  // beta is frozen here, so entry-time conditions hold all phase
    while (epoch_ < cfg.t2 && take_budget()) {
        double ig = flow_epoch();
        finish_epoch(2, kNaN, ig, kNaN);
    }
}

void Trainer::joint_finetune() {
    if (epoch_ >= cfg.t3) return;
    if (epoch_ < cfg.t2) throw UsageError("joint finetune requires stages 1 and 2 to be complete");
    ensure_latents();
    while (epoch_ < cfg.t3 && take_budget()) {
        refresh_conditions();
        double kl;
        double gl = retrieval_epoch(true, cfg.eta3, kl);
        double ig = flow_epoch();
        finish_epoch(3, gl, ig, kl);
    }
}

void Trainer::run_schedule(std::optional<int> max_epochs) {
    if (max_epochs && *max_epochs < 0) throw UsageError("max_epochs must be non-negative");
    budget_ = max_epochs ? *max_epochs : -1;
    train_stage1();
    if (budget_ != 0) train_stage2();  // an exhausted budget interrupts the schedule
    if (budget_ != 0) joint_finetune();
    budget_ = -1;
}

double Trainer::validation_r1() {
    ensure_features();
    if (val_.empty()) throw UsageError("validation requires a non-empty val split");
    Mat bank(refs_.size(), cfg.geomap.dim);
    for (size_t r = 0; r < refs_.size(); ++r)
        bank.row(r) = eval_embed(refs_[r].feat, false).transpose();
    int hits = 0;
    for (const Item& it : val_) {
        Eigen::VectorXd q = eval_embed(it.feat, true);
        int top = geomap::retrieve(q, bank)[0];
        if (std::find(it.positives.begin(), it.positives.end(), top) != it.positives.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(val_.size());
}

double Trainer::validation_kl() {
    ensure_features();
    if (val_.empty()) throw UsageError("validation requires a non-empty val split");
    double total = 0;
    for (const Item& it : val_) {
        Eigen::VectorXd fg = eval_embed(it.feat, true);
        Eigen::VectorXd fs = eval_embed(refs_[it.sat].feat, false);
        total += objectives::kl_consistency(fg, fs, cfg.loss.kl_temperature);
    }
    return total / static_cast<double>(val_.size());
}

void Trainer::write_log(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write log: " + path.string());
    for (const auto& l : logs_) out << l.json() << "\n";
}

namespace {

void append_bytes(std::string& buf, const void* p, size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

void append_mat(std::string& buf, const Mat& m) {
    append_bytes(buf, m.data(), sizeof(double) * static_cast<size_t>(m.size()));
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) {
    std::vector<ad::Parameter*> params = geomap_.head_params();
    for (auto* p : velocity_.params()) params.push_back(p);

    json plist = json::array();
    for (const auto* p : params)
        plist.push_back({{"name", p->name},
                         {"rows", static_cast<int>(p->value.rows())},
                         {"cols", static_cast<int>(p->value.cols())}});
    json header{{"format", "geo2-checkpoint"},
                {"version", 1},
                {"config_digest", config_digest(cfg)},
                {"backbone_hash", geomap_.backbone_hash()},
                {"epoch", epoch_},
                {"stage", stage()},
                {"seed", cfg.seed},
                {"adam_t_head", adam_head_.t},
                {"adam_t_flow", adam_flow_.t},
                {"params", plist}};
    std::string htext = header.dump();

    std::string buf;
    buf.reserve(htext.size() + 64);
    buf += "GEO2CKPT";
    uint32_t hlen = static_cast<uint32_t>(htext.size());
    append_bytes(buf, &hlen, sizeof hlen);
    buf += htext;
    for (const auto* p : params) {
        append_mat(buf, p->value);
        append_mat(buf, p->m);
        append_mat(buf, p->v);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write on checkpoint: " + path.string());
}

namespace {

// validates the header against the live models and fills values and Adam
// moments; returns the parsed header for the caller's own fields
json read_checkpoint(const std::filesystem::path& path, const std::string& digest,
                     uint64_t backbone_hash, const std::vector<ad::Parameter*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "GEO2CKPT", 8) != 0)
        throw ParseError("checkpoint: bad magic");
    uint32_t hlen = 0;
    if (!in.read(reinterpret_cast<char*>(&hlen), sizeof hlen))
        throw ParseError("checkpoint: truncated header length");
    std::string htext(hlen, '\0');
    if (!in.read(htext.data(), hlen)) throw ParseError("checkpoint: truncated header");
    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }
    if (header.value("format", "") != "geo2-checkpoint" || header.value("version", 0) != 1)
        throw ParseError("checkpoint: unknown format or version");
    if (header.value("config_digest", "") != digest)
        throw ConfigError("checkpoint was written with a different config");
    if (header.value("backbone_hash", uint64_t{0}) != backbone_hash)
        throw ConfigError("checkpoint backbone hash does not match this model");

    const json& plist = header.at("params");
    if (plist.size() != params.size()) throw ConfigError("checkpoint parameter list mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const json& e = plist[i];
        if (e.at("name") != params[i]->name ||
            e.at("rows") != static_cast<int>(params[i]->value.rows()) ||
            e.at("cols") != static_cast<int>(params[i]->value.cols()))
            throw ConfigError("checkpoint parameter mismatch at '" + params[i]->name + "'");
    }
    auto read_mat = [&](Mat& m) {
        if (!in.read(reinterpret_cast<char*>(m.data()),
                     static_cast<std::streamsize>(sizeof(double) * m.size())))
            throw ParseError("checkpoint: truncated parameter data");
    };
    for (auto* p : params) {
        read_mat(p->value);
        read_mat(p->m);
        read_mat(p->v);
        p->grad.setZero();
    }
    return header;
}

}  // namespace

void Trainer::load_checkpoint(const std::filesystem::path& path) {
    std::vector<ad::Parameter*> params = geomap_.head_params();
    for (auto* p : velocity_.params()) params.push_back(p);
    json header = read_checkpoint(path, config_digest(cfg), geomap_.backbone_hash(), params);
    epoch_ = header.at("epoch").get<int>();
    adam_head_.t = header.at("adam_t_head").get<long>();
    adam_flow_.t = header.at("adam_t_flow").get<long>();
    logs_.clear();
}

void load_weights(const std::filesystem::path& path, const RunConfig& cfg,
                  geomap::GeoMapModel& model, flow::VelocityNet& net) {
    std::vector<ad::Parameter*> params = model.head_params();
    for (auto* p : net.params()) params.push_back(p);
    read_checkpoint(path, config_digest(cfg), model.backbone_hash(), params);
}

}  // namespace geo2::trainer
