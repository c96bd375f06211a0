#include "geo2/geomap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "geo2/common.hpp"

namespace geo2::geomap {

void GeoMapConfig::validate() const {
    if (dim <= 0 || heads <= 0 || dim % heads != 0)
        throw ConfigError("geomap: dim must be a positive multiple of heads");
    if (semantic.dim != dim)
        throw ConfigError("geomap: semantic token dim must equal embedding dim");
    if (views < 1) throw ConfigError("geomap: need at least one view");
    if (proj_h() < 1 || proj_w() < 1) throw ConfigError("geomap: projection collapses the grid");
}

GeoMapModel::GeoMapModel(const GeoMapConfig& c)
    : cfg(c),
      geometry(c.geometry),
      semantic(c.semantic),
      proj_("geomap.proj", c.geometry.channels, c.dim, c.proj_kernel, c.proj_stride, c.proj_pad,
            c.seed),
      attn_ground_("geomap.ground_attn", c.dim, c.heads, c.seed),
      attn_sat_("geomap.sat_attn", c.dim, c.heads, c.seed),
      pos_ground_("geomap.ground_pos",
                  nn::randn(c.ground_kv_tokens(), c.dim,
                            nn::param_seed(c.seed, "geomap.ground_pos"), 0.02)),
      pos_sat_("geomap.sat_pos",
               nn::randn(c.sat_kv_tokens(), c.dim, nn::param_seed(c.seed, "geomap.sat_pos"),
                         0.02)),
      ln_ground_("geomap.ground_ln", c.dim),
      ln_sat_("geomap.sat_ln", c.dim) {
    cfg.validate();
    ln_ground_.eps = c.ln_eps;
    ln_sat_.eps = c.ln_eps;
}

ViewFeatures GeoMapModel::backbone_satellite(const Image& img) const {
    ViewFeatures f;
    if (cfg.use_geometry) f.geo.push_back(geometry.features(img));
    f.sem = semantic.tokens_satellite(img);
    return f;
}

ViewFeatures GeoMapModel::backbone_ground(const e2p::Panorama& pano) const {
    ViewFeatures f;
    if (cfg.use_geometry) {
        auto crops = e2p::e2p_transform(pano, e2p::default_crop_specs(cfg.crop_res, cfg.crop_res));
        if (static_cast<int>(crops.size()) != cfg.views)
            throw ConfigError("geomap: crop count does not match configured views");
        for (const auto& c : crops) f.geo.push_back(geometry.features(c.image));
    }
    f.sem = semantic.tokens_ground(pano.image);
    return f;
}

Var GeoMapModel::project_features(Tape& t, const std::vector<Mat>& geo) {
    if (geo.empty()) throw ConfigError("project_features: no geometry maps");
    int ph = cfg.proj_h(), pw = cfg.proj_w();
    std::vector<Var> view_tokens;
    for (const auto& g : geo) {
        if (g.rows() != cfg.geometry.channels ||
            g.cols() != static_cast<Eigen::Index>(cfg.geometry.out_h) * cfg.geometry.out_w)
            throw ConfigError("project_features: geometry map shape mismatch");
        if (!g.allFinite()) throw NumericError("project_features: non-finite input");
        Var planar = proj_.forward(t, t.constant(g), cfg.geometry.out_h, cfg.geometry.out_w);
        view_tokens.push_back(ad::transpose(planar));  // (ph*pw, dim), rows (y, x)
    }
    if (view_tokens.size() == 1) return view_tokens[0];

    // width concatenation: row order (y, view, x)
    std::vector<Var> rows;
    rows.reserve(static_cast<size_t>(ph) * view_tokens.size());
    for (int y = 0; y < ph; ++y)
        for (auto& vt : view_tokens) rows.push_back(ad::block(vt, y * pw, 0, pw, cfg.dim));
    return ad::vconcat(rows);
}

Var GeoMapModel::fuse(Tape& t, Var q, Var kv, bool ground, std::vector<Mat>* attn_out) {
    if (q.cols() != cfg.dim || kv.cols() != cfg.dim)
        throw ConfigError("fuse: token dim mismatch");
    Parameter& pos = ground ? pos_ground_ : pos_sat_;
    if (kv.rows() != pos.value.rows())
        throw ConfigError("fuse: key/value count does not match position table");
    Var kv_pos = ad::add(kv, t.param(pos));
    auto& attn = ground ? attn_ground_ : attn_sat_;
    return attn.forward(t, q, kv_pos, attn_out);
}

Var GeoMapModel::pool_normalize(Tape& t, Var out, bool ground) {
    Var pooled = ad::mean_rows(out);
    Var normed = (ground ? ln_ground_ : ln_sat_).forward(t, pooled);
    return ad::l2_normalize_rows(normed);
}

Var GeoMapModel::embed_features(Tape& t, const ViewFeatures& f, bool ground) {
    Var q = t.constant(f.sem);
    Var kv = cfg.use_geometry ? project_features(t, f.geo) : q;
    Var out = fuse(t, q, kv, ground);
    return pool_normalize(t, out, ground);
}

Eigen::VectorXd GeoMapModel::embed_satellite(const Image& img) {
    Tape t;
    Var f = embed_features(t, backbone_satellite(img), /*ground=*/false);
    return f.value().row(0).transpose();
}

Eigen::VectorXd GeoMapModel::embed_ground(const e2p::Panorama& pano) {
    Tape t;
    Var f = embed_features(t, backbone_ground(pano), /*ground=*/true);
    return f.value().row(0).transpose();
}

std::vector<Parameter*> GeoMapModel::head_params() {
    std::vector<Parameter*> ps;
    proj_.collect(ps);
    attn_ground_.collect(ps);
    attn_sat_.collect(ps);
    ps.push_back(&pos_ground_);
    ps.push_back(&pos_sat_);
    ln_ground_.collect(ps);
    ln_sat_.collect(ps);
    return ps;
}

uint64_t GeoMapModel::backbone_hash() const {
    return hash_combine(geometry.weights_hash(), semantic.weights_hash());
}

std::vector<int> retrieve(const Eigen::VectorXd& query, const Mat& bank) {
    if (bank.rows() == 0) throw UsageError("retrieve: empty reference bank");
    if (bank.cols() != query.size()) throw UsageError("retrieve: dimension mismatch");
    Eigen::VectorXd d2 =
        (bank.rowwise() - query.transpose()).rowwise().squaredNorm();
    std::vector<int> idx(bank.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (d2(a) != d2(b)) return d2(a) < d2(b);
        return a < b;
    });
    return idx;
}

void save_bank(const EmbeddingBank& bank, const std::filesystem::path& base) {
    if (bank.vectors.rows() != static_cast<Eigen::Index>(bank.ids.size()))
        throw UsageError("save_bank: id count does not match vector count");
    std::ofstream blob(base.string() + ".f32", std::ios::binary);
    if (!blob) throw IoError("cannot write " + base.string() + ".f32");
    for (Eigen::Index r = 0; r < bank.vectors.rows(); ++r)
        for (Eigen::Index c = 0; c < bank.vectors.cols(); ++c) {
            float v = static_cast<float>(bank.vectors(r, c));
            blob.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    nlohmann::json side = {{"count", bank.vectors.rows()},
                           {"dim", bank.vectors.cols()},
                           {"ids", bank.ids},
                           {"norm", "l2"}};
    std::ofstream js(base.string() + ".json", std::ios::binary);
    if (!js) throw IoError("cannot write " + base.string() + ".json");
    js << side.dump(2) << "\n";
}

EmbeddingBank load_bank(const std::filesystem::path& base) {
    std::ifstream js(base.string() + ".json");
    if (!js) throw IoError("cannot open " + base.string() + ".json");
    nlohmann::json side;
    try {
        js >> side;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bank sidecar: " + std::string(e.what()));
    }
    EmbeddingBank bank;
    Eigen::Index count = side.at("count").get<Eigen::Index>();
    Eigen::Index dim = side.at("dim").get<Eigen::Index>();
    bank.ids = side.at("ids").get<std::vector<std::string>>();
    if (side.value("norm", "") != "l2") throw ParseError("bank sidecar: unsupported norm");
    if (static_cast<Eigen::Index>(bank.ids.size()) != count)
        throw ParseError("bank sidecar: id count mismatch");

    std::ifstream blob(base.string() + ".f32", std::ios::binary);
    if (!blob) throw IoError("cannot open " + base.string() + ".f32");
    bank.vectors.resize(count, dim);
    for (Eigen::Index r = 0; r < count; ++r)
        for (Eigen::Index c = 0; c < dim; ++c) {
            float v;
            if (!blob.read(reinterpret_cast<char*>(&v), sizeof(v)))
                throw ParseError("bank blob truncated at row " + std::to_string(r));
            bank.vectors(r, c) = v;
        }
    return bank;
}

}  // namespace geo2::geomap
