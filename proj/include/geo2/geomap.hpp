#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "geo2/backends.hpp"
#include "geo2/e2p.hpp"
#include "geo2/nn.hpp"

namespace geo2::geomap {

using ad::Parameter;
using ad::Tape;
using ad::Var;

struct GeoMapConfig {
    int dim = 128;
    int heads = 16;
    bool use_geometry = true;
    int views = 4;       // perspective crops per panorama
    int crop_res = 64;   // crop output resolution fed to the geometry backend
    int proj_kernel = 3, proj_stride = 4, proj_pad = 1;
    double ln_eps = 1e-5;
    uint64_t seed = 7;
    GeometryBackendConfig geometry;
    SemanticBackendConfig semantic;

    int proj_h() const {
        return ad::ConvGeom{geometry.out_h, geometry.out_w, proj_kernel, proj_stride, proj_pad}
            .out_h();
    }
    int proj_w() const {
        return ad::ConvGeom{geometry.out_h, geometry.out_w, proj_kernel, proj_stride, proj_pad}
            .out_w();
    }
    int sat_kv_tokens() const {
        return use_geometry ? proj_h() * proj_w() : semantic.sat_grid_h * semantic.sat_grid_w;
    }
    int ground_kv_tokens() const {
        return use_geometry ? views * proj_h() * proj_w()
                            : semantic.ground_grid_h * semantic.ground_grid_w;
    }
    void validate() const;
};

// Backbone outputs for one view, cached by the trainer between epochs.
struct ViewFeatures {
    std::vector<Mat> geo;  // satellite: one map; ground: one per crop; empty without geometry
    Mat sem;               // query tokens, (N, dim)
};

class GeoMapModel {
  public:
    explicit GeoMapModel(const GeoMapConfig& cfg);

    ViewFeatures backbone_satellite(const Image& img) const;
    ViewFeatures backbone_ground(const e2p::Panorama& pano) const;

    // projection conv over geometry maps; multi-view maps are concatenated
    // along the width, token rows in (y, view, x) raster order
    Var project_features(Tape& t, const std::vector<Mat>& geo);

    // cross attention, query tokens against key/value tokens with learned
    // position embeddings on the key/value side
    Var fuse(Tape& t, Var q, Var kv, bool ground, std::vector<Mat>* attn_out = nullptr);

    // token mean, layer norm, L2 normalization to the unit sphere
    Var pool_normalize(Tape& t, Var out, bool ground);

    // full head on cached features, 1 x dim unit-norm row
    Var embed_features(Tape& t, const ViewFeatures& f, bool ground);

    // eval-mode conveniences (fresh tape per call)
    Eigen::VectorXd embed_satellite(const Image& img);
    Eigen::VectorXd embed_ground(const e2p::Panorama& pano);

    std::vector<Parameter*> head_params();  // beta: everything trained in stage 1/3
    uint64_t backbone_hash() const;

    const GeoMapConfig cfg;
    GeometryBackend geometry;
    SemanticBackend semantic;

  private:
    nn::Conv2d proj_;
    nn::MultiheadAttention attn_ground_, attn_sat_;
    Parameter pos_ground_, pos_sat_;
    nn::LayerNorm ln_ground_, ln_sat_;
};

struct EmbeddingBank {
    std::vector<std::string> ids;
    Mat vectors;  // N x dim, unit rows
};

// full ranking by ascending Euclidean distance, ties to the lowest index
std::vector<int> retrieve(const Eigen::VectorXd& query, const Mat& bank);

// bank file pair: <base>.f32 (little-endian float32, row-major N x dim) and
// <base>.json sidecar {count, dim, ids, norm}
void save_bank(const EmbeddingBank& bank, const std::filesystem::path& base);
EmbeddingBank load_bank(const std::filesystem::path& base);

}  // namespace geo2::geomap
