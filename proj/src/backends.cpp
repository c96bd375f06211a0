#include "geo2/backends.hpp"

#include <cmath>

#include "geo2/common.hpp"

namespace geo2::geomap {

Mat image_to_planes(const Image& img) {
    Mat p(3, static_cast<Eigen::Index>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                p(c, static_cast<Eigen::Index>(y) * img.width + x) =
                    img.at(x, y, c) / 255.0 - 0.5;
    return p;
}

GeometryBackend::GeometryBackend(const GeometryBackendConfig& cfg) : cfg_(cfg) {
    if (cfg.input_res % 4 != 0) throw ConfigError("geometry backend input_res must divide by 4");
    // two stride-2 levels then two stride-1 refinements
    int c0 = 3;
    int c1 = std::max(8, cfg.channels * 3 / 8);
    int c2 = std::max(12, cfg.channels * 5 / 8);
    int c3 = std::max(16, cfg.channels * 7 / 8);
    struct L {
        int cin, cout, stride;
    };
    std::vector<L> plan{{c0, c1, 2}, {c1, c2, 2}, {c2, c3, 1}, {c3, cfg.channels, 1}};
    int idx = 0;
    for (const auto& l : plan) {
        levels_.emplace_back("geometry.l" + std::to_string(idx), l.cin, l.cout, 3, l.stride, 1,
                             cfg.seed);
        level_strides_.push_back(l.stride);
        for (auto& p : {&levels_.back().W, &levels_.back().b}) p->trainable = false;
        ++idx;
    }
}

namespace {

// per-channel standardization across positions; removes the per-image DC
// (dominated by the background) so downstream attention sees local structure
// rather than one shared direction
void standardize_rows(Mat& x) {
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        double mean = x.row(c).mean();
        double var = (x.row(c).array() - mean).square().mean();
        x.row(c) = (x.row(c).array() - mean) / std::sqrt(var + 1e-8);
    }
}

}  // namespace

Mat GeometryBackend::features(const Image& img) const {
    Image resized = (img.width == cfg_.input_res && img.height == cfg_.input_res)
                        ? img
                        : resize_bilinear(img, cfg_.input_res, cfg_.input_res);
    Mat x = image_to_planes(resized);
    int h = cfg_.input_res, w = cfg_.input_res;
    for (size_t i = 0; i < levels_.size(); ++i) {
        auto g = levels_[i].geom(h, w);
        x = levels_[i].forward_plain(x, h, w);
        x = x.array().tanh();
        h = g.out_h();
        w = g.out_w();
    }
    if (h != cfg_.out_h || w != cfg_.out_w) x = nn::resize_planar(x, h, w, cfg_.out_h, cfg_.out_w);
    standardize_rows(x);
    return x;
}

uint64_t GeometryBackend::weights_hash() const {
    std::vector<ad::Parameter*> ps;
    for (auto& l : const_cast<std::vector<nn::Conv2d>&>(levels_)) l.collect(ps);
    return nn::params_hash(ps);
}

SemanticBackend::SemanticBackend(const SemanticBackendConfig& cfg)
    : cfg_(cfg),
      patch_embed_("semantic.patch", 3, cfg.dim, cfg.patch, cfg.patch, 0, cfg.seed) {
    patch_embed_.W.trainable = false;
    patch_embed_.b.trainable = false;
}

Mat SemanticBackend::tokens(const Image& img, int grid_h, int grid_w) const {
    int in_w = grid_w * cfg_.patch;
    int in_h = grid_h * cfg_.patch;
    Image resized =
        (img.width == in_w && img.height == in_h) ? img : resize_bilinear(img, in_w, in_h);
    Mat planes = image_to_planes(resized);
    Mat y = patch_embed_.forward_plain(planes, in_h, in_w);  // (dim, grid_h*grid_w)
    y = y.array().tanh();
    standardize_rows(y);
    return y.transpose();  // rows = tokens, raster order
}

Mat SemanticBackend::tokens_satellite(const Image& img) const {
    return tokens(img, cfg_.sat_grid_h, cfg_.sat_grid_w);
}

Mat SemanticBackend::tokens_ground(const Image& img) const {
    return tokens(img, cfg_.ground_grid_h, cfg_.ground_grid_w);
}

uint64_t SemanticBackend::weights_hash() const {
    std::vector<ad::Parameter*> ps;
    const_cast<nn::Conv2d&>(patch_embed_).collect(ps);
    return nn::params_hash(ps);
}

}  // namespace geo2::geomap
