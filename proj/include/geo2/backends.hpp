#pragma once

#include <cstdint>
#include <vector>

#include "geo2/image.hpp"
#include "geo2/nn.hpp"

namespace geo2::geomap {

using ad::Mat;

// Frozen geometry feature extractor. The default is a seeded fixed-weight
// convolutional pyramid emitting C channels on an out_h x out_w grid; the
// paper-scale preset (C=256, 518x518) is expressible through the same config
// but never materialized in tests.
struct GeometryBackendConfig {
    int channels = 32;
    int out_h = 32;
    int out_w = 32;
    int input_res = 64;  // images are resized here before the pyramid
    uint64_t seed = 101;
};

class GeometryBackend {
  public:
    explicit GeometryBackend(const GeometryBackendConfig& cfg);

    // (channels, out_h*out_w) planar features; deterministic, no gradient
    Mat features(const Image& img) const;

    const GeometryBackendConfig& config() const { return cfg_; }
    uint64_t weights_hash() const;

  private:
    GeometryBackendConfig cfg_;
    std::vector<nn::Conv2d> levels_;
    std::vector<int> level_strides_;
};

// Frozen semantic tokenizer: non-overlapping patch embedding shared between
// views, satellite on a square grid, ground on a wide grid.
struct SemanticBackendConfig {
    int dim = 128;
    int sat_grid_h = 4, sat_grid_w = 4;
    int ground_grid_h = 2, ground_grid_w = 8;
    int patch = 16;
    uint64_t seed = 202;
};

class SemanticBackend {
  public:
    explicit SemanticBackend(const SemanticBackendConfig& cfg);

    // token rows in raster order (y then x), shape (grid_h*grid_w, dim)
    Mat tokens_satellite(const Image& img) const;
    Mat tokens_ground(const Image& img) const;

    const SemanticBackendConfig& config() const { return cfg_; }
    uint64_t weights_hash() const;

  private:
    Mat tokens(const Image& img, int grid_h, int grid_w) const;
    SemanticBackendConfig cfg_;
    nn::Conv2d patch_embed_;
};

// planar [0,1] centered float planes from an 8-bit image
Mat image_to_planes(const Image& img);

}  // namespace geo2::geomap
