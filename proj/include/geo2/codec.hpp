#pragma once

#include <cstdint>

#include "geo2/autograd.hpp"
#include "geo2/image.hpp"

namespace geo2::flow {

using ad::Mat;

struct LatentShape {
    int grid_h = 0, grid_w = 0, channels = 0;
    int tokens() const { return grid_h * grid_w; }
};

// Exactly invertible image codec: space-to-depth by a fixed factor followed
// by a seeded orthogonal channel mixing. Plays the role of a pretrained
// latent autoencoder without contributing reconstruction error; a learned
// codec can replace it behind the same encode/decode contract.
class SpaceToDepthCodec {
  public:
    explicit SpaceToDepthCodec(int factor = 8, uint64_t seed = 303);

    // latent token rows in grid raster order, (grid_h*grid_w, channels)
    Mat encode(const Image& img) const;
    Image decode(const Mat& latent, int grid_h, int grid_w) const;

    LatentShape shape_for(int img_w, int img_h) const;
    int factor() const { return factor_; }
    int channels() const { return channels_; }
    const Mat& mixing() const { return mix_; }

  private:
    int factor_;
    int channels_;
    Mat mix_;  // orthogonal, channels x channels
};

}  // namespace geo2::flow
