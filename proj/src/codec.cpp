#include "geo2/codec.hpp"

#include <cmath>

#include "geo2/common.hpp"
#include "geo2/nn.hpp"

namespace geo2::flow {

SpaceToDepthCodec::SpaceToDepthCodec(int factor, uint64_t seed) : factor_(factor) {
    if (factor < 1) throw ConfigError("codec: factor must be positive");
    channels_ = 3 * factor * factor;
    Mat a = nn::randn(channels_, channels_, stream_seed(seed, "codec-mixing"));
    Eigen::HouseholderQR<Mat> qr(a);
    mix_ = qr.householderQ();
    Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    // fix column signs so the factorization is unique and seed-stable
    for (int j = 0; j < channels_; ++j)
        if (r(j, j) < 0) mix_.col(j) *= -1.0;
}

LatentShape SpaceToDepthCodec::shape_for(int img_w, int img_h) const {
    if (img_w <= 0 || img_h <= 0 || img_w % factor_ != 0 || img_h % factor_ != 0)
        throw ConfigError("codec: image size must be a positive multiple of " +
                          std::to_string(factor_));
    return {img_h / factor_, img_w / factor_, channels_};
}

Mat SpaceToDepthCodec::encode(const Image& img) const {
    LatentShape s = shape_for(img.width, img.height);
    Mat latent(s.tokens(), channels_);
    Eigen::VectorXd raw(channels_);
    for (int gy = 0; gy < s.grid_h; ++gy)
        for (int gx = 0; gx < s.grid_w; ++gx) {
            for (int dy = 0; dy < factor_; ++dy)
                for (int dx = 0; dx < factor_; ++dx)
                    for (int c = 0; c < 3; ++c)
                        raw((dy * factor_ + dx) * 3 + c) =
                            img.at(gx * factor_ + dx, gy * factor_ + dy, c) / 255.0 - 0.5;
            latent.row(gy * s.grid_w + gx) = (mix_.transpose() * raw).transpose();
        }
    return latent;
}

Image SpaceToDepthCodec::decode(const Mat& latent, int grid_h, int grid_w) const {
    if (latent.rows() != static_cast<Eigen::Index>(grid_h) * grid_w ||
        latent.cols() != channels_)
        throw ConfigError("codec: latent shape does not match the grid");
    if (!latent.allFinite()) throw NumericError("codec: non-finite latent");
    Image img(grid_w * factor_, grid_h * factor_);
    for (int gy = 0; gy < grid_h; ++gy)
        for (int gx = 0; gx < grid_w; ++gx) {
            Eigen::VectorXd raw = mix_ * latent.row(gy * grid_w + gx).transpose();
            for (int dy = 0; dy < factor_; ++dy)
                for (int dx = 0; dx < factor_; ++dx) {
                    std::array<uint8_t, 3> px;
                    for (int c = 0; c < 3; ++c) {
                        double v = std::round((raw((dy * factor_ + dx) * 3 + c) + 0.5) * 255.0);
                        px[c] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
                    }
                    img.set(gx * factor_ + dx, gy * factor_ + dy, px);
                }
        }
    return img;
}

}  // namespace geo2::flow
