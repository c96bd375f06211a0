#include "geo2/e2p.hpp"

#include <cmath>
#include <string>

#include "geo2/common.hpp"

namespace geo2::e2p {

namespace {
constexpr double kTol = 1e-9;  // slack for range checks at exact boundaries

double wrap_longitude(double lambda) {
    // into [-pi, pi)
    double t = std::fmod(lambda + kPi, 2 * kPi);
    if (t < 0) t += 2 * kPi;
    return t - kPi;
}
}  // namespace

void CropSpec::validate() const {
    if (!(fov_h > 0 && fov_h < kPi)) throw DomainError("fov_h must lie in (0, pi)");
    if (!(fov_v > 0 && fov_v < kPi)) throw DomainError("fov_v must lie in (0, pi)");
    if (out_width <= 0 || out_height <= 0) throw DomainError("crop output size must be positive");
}

std::pair<double, double> spherical_to_pixel(const SphericalCoord& c, int width, int height,
                                             double v_range) {
    if (width <= 0 || height <= 0) throw DomainError("panorama size must be positive");
    if (!(v_range > 0 && v_range <= kPi + kTol)) throw DomainError("v_range must lie in (0, pi]");
    if (c.longitude < -kPi - kTol || c.longitude >= kPi + kTol)
        throw DomainError("longitude out of range [-pi, pi): " + std::to_string(c.longitude));
    if (std::abs(c.latitude) > v_range / 2 + kTol)
        throw DomainError("latitude out of range [-v_range/2, v_range/2]: " +
                          std::to_string(c.latitude));
    double u = width / (2 * kPi) * (c.longitude + kPi);
    double v = height / v_range * (v_range / 2 - c.latitude);
    return {u, v};
}

SphericalCoord pixel_to_spherical(double u, double v, int width, int height, double v_range) {
    if (width <= 0 || height <= 0) throw DomainError("panorama size must be positive");
    if (u < -kTol || u >= width + kTol) throw DomainError("u out of range [0, W)");
    if (v < -kTol || v > height + kTol) throw DomainError("v out of range [0, H]");
    return {2 * kPi * u / width - kPi, v_range / 2 - v_range * v / height};
}

Eigen::Matrix3d crop_rotation(double yaw, double pitch) {
    Eigen::Matrix3d ry;
    ry << std::cos(yaw), 0, std::sin(yaw),  //
        0, 1, 0,                            //
        -std::sin(yaw), 0, std::cos(yaw);
    Eigen::Matrix3d rx;
    rx << 1, 0, 0,                                //
        0, std::cos(pitch), -std::sin(pitch),     //
        0, std::sin(pitch), std::cos(pitch);
    return rx * ry;
}

Eigen::Vector3d ray_direction(double x, double y, const CropSpec& spec) {
    spec.validate();
    Eigen::Vector3d r(x * std::tan(spec.fov_h / 2), y * std::tan(spec.fov_v / 2), 1.0);
    Eigen::Matrix3d rot = crop_rotation(spec.yaw, spec.pitch);
    return rot * (r / r.norm());
}

SphericalCoord direction_to_spherical(const Eigen::Vector3d& d) {
    if (std::abs(d.norm() - 1.0) > 1e-6) throw DomainError("direction must be unit length");
    double dy = std::clamp(d.y(), -1.0, 1.0);
    return {std::atan2(d.x(), d.z()), std::asin(dy)};
}

std::pair<double, double> pixel_center_to_normalized(int i, int j, int out_w, int out_h) {
    return {2.0 * (i + 0.5) / out_w - 1.0, 1.0 - 2.0 * (j + 0.5) / out_h};
}

SamplingGrid build_sampling_grid(const CropSpec& spec, int pano_w, int pano_h, double v_range) {
    spec.validate();
    if (pano_w <= 0 || pano_h <= 0) throw DomainError("panorama size must be positive");
    if (!(v_range > 0 && v_range <= kPi + kTol)) throw DomainError("v_range must lie in (0, pi]");

    SamplingGrid grid;
    grid.width = spec.out_width;
    grid.height = spec.out_height;
    size_t n = static_cast<size_t>(grid.width) * grid.height;
    grid.u.resize(n);
    grid.v.resize(n);
    grid.valid.resize(n);

    Eigen::Matrix3d rot = crop_rotation(spec.yaw, spec.pitch);
    double th = std::tan(spec.fov_h / 2);
    double tv = std::tan(spec.fov_v / 2);
    double half = v_range / 2;

    for (int j = 0; j < spec.out_height; ++j) {
        for (int i = 0; i < spec.out_width; ++i) {
            auto [x, y] = pixel_center_to_normalized(i, j, spec.out_width, spec.out_height);
            Eigen::Vector3d r(x * th, y * tv, 1.0);
            Eigen::Vector3d d = rot * (r / r.norm());
            double lambda = std::atan2(d.x(), d.z());
            double phi = std::asin(std::clamp(d.y(), -1.0, 1.0));

            bool valid = std::abs(phi) <= half + kTol;
            double phi_c = std::clamp(phi, -half, half);
            double u = pano_w / (2 * kPi) * (lambda + kPi);
            u = std::fmod(u, static_cast<double>(pano_w));
            if (u < 0) u += pano_w;
            double v = pano_h / v_range * (half - phi_c);

            size_t k = grid.idx(i, j);
            grid.u[k] = u;
            grid.v[k] = v;
            grid.valid[k] = valid ? 1 : 0;
        }
    }
    return grid;
}

PerspectiveCrop extract_crop(const Panorama& pano, const CropSpec& spec) {
    SamplingGrid grid = build_sampling_grid(spec, pano.image.width, pano.image.height, pano.v_range);
    PerspectiveCrop crop;
    crop.spec = spec;
    crop.image = Image(spec.out_width, spec.out_height);
    crop.mask.assign(grid.u.size(), 0);
    for (int j = 0; j < spec.out_height; ++j) {
        for (int i = 0; i < spec.out_width; ++i) {
            size_t k = grid.idx(i, j);
            if (!grid.valid[k]) continue;  // stays black, mask 0
            crop.mask[k] = 1;
            for (int c = 0; c < 3; ++c) {
                double s = sample_bilinear(pano.image, grid.u[k], grid.v[k], c, /*wrap_x=*/true);
                crop.image.at(i, j, c) =
                    static_cast<uint8_t>(std::lround(std::clamp(s, 0.0, 255.0)));
            }
        }
    }
    return crop;
}

std::vector<PerspectiveCrop> e2p_transform(const Panorama& pano,
                                           const std::vector<CropSpec>& specs) {
    if (specs.empty()) throw UsageError("e2p_transform needs at least one crop spec");
    std::vector<PerspectiveCrop> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(extract_crop(pano, s));
    return out;
}

std::vector<CropSpec> default_crop_specs(int out_w, int out_h) {
    std::vector<CropSpec> specs;
    for (double yaw : {-3 * kPi / 4, -kPi / 4, kPi / 4, 3 * kPi / 4}) {
        CropSpec s;
        s.yaw = yaw;
        s.pitch = 0.0;
        s.fov_h = kPi / 2;
        s.fov_v = kPi / 2;
        s.out_width = out_w;
        s.out_height = out_h;
        specs.push_back(s);
    }
    return specs;
}

int default_crop_for_longitude(double lambda) {
    // intervals [-pi,-pi/2), [-pi/2,0), [0,pi/2), [pi/2,pi]; the last one is
    // closed on the right, so lambda = pi is not folded onto -pi.
    double l = lambda;
    if (l < -kPi || l > kPi) l = wrap_longitude(l);
    if (l >= kPi) return 3;
    int idx = static_cast<int>(std::floor((l + kPi) / (kPi / 2)));
    return std::clamp(idx, 0, 3);
}

bool project_to_crop(const SphericalCoord& c, const CropSpec& spec, double* px, double* py) {
    spec.validate();
    Eigen::Vector3d d(std::cos(c.latitude) * std::sin(c.longitude), std::sin(c.latitude),
                      std::cos(c.latitude) * std::cos(c.longitude));
    Eigen::Matrix3d rot = crop_rotation(spec.yaw, spec.pitch);
    Eigen::Vector3d cam = rot.transpose() * d;
    if (cam.z() <= 0) return false;
    double x = cam.x() / cam.z() / std::tan(spec.fov_h / 2);
    double y = cam.y() / cam.z() / std::tan(spec.fov_v / 2);
    if (x < -1 || x > 1 || y < -1 || y > 1) return false;
    // invert x = 2(i+0.5)/W - 1, y = 1 - 2(j+0.5)/H
    if (px) *px = (x + 1) * spec.out_width / 2 - 0.5;
    if (py) *py = (1 - y) * spec.out_height / 2 - 0.5;
    return true;
}

}  // namespace geo2::e2p
