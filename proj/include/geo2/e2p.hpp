#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "geo2/image.hpp"

namespace geo2::e2p {

// Equirectangular panorama. Longitude spans [-pi, pi) over the width,
// latitude spans [-v_range/2, v_range/2] over the height, latitude
// decreasing downward (top row is the highest latitude).
struct Panorama {
    Image image;
    double v_range;
};

struct SphericalCoord {
    double longitude;  // radians, [-pi, pi)
    double latitude;   // radians, [-v_range/2, v_range/2]
};

struct CropSpec {
    double yaw = 0.0;    // rotation about the vertical axis
    double pitch = 0.0;  // positive looks downward
    double fov_h;        // horizontal field of view, (0, pi)
    double fov_v;        // vertical field of view, (0, pi)
    int out_width;
    int out_height;

    void validate() const;
};

// Precomputed source coordinates for one crop: panorama pixel position
// (u, v) per output pixel plus a coverage flag (latitude inside the
// panorama's vertical range).
struct SamplingGrid {
    int width = 0;
    int height = 0;
    std::vector<double> u;
    std::vector<double> v;
    std::vector<uint8_t> valid;

    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
};

struct PerspectiveCrop {
    Image image;
    std::vector<uint8_t> mask;  // 1 where the crop ray hit panorama coverage
    CropSpec spec;
};

// Forward pixel mapping: u = W/(2 pi) (lambda + pi), v = (H/v_range)(v_range/2 - phi).
// Throws DomainError when the coordinate lies outside the declared ranges.
std::pair<double, double> spherical_to_pixel(const SphericalCoord& c, int width, int height,
                                             double v_range);

// Inverse of spherical_to_pixel for u in [0, W), v in [0, H].
SphericalCoord pixel_to_spherical(double u, double v, int width, int height, double v_range);

// R = R_x(pitch) * R_y(yaw); columns are the camera axes in world coordinates.
Eigen::Matrix3d crop_rotation(double yaw, double pitch);

// World-space unit ray through normalized image point (x, y) in [-1, 1]^2,
// +x right, +y toward the top row. r = (x tan(fh/2), y tan(fv/2), 1),
// d = R r / ||r||.
Eigen::Vector3d ray_direction(double x, double y, const CropSpec& spec);

// lambda = atan2(d_x, d_z), phi = asin(d_y). Requires ||d|| = 1 within 1e-6.
SphericalCoord direction_to_spherical(const Eigen::Vector3d& d);

// Normalized image coordinates of the pixel-center grid: x = 2(i+0.5)/W - 1,
// y = 1 - 2(j+0.5)/H, so row j=0 has the largest y.
std::pair<double, double> pixel_center_to_normalized(int i, int j, int out_w, int out_h);

// Sampling grid for a whole crop. Longitude wraps modulo the panorama width,
// out-of-range latitudes clamp and clear the validity flag.
SamplingGrid build_sampling_grid(const CropSpec& spec, int pano_w, int pano_h, double v_range);

// Bilinear resampling of the panorama through the grid. Invalid pixels are
// black with mask = 0.
PerspectiveCrop extract_crop(const Panorama& pano, const CropSpec& spec);

std::vector<PerspectiveCrop> e2p_transform(const Panorama& pano,
                                           const std::vector<CropSpec>& specs);

// The four standard crops: yaws {-3pi/4, -pi/4, pi/4, 3pi/4}, pitch 0,
// both fields of view pi/2. At pitch 0 their longitude intervals
// [yaw - pi/4, yaw + pi/4) tile [-pi, pi) exactly.
std::vector<CropSpec> default_crop_specs(int out_w, int out_h);

// Index of the default crop whose longitude interval contains lambda,
// intervals closed on the left and open on the right, the last one closed.
int default_crop_for_longitude(double lambda);

// Where a spherical point lands inside a crop, in continuous pixel
// coordinates of the crop image. Returns false when the point is behind the
// camera or outside the crop frustum.
bool project_to_crop(const SphericalCoord& c, const CropSpec& spec, double* px, double* py);

}  // namespace geo2::e2p
