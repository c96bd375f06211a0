#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geo2/common.hpp"
#include "geo2/e2p.hpp"
#include "geo2/image.hpp"

namespace geo2::synth {

enum class GroundTexture { grass, asphalt, sand };

struct Landmark {
    double azimuth;    // radians in [-pi, pi)
    double distance;   // meters from the camera
    std::array<uint8_t, 3> color;
    double radius;     // footprint radius, meters
};

struct SceneSpec {
    uint64_t seed = 0;
    std::vector<Landmark> landmarks;
    GroundTexture texture = GroundTexture::grass;
};

// Meters from scene center to the satellite image edge; landmarks always fit.
inline constexpr double kSatelliteExtent = 32.0;
// Camera height above ground, meters; sets where a landmark's blob sits
// relative to the horizon in the panorama.
inline constexpr double kCameraHeight = 1.0;

SceneSpec generate_scene(uint64_t seed);

// Perturbed copy used by the many_to_one protocol: same landmark colors,
// azimuths and distances nudged, fresh render noise.
SceneSpec jitter_scene(const SceneSpec& base, uint64_t jitter_seed);

// Blob center latitude and angular radius as seen from the camera. Both are
// closed-form in (distance, radius); the cross-view checker re-derives them.
double landmark_center_latitude(double distance);
double landmark_angular_radius(const Landmark& lm);

Image render_satellite(const SceneSpec& scene, int size);
e2p::Panorama render_panorama(const SceneSpec& scene, int width, int height, double v_range);

enum class Protocol { one_to_one, many_to_one };

struct ManifestEntry {
    std::string id;
    std::string ground;     // path relative to the manifest directory
    std::string satellite;  // path relative to the manifest directory
    std::vector<std::string> positives;  // satellite ids
    std::string split;      // train | val | test
};

struct DatasetManifest {
    std::filesystem::path root;
    Protocol protocol = Protocol::one_to_one;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split_entries(const std::string& split) const;
};

struct BuildOptions {
    int n_train = 8;
    int n_val = 0;
    int n_test = 0;
    uint64_t seed = 0;
    Protocol protocol = Protocol::one_to_one;
    int clones = 2;  // panoramas per satellite in many_to_one mode
    int sat_size = 256;
    int pano_width = 512;
    int pano_height = 128;
    double v_range = kPi / 2;
};

// Scene for global index i of a dataset with root seed `seed`; clone j of
// that scene under the many_to_one protocol. Exposed so tests can reconstruct
// the exact geometry behind any generated image.
SceneSpec dataset_scene(uint64_t seed, int index);
SceneSpec dataset_clone_scene(uint64_t seed, int index, int clone);

// Renders all images under out_dir (ground/, satellite/) and writes
// manifest.jsonl with keys id, ground, satellite, positives, split.
DatasetManifest build_dataset(const BuildOptions& opt, const std::filesystem::path& out_dir);

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

enum class RealDataset { cvusa, cvact, vigor };

// Maps the on-disk layout of the public datasets into the manifest shape.
// cvusa: splits/train-19zl.csv and splits/val-19zl.csv, "satellite,ground"
// per line. cvact: streetview/*_grdView.png paired with
// satview_polish/*_satView_polish.png by stem. vigor: splits/<city>/
// same_area_balanced_{train,test}.txt, "pano sat [dx dy] sat [dx dy] ...".
DatasetManifest load_real_layout(const std::filesystem::path& root, RealDataset dataset);

}  // namespace geo2::synth
