#include "geo2/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "geo2/common.hpp"

namespace geo2::synth {

namespace {

using json = nlohmann::json;

constexpr std::array<std::array<uint8_t, 3>, 12> kPalette = {{
    {230, 40, 40},
    {40, 70, 230},
    {240, 200, 40},
    {160, 40, 200},
    {40, 200, 200},
    {240, 120, 30},
    {230, 60, 160},
    {120, 230, 40},
    {140, 90, 30},
    {30, 140, 90},
    {210, 210, 210},
    {50, 50, 60},
}};

std::array<uint8_t, 3> texture_base(GroundTexture t) {
    switch (t) {
        case GroundTexture::grass: return {62, 120, 48};
        case GroundTexture::asphalt: return {96, 96, 100};
        case GroundTexture::sand: return {194, 168, 120};
    }
    return {0, 0, 0};
}

// small deterministic per-pixel noise; keeps images off flat color without a
// stored texture
int pixel_noise(uint64_t seed, int x, int y, int c) {
    uint64_t h = mix64(seed ^ mix64((static_cast<uint64_t>(x) << 24) ^
                                    (static_cast<uint64_t>(y) << 4) ^ static_cast<uint64_t>(c)));
    return static_cast<int>(h % 21) - 10;
}

uint8_t clamp8(int v) { return static_cast<uint8_t>(std::clamp(v, 0, 255)); }

std::array<uint8_t, 3> darken(std::array<uint8_t, 3> c, double f) {
    return {clamp8(static_cast<int>(c[0] * f)), clamp8(static_cast<int>(c[1] * f)),
            clamp8(static_cast<int>(c[2] * f))};
}

// Renderers accept any non-empty landmark list so tests can draw minimal
// scenes; generate_scene always emits at least 4.
void validate_scene(const SceneSpec& s) {
    if (s.landmarks.empty()) throw UsageError("scene needs at least one landmark");
    for (const auto& lm : s.landmarks) {
        if (!(lm.distance > 0)) throw UsageError("landmark distance must be positive");
        if (lm.azimuth < -kPi || lm.azimuth >= kPi) throw UsageError("landmark azimuth range");
    }
}

std::string scene_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return buf;
}

}  // namespace

SceneSpec generate_scene(uint64_t seed) {
    std::mt19937_64 rng(stream_seed(seed, "scene"));
    std::uniform_real_distribution<double> un(0.0, 1.0);

    SceneSpec s;
    s.seed = seed;
    int n = 4 + static_cast<int>(rng() % 5);  // 4..8

    // colors sampled without replacement so every landmark is identifiable
    std::array<int, kPalette.size()> order;
    for (size_t i = 0; i < kPalette.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);

    // one azimuth per stratified slot keeps landmarks apart
    double slot = 2 * kPi / n;
    for (int i = 0; i < n; ++i) {
        Landmark lm;
        lm.azimuth = -kPi + slot * (i + 0.2 + 0.6 * un(rng));
        if (lm.azimuth >= kPi) lm.azimuth -= 2 * kPi;
        lm.distance = 8.0 + 18.0 * un(rng);
        lm.radius = 1.5 + 2.0 * un(rng);
        lm.color = kPalette[order[i]];
        s.landmarks.push_back(lm);
    }
    s.texture = static_cast<GroundTexture>(rng() % 3);
    return s;
}

SceneSpec jitter_scene(const SceneSpec& base, uint64_t jitter_seed) {
    std::mt19937_64 rng(stream_seed(jitter_seed, "jitter"));
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    SceneSpec s = base;
    s.seed = stream_seed(jitter_seed, "clone-noise");
    for (auto& lm : s.landmarks) {
        lm.azimuth += 0.08 * un(rng);
        if (lm.azimuth >= kPi) lm.azimuth -= 2 * kPi;
        if (lm.azimuth < -kPi) lm.azimuth += 2 * kPi;
        lm.distance *= std::exp(0.06 * un(rng));
    }
    return s;
}

double landmark_center_latitude(double distance) { return std::atan(kCameraHeight / distance); }

double landmark_angular_radius(const Landmark& lm) { return std::atan(lm.radius / lm.distance); }

Image render_satellite(const SceneSpec& scene, int size) {
    validate_scene(scene);
    if (size < 8) throw UsageError("satellite size too small");

    auto base = texture_base(scene.texture);
    Image img(size, size);
    uint64_t nseed = stream_seed(scene.seed, "sat-noise");
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = clamp8(base[c] + pixel_noise(nseed, x, y, c));

    double scale = size / (2.0 * kSatelliteExtent);  // pixels per meter
    double cx = size / 2.0, cy = size / 2.0;

    std::vector<Landmark> order = scene.landmarks;
    std::sort(order.begin(), order.end(),
              [](const Landmark& a, const Landmark& b) { return a.distance > b.distance; });

    for (const auto& lm : order) {
        double wx = lm.distance * std::sin(lm.azimuth);
        double wy = -lm.distance * std::cos(lm.azimuth);
        double lx = cx + scale * wx;
        double ly = cy + scale * wy;
        double r = scale * lm.radius;
        auto border = darken(lm.color, 0.55);
        int x0 = std::max(0, static_cast<int>(std::floor(lx - r - 1)));
        int x1 = std::min(size - 1, static_cast<int>(std::ceil(lx + r + 1)));
        int y0 = std::max(0, static_cast<int>(std::floor(ly - r - 1)));
        int y1 = std::min(size - 1, static_cast<int>(std::ceil(ly + r + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double dx = x + 0.5 - lx, dy = y + 0.5 - ly;
                double d = std::sqrt(dx * dx + dy * dy);
                if (d > r) continue;
                img.set(x, y, d > r - 1.5 ? border : lm.color);
            }
    }
    return img;
}

e2p::Panorama render_panorama(const SceneSpec& scene, int width, int height, double v_range) {
    validate_scene(scene);
    if (width < 8 || height < 4) throw UsageError("panorama size too small");
    if (!(v_range > 0 && v_range <= kPi)) throw UsageError("v_range must lie in (0, pi]");

    Image img(width, height);
    uint64_t nseed = stream_seed(scene.seed, "pano-noise");
    auto ground = texture_base(scene.texture);
    double horizon = height / 2.0;  // latitude 0 at v = H/2

    for (int y = 0; y < height; ++y) {
        bool sky = (y + 0.5) < horizon;
        double t = sky ? (y + 0.5) / horizon : 0.0;
        for (int x = 0; x < width; ++x) {
            if (sky) {
                img.at(x, y, 0) = clamp8(static_cast<int>(70 + 90 * t));
                img.at(x, y, 1) = clamp8(static_cast<int>(110 + 80 * t));
                img.at(x, y, 2) = clamp8(static_cast<int>(190 + 40 * t));
            } else {
                for (int c = 0; c < 3; ++c)
                    img.at(x, y, c) = clamp8(ground[c] + pixel_noise(nseed, x, y, c));
            }
        }
    }

    std::vector<Landmark> order = scene.landmarks;
    std::sort(order.begin(), order.end(),
              [](const Landmark& a, const Landmark& b) { return a.distance > b.distance; });

    double px_per_lon = width / (2 * kPi);
    double px_per_lat = height / v_range;
    for (const auto& lm : order) {
        double cu = px_per_lon * (lm.azimuth + kPi);
        double phi = landmark_center_latitude(lm.distance);
        double cv = px_per_lat * (v_range / 2 - phi);
        double w = landmark_angular_radius(lm);
        double a = w * px_per_lon;  // ellipse semi-axes in pixels
        double b = w * px_per_lat;
        auto border = darken(lm.color, 0.55);
        int y0 = std::max(0, static_cast<int>(std::floor(cv - b - 1)));
        int y1 = std::min(height - 1, static_cast<int>(std::ceil(cv + b + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = 0; x < width; ++x) {
                double du = std::abs(x + 0.5 - cu);
                du = std::min(du, width - du);
                double dv = y + 0.5 - cv;
                double q = (du / a) * (du / a) + (dv / b) * (dv / b);
                if (q > 1.0) continue;
                img.set(x, y, q > 0.7 ? border : lm.color);
            }
    }
    return {std::move(img), v_range};
}

std::vector<ManifestEntry> DatasetManifest::split_entries(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == split) out.push_back(e);
    return out;
}

SceneSpec dataset_scene(uint64_t seed, int index) {
    return generate_scene(stream_seed(seed, "dataset-scene", static_cast<uint64_t>(index)));
}

SceneSpec dataset_clone_scene(uint64_t seed, int index, int clone) {
    return jitter_scene(dataset_scene(seed, index),
                        stream_seed(seed, "dataset-clone", static_cast<uint64_t>(index),
                                    static_cast<uint64_t>(clone)));
}

DatasetManifest build_dataset(const BuildOptions& opt, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    if (opt.n_train < 2) throw UsageError("need at least 2 training scenes");
    if (opt.protocol == Protocol::many_to_one && opt.clones < 1)
        throw UsageError("many_to_one needs clones >= 1");

    std::error_code ec;
    fs::create_directories(out_dir / "ground", ec);
    fs::create_directories(out_dir / "satellite", ec);
    if (!fs::exists(out_dir / "ground") || !fs::exists(out_dir / "satellite"))
        throw IoError("cannot create dataset directories under " + out_dir.string());

    DatasetManifest m;
    m.root = out_dir;
    m.protocol = opt.protocol;

    auto split_of = [&](int index) {
        if (index < opt.n_train) return "train";
        if (index < opt.n_train + opt.n_val) return "val";
        return "test";
    };

    int total = opt.n_train + opt.n_val + opt.n_test;
    std::ofstream mf(out_dir / "manifest.jsonl", std::ios::binary);
    if (!mf) throw IoError("cannot write manifest under " + out_dir.string());

    for (int i = 0; i < total; ++i) {
        SceneSpec scene = dataset_scene(opt.seed, i);
        std::string sid = scene_id(i);
        std::string sat_rel = "satellite/" + sid + ".png";
        write_png((out_dir / sat_rel).string(), render_satellite(scene, opt.sat_size));

        int clones = opt.protocol == Protocol::one_to_one ? 1 : opt.clones;
        for (int j = 0; j < clones; ++j) {
            ManifestEntry e;
            SceneSpec view;
            if (opt.protocol == Protocol::one_to_one) {
                e.id = sid;
                view = scene;
            } else {
                e.id = sid + "_" + std::to_string(j);
                view = dataset_clone_scene(opt.seed, i, j);
            }
            e.ground = "ground/" + e.id + ".png";
            e.satellite = sat_rel;
            e.positives = {sid};
            e.split = split_of(i);
            write_png((out_dir / e.ground).string(),
                      render_panorama(view, opt.pano_width, opt.pano_height, opt.v_range).image);

            json line = {{"id", e.id},
                         {"ground", e.ground},
                         {"satellite", e.satellite},
                         {"positives", e.positives},
                         {"split", e.split}};
            mf << line.dump() << "\n";
            m.entries.push_back(std::move(e));
        }
    }
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + manifest_path.string());

    DatasetManifest m;
    m.root = manifest_path.parent_path();

    std::string line;
    int lineno = 0;
    bool all_self_positive = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        for (const char* key : {"id", "ground", "satellite", "positives", "split"})
            if (!j.contains(key))
                throw ParseError("manifest line " + std::to_string(lineno) + ": missing key '" +
                                 key + "'");
        ManifestEntry e;
        e.id = j["id"].get<std::string>();
        e.ground = j["ground"].get<std::string>();
        e.satellite = j["satellite"].get<std::string>();
        e.positives = j["positives"].get<std::vector<std::string>>();
        e.split = j["split"].get<std::string>();
        if (e.positives.empty())
            throw ParseError("manifest line " + std::to_string(lineno) + ": empty positives");
        for (const auto& rel : {e.ground, e.satellite}) {
            if (!fs::exists(m.root / rel))
                throw IoError("manifest line " + std::to_string(lineno) +
                              ": missing file " + (m.root / rel).string());
        }
        if (e.positives.size() != 1 || e.positives[0] != e.id) all_self_positive = false;
        m.entries.push_back(std::move(e));
    }
    m.protocol = all_self_positive ? Protocol::one_to_one : Protocol::many_to_one;
    return m;
}

namespace {

DatasetManifest load_cvusa(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    DatasetManifest m;
    m.root = root;
    m.protocol = Protocol::one_to_one;
    struct SplitFile {
        const char* name;
        const char* split;
    };
    for (auto [name, split] : {SplitFile{"train-19zl.csv", "train"}, SplitFile{"val-19zl.csv", "val"}}) {
        fs::path p = root / "splits" / name;
        std::ifstream in(p);
        if (!in) throw IoError("cvusa split file missing: " + p.string());
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto comma = line.find(',');
            if (comma == std::string::npos)
                throw ParseError(p.string() + " line " + std::to_string(lineno) +
                                 ": expected 'satellite,ground'");
            std::string sat = line.substr(0, comma);
            std::string rest = line.substr(comma + 1);
            std::string grd = rest.substr(0, rest.find(','));
            ManifestEntry e;
            e.id = fs::path(sat).stem().string();
            e.ground = grd;
            e.satellite = sat;
            e.positives = {e.id};
            e.split = split;
            for (const auto& rel : {e.ground, e.satellite})
                if (!fs::exists(root / rel))
                    throw IoError(p.string() + " line " + std::to_string(lineno) +
                                  ": missing file " + (root / rel).string());
            m.entries.push_back(std::move(e));
        }
    }
    return m;
}

DatasetManifest load_cvact(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    DatasetManifest m;
    m.root = root;
    m.protocol = Protocol::one_to_one;
    fs::path gdir = root / "streetview";
    fs::path sdir = root / "satview_polish";
    if (!fs::is_directory(gdir) || !fs::is_directory(sdir))
        throw IoError("cvact layout needs streetview/ and satview_polish/ under " + root.string());
    std::vector<std::string> stems;
    for (const auto& f : fs::directory_iterator(gdir)) {
        std::string name = f.path().filename().string();
        auto pos = name.find("_grdView");
        if (pos != std::string::npos) stems.push_back(name.substr(0, pos));
    }
    std::sort(stems.begin(), stems.end());
    for (const auto& stem : stems) {
        ManifestEntry e;
        e.id = stem;
        e.ground = "streetview/" + stem + "_grdView.png";
        e.satellite = "satview_polish/" + stem + "_satView_polish.png";
        e.positives = {stem};
        e.split = "train";
        if (!fs::exists(root / e.satellite))
            throw IoError("cvact: missing file " + (root / e.satellite).string());
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw ParseError("cvact layout: no *_grdView images found");
    return m;
}

bool numeric_token(const std::string& t) {
    char* end = nullptr;
    std::strtod(t.c_str(), &end);
    return end && *end == '\0' && end != t.c_str();
}

DatasetManifest load_vigor(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    DatasetManifest m;
    m.root = root;
    m.protocol = Protocol::many_to_one;
    fs::path splits = root / "splits";
    if (!fs::is_directory(splits)) throw IoError("vigor layout needs splits/ under " + root.string());

    for (const auto& city_dir : fs::directory_iterator(splits)) {
        if (!city_dir.is_directory()) continue;
        std::string city = city_dir.path().filename().string();
        struct SplitFile {
            const char* name;
            const char* split;
        };
        for (auto [name, split] : {SplitFile{"same_area_balanced_train.txt", "train"},
                                   SplitFile{"same_area_balanced_test.txt", "test"}}) {
            fs::path p = city_dir.path() / name;
            if (!fs::exists(p)) continue;
            std::ifstream in(p);
            if (!in) throw IoError("cannot open " + p.string());
            std::string line;
            int lineno = 0;
            while (std::getline(in, line)) {
                ++lineno;
                if (line.empty()) continue;
                std::istringstream ss(line);
                std::string pano, tok;
                ss >> pano;
                ManifestEntry e;
                e.id = city + "/" + fs::path(pano).stem().string();
                e.ground = city + "/panorama/" + pano;
                e.split = split;
                while (ss >> tok) {
                    if (numeric_token(tok)) continue;  // per-satellite offsets
                    std::string sid = city + "/" + fs::path(tok).stem().string();
                    if (e.satellite.empty()) e.satellite = city + "/satellite/" + tok;
                    e.positives.push_back(sid);
                }
                if (e.positives.empty())
                    throw ParseError(p.string() + " line " + std::to_string(lineno) +
                                     ": no satellite tokens");
                if (!fs::exists(root / e.ground))
                    throw IoError(p.string() + " line " + std::to_string(lineno) +
                                  ": missing file " + (root / e.ground).string());
                m.entries.push_back(std::move(e));
            }
        }
    }
    if (m.entries.empty()) throw ParseError("vigor layout: no split lines found");
    return m;
}

}  // namespace

DatasetManifest load_real_layout(const std::filesystem::path& root, RealDataset dataset) {
    switch (dataset) {
        case RealDataset::cvusa: return load_cvusa(root);
        case RealDataset::cvact: return load_cvact(root);
        case RealDataset::vigor: return load_vigor(root);
    }
    throw UsageError("unknown dataset layout");
}

}  // namespace geo2::synth
