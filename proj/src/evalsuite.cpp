#include "geo2/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <random>

#include "geo2/common.hpp"

namespace geo2::eval {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

json finite_or_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

void check_banks(const Mat& queries, const Mat& refs,
                 const std::vector<std::vector<int>>& positives) {
    if (queries.rows() == 0 || refs.rows() == 0)
        throw UsageError("retrieval: empty query or reference bank");
    if (queries.cols() != refs.cols())
        throw UsageError("retrieval: query and reference dimensions differ");
    if (positives.size() != static_cast<size_t>(queries.rows()))
        throw UsageError("retrieval: one positive set per query required");
    for (const auto& ps : positives) {
        if (ps.empty()) throw UsageError("retrieval: empty positive set");
        for (int p : ps)
            if (p < 0 || p >= refs.rows()) throw UsageError("retrieval: positive out of range");
    }
}

void check_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw UsageError("image metric: shape mismatch");
    if (a.width == 0 || a.height == 0) throw UsageError("image metric: empty image");
}

}  // namespace

double recall_at_k(const Mat& queries, const Mat& refs,
                   const std::vector<std::vector<int>>& positives, int k) {
    check_banks(queries, refs, positives);
    if (k < 1 || k > refs.rows()) throw UsageError("recall_at_k: K out of range");
    int hits = 0;
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        std::vector<int> order = geomap::retrieve(queries.row(q).transpose(), refs);
        bool hit = false;
        for (int r = 0; r < k && !hit; ++r)
            hit = std::find(positives[q].begin(), positives[q].end(), order[r]) !=
                  positives[q].end();
        hits += hit;
    }
    return static_cast<double>(hits) / static_cast<double>(queries.rows());
}

double hit_rate(const Mat& queries, const Mat& refs,
                const std::vector<std::vector<int>>& positives) {
    return recall_at_k(queries, refs, positives, 1);
}

RetrievalReport retrieval_report(const Mat& queries, const Mat& refs,
                                 const std::vector<std::vector<int>>& positives,
                                 const std::vector<int>& ks) {
    RetrievalReport rep;
    rep.n_queries = static_cast<int>(queries.rows());
    rep.n_references = static_cast<int>(refs.rows());
    for (int k : ks) rep.r_at[k] = recall_at_k(queries, refs, positives, k);
    int one_pct = static_cast<int>((refs.rows() + 99) / 100);
    rep.r_at_1pct = recall_at_k(queries, refs, positives, std::max(1, one_pct));
    rep.hit_rate = hit_rate(queries, refs, positives);
    return rep;
}

std::string RetrievalReport::json() const {
    nlohmann::json r;
    for (const auto& [k, v] : r_at) r[std::to_string(k)] = v;
    nlohmann::json j{{"kind", "retrieval"},       {"r_at", r},
                     {"r_at_1pct", r_at_1pct},    {"hit_rate", hit_rate},
                     {"n_queries", n_queries},    {"n_references", n_references}};
    return j.dump();
}

double mse(const Image& a, const Image& b) {
    check_same_shape(a, b);
    double acc = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b, double max_value) {
    if (!(max_value > 0)) throw UsageError("psnr: max_value must be positive");
    double err = mse(a, b);
    if (err == 0.0) return kInf;
    return 10.0 * std::log10(max_value * max_value / err);
}

double ssim(const Image& a, const Image& b) {
    check_same_shape(a, b);
    constexpr int kWin = 8;
    if (a.width < kWin || a.height < kWin) throw UsageError("ssim: image smaller than the window");
    constexpr double kL = 255.0;
    constexpr double kC1 = (0.01 * kL) * (0.01 * kL);
    constexpr double kC2 = (0.03 * kL) * (0.03 * kL);
    const double inv_n = 1.0 / (kWin * kWin);

    double channel_sum = 0;
    for (int c = 0; c < 3; ++c) {
        double total = 0;
        int windows = 0;
        for (int y0 = 0; y0 + kWin <= a.height; ++y0) {
            for (int x0 = 0; x0 + kWin <= a.width; ++x0) {
                double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                for (int y = y0; y < y0 + kWin; ++y)
                    for (int x = x0; x < x0 + kWin; ++x) {
                        double va = a.at(x, y, c), vb = b.at(x, y, c);
                        sx += va;
                        sy += vb;
                        sxx += va * va;
                        syy += vb * vb;
                        sxy += va * vb;
                    }
                double mx = sx * inv_n, my = sy * inv_n;
                double vx = sxx * inv_n - mx * mx;
                double vy = syy * inv_n - my * my;
                double cov = sxy * inv_n - mx * my;
                total += ((2 * mx * my + kC1) * (2 * cov + kC2)) /
                         ((mx * mx + my * my + kC1) * (vx + vy + kC2));
                ++windows;
            }
        }
        channel_sum += total / windows;
    }
    return channel_sum / 3.0;
}

ImageQualityReport image_quality(const Image& a, const Image& b, double max_value) {
    ImageQualityReport r;
    r.mse = mse(a, b);
    r.psnr = psnr(a, b, max_value);
    r.ssim = ssim(a, b);
    return r;
}

std::string ImageQualityReport::json() const {
    nlohmann::json j{
        {"kind", "image_quality"}, {"mse", mse}, {"psnr", finite_or_inf(psnr)}, {"ssim", ssim}};
    return j.dump();
}

Image roll_rows(const Image& img, int shift) {
    if (img.height == 0) return img;
    int h = img.height;
    int s = ((shift % h) + h) % h;
    Image out(img.width, img.height);
    for (int y = 0; y < h; ++y) {
        int src = (y - s + h) % h;
        std::copy_n(&img.data[static_cast<size_t>(src) * img.width * 3],
                    static_cast<size_t>(img.width) * 3,
                    &out.data[static_cast<size_t>(y) * img.width * 3]);
    }
    return out;
}

DegradationCurves degradation_sweep(const Image& img, const std::vector<double>& sigmas,
                                    const std::vector<int>& shifts, uint64_t seed) {
    for (size_t i = 0; i < sigmas.size(); ++i) {
        if (sigmas[i] < 0) throw UsageError("degradation: sigmas must be non-negative");
        if (i && sigmas[i] < sigmas[i - 1]) throw UsageError("degradation: sigmas must ascend");
    }
    DegradationCurves out;
    out.sigmas = sigmas;
    out.shifts = shifts;

    // one fixed pattern shared by every sigma so the float-path mse is
    // exactly sigma^2 * mean(n^2)
    std::mt19937_64 rng(stream_seed(seed, "degradation-noise"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> pattern(img.data.size());
    for (double& v : pattern) v = gauss(rng);

    for (double sigma : sigmas) {
        Image degraded(img.width, img.height);
        double float_acc = 0;
        for (size_t i = 0; i < img.data.size(); ++i) {
            double noise = sigma * pattern[i];
            float_acc += noise * noise;
            double v = std::round(static_cast<double>(img.data[i]) + noise);
            degraded.data[i] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
        }
        double float_mse = float_acc / static_cast<double>(img.data.size());
        out.psnr_float.push_back(float_mse == 0.0 ? kInf
                                                  : 10.0 * std::log10(255.0 * 255.0 / float_mse));
        out.psnr_clipped.push_back(psnr(img, degraded, 255.0));
        out.ssim_clipped.push_back(ssim(img, degraded));
    }
    for (int s : shifts) {
        Image rolled = roll_rows(img, s);
        out.shift_psnr.push_back(psnr(img, rolled, 255.0));
        out.shift_ssim.push_back(ssim(img, rolled));
    }
    return out;
}

std::string DegradationCurves::json() const {
    auto arr = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(finite_or_inf(x));
        return a;
    };
    nlohmann::json j{{"kind", "degradation"},
                     {"sigmas", sigmas},
                     {"psnr_clipped", arr(psnr_clipped)},
                     {"ssim_clipped", arr(ssim_clipped)},
                     {"psnr_float", arr(psnr_float)},
                     {"shifts", shifts},
                     {"shift_psnr", arr(shift_psnr)},
                     {"shift_ssim", arr(shift_ssim)}};
    return j.dump();
}

std::vector<AblationRow> ode_step_ablation(const std::vector<std::pair<Image, Image>>& pairs,
                                           flow::Direction dir, geomap::GeoMapModel& model,
                                           const flow::SpaceToDepthCodec& codec,
                                           flow::VelocityNet& net,
                                           const std::vector<int>& steps_list,
                                           double pano_v_range) {
    if (pairs.empty()) throw UsageError("ode ablation: no evaluation pairs");
    std::vector<AblationRow> rows;
    for (int steps : steps_list) {
        flow::SamplerConfig sampler{steps, dir};
        sampler.validate();
        AblationRow row;
        row.steps = steps;
        double mse_acc = 0, ssim_acc = 0;
        auto t0 = std::chrono::steady_clock::now();
        for (const auto& [input, target] : pairs) {
            Image out = flow::synthesize(input, dir, model, codec, net, sampler, pano_v_range);
            Image ref = (target.width == out.width && target.height == out.height)
                            ? target
                            : resize_bilinear(target, out.width, out.height);
            mse_acc += mse(out, ref);
            ssim_acc += ssim(out, ref);
        }
        auto t1 = std::chrono::steady_clock::now();
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        row.mse = mse_acc / static_cast<double>(pairs.size());
        row.psnr = row.mse == 0.0 ? kInf : 10.0 * std::log10(255.0 * 255.0 / row.mse);
        row.ssim = ssim_acc / static_cast<double>(pairs.size());
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : rows)
        list.push_back({{"steps", r.steps},
                        {"mse", r.mse},
                        {"psnr", finite_or_inf(r.psnr)},
                        {"ssim", r.ssim},
                        {"wall_ms", r.wall_ms}});
    nlohmann::json j{{"kind", "ode_steps"}, {"rows", list}};
    return j.dump();
}

}  // namespace geo2::eval
