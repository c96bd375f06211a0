#pragma once

#include <map>
#include <string>
#include <vector>

#include "geo2/geoflow.hpp"
#include "geo2/geomap.hpp"
#include "geo2/image.hpp"

namespace geo2::eval {

using ad::Mat;

struct RetrievalReport {
    std::map<int, double> r_at;  // K -> fraction of queries answered in the top K
    double r_at_1pct = 0;        // K = ceil(N/100)
    double hit_rate = 0;         // top-1 membership in the positive set
    int n_queries = 0;
    int n_references = 0;
    std::string json() const;
};

// fraction of queries with at least one positive among their K nearest
// references; banks hold unit-norm rows, positives index into the reference
// bank and must be non-empty per query
double recall_at_k(const Mat& queries, const Mat& refs,
                   const std::vector<std::vector<int>>& positives, int k);

// fraction of queries whose single nearest reference lies in the positive set
double hit_rate(const Mat& queries, const Mat& refs,
                const std::vector<std::vector<int>>& positives);

RetrievalReport retrieval_report(const Mat& queries, const Mat& refs,
                                 const std::vector<std::vector<int>>& positives,
                                 const std::vector<int>& ks);

struct ImageQualityReport {
    double mse = 0;
    double psnr = 0;  // +inf for identical images; serialized as the string "inf"
    double ssim = 0;
    std::string json() const;
};

double mse(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b, double max_value = 255.0);
// uniform 8x8 window, K1 = 0.01, K2 = 0.03, dynamic range 255, per channel
// then averaged; images must be at least the window size
double ssim(const Image& a, const Image& b);
ImageQualityReport image_quality(const Image& a, const Image& b, double max_value = 255.0);

// One seed-fixed standard-normal pattern scaled by each sigma. The clipped
// rows describe the 8-bit images actually produced; psnr_float tracks the
// unclipped float pathway where each sigma doubling costs exactly
// 20*log10(2) dB. Shifts roll rows circularly by whole pixels, no noise.
struct DegradationCurves {
    std::vector<double> sigmas;
    std::vector<double> psnr_clipped, ssim_clipped, psnr_float;
    std::vector<int> shifts;
    std::vector<double> shift_psnr, shift_ssim;
    std::string json() const;
};

DegradationCurves degradation_sweep(const Image& img, const std::vector<double>& sigmas,
                                    const std::vector<int>& shifts, uint64_t seed = 1234);

// circular vertical roll: output row y reads input row (y - shift) mod height
Image roll_rows(const Image& img, int shift);

struct AblationRow {
    int steps = 0;
    double mse = 0;
    double psnr = 0;
    double ssim = 0;
    double wall_ms = 0;  // timing only; excluded from determinism claims
};

std::string ablation_json(const std::vector<AblationRow>& rows);

// synthesizes every (input, target) pair once per step count and pools the
// metrics; psnr derives from the pooled mse
std::vector<AblationRow> ode_step_ablation(const std::vector<std::pair<Image, Image>>& pairs,
                                           flow::Direction dir, geomap::GeoMapModel& model,
                                           const flow::SpaceToDepthCodec& codec,
                                           flow::VelocityNet& net,
                                           const std::vector<int>& steps_list,
                                           double pano_v_range = kPi);

}  // namespace geo2::eval
