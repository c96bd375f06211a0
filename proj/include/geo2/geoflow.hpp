#pragma once

#include <optional>
#include <random>
#include <vector>

#include "geo2/codec.hpp"
#include "geo2/common.hpp"
#include "geo2/geomap.hpp"
#include "geo2/velocitynet.hpp"

namespace geo2::flow {

enum class Direction { g2s, s2g };

Direction parse_direction(const std::string& name);  // "g2s" | "s2g"

struct SamplerConfig {
    int steps = 10;
    Direction direction = Direction::g2s;
    void validate() const;
};

// optimal transport displacement path x_t = (1-t) xg + t xs
Mat interpolate(const Mat& xg, const Mat& xs, double t);

// explicit Euler with left endpoint evaluation; forward marches t = k/steps
// adding the field, reverse marches t = 1 - k/steps subtracting it
Mat integrate(const Mat& x_start, const Eigen::VectorXd& c, const SamplerConfig& cfg,
              VelocityField& net);

struct FlowSample {
    Mat xg, xs;
    Eigen::VectorXd c;
};

struct TrainStepOptions {
    bool negate_targets = false;    // regress onto -v instead of v
    std::optional<double> fixed_t;  // pin the path time instead of sampling
    bool norm_reduction = false;    // L2 norm loss instead of mean squared
};

// mean flow-matching loss over the batch with gradients accumulated into
// the network parameters; the caller owns the optimizer step
double accumulate_gradients(VelocityNet& net, const std::vector<FlowSample>& batch,
                            std::mt19937_64& rng, const TrainStepOptions& opts = {});

double train_step(VelocityNet& net, const std::vector<FlowSample>& batch, std::mt19937_64& rng,
                  nn::Sgd& opt, const TrainStepOptions& opts = {});
double train_step(VelocityNet& net, const std::vector<FlowSample>& batch, std::mt19937_64& rng,
                  nn::Adam& opt, const TrainStepOptions& opts = {});

// one-image synthesis: embed the source view as the condition, encode it as
// the start state, transport, decode
Image synthesize(const Image& input, Direction dir, geomap::GeoMapModel& model,
                 const SpaceToDepthCodec& codec, VelocityNet& net, const SamplerConfig& cfg,
                 double pano_v_range = kPi);

}  // namespace geo2::flow
