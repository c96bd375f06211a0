#include "geo2/geoflow.hpp"

#include <cmath>

#include "geo2/common.hpp"
#include "geo2/objectives.hpp"

namespace geo2::flow {

Direction parse_direction(const std::string& name) {
    if (name == "g2s") return Direction::g2s;
    if (name == "s2g") return Direction::s2g;
    throw UsageError("unknown direction '" + name + "', expected g2s or s2g");
}

void SamplerConfig::validate() const {
    if (steps < 1) throw ConfigError("sampler: steps must be at least 1");
}

Mat interpolate(const Mat& xg, const Mat& xs, double t) {
    if (xg.rows() != xs.rows() || xg.cols() != xs.cols())
        throw UsageError("interpolate: shape mismatch");
    if (t < 0.0 || t > 1.0) throw DomainError("interpolate: t must lie in [0, 1]");
    return (1.0 - t) * xg + t * xs;
}

Mat integrate(const Mat& x_start, const Eigen::VectorXd& c, const SamplerConfig& cfg,
              VelocityField& net) {
    cfg.validate();
    const bool fwd = cfg.direction == Direction::g2s;
    const double n = static_cast<double>(cfg.steps);
    Mat x = x_start;
    for (int k = 0; k < cfg.steps; ++k) {
        double t = fwd ? k / n : 1.0 - k / n;
        // telescoping step so the time grid sums to exactly 1
        double dt = (k + 1) / n - k / n;
        Mat g = net.velocity(x, t, c);
        if (g.rows() != x.rows() || g.cols() != x.cols())
            throw ConfigError("integrate: field shape mismatch");
        if (fwd)
            x += dt * g;
        else
            x -= dt * g;
        if (!x.allFinite())
            throw NumericError("integrate: non-finite state at step " + std::to_string(k));
    }
    return x;
}

double accumulate_gradients(VelocityNet& net, const std::vector<FlowSample>& batch,
                            std::mt19937_64& rng, const TrainStepOptions& opts) {
    if (batch.empty()) throw UsageError("train step: empty batch");
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        const FlowSample& s = batch[i];
        double t = opts.fixed_t ? *opts.fixed_t : uniform(rng);
        Mat xt = interpolate(s.xg, s.xs, t);
        ad::Tape tape;
        Var pred = net.forward(tape, tape.constant(xt), t, s.c);
        // negated targets swap the path endpoints: -(xs - xg) = xg - xs
        Var loss = opts.negate_targets
                       ? objectives::flow_loss(tape, pred, s.xs, s.xg, opts.norm_reduction)
                       : objectives::flow_loss(tape, pred, s.xg, s.xs, opts.norm_reduction);
        double value = loss.value()(0, 0);
        if (!std::isfinite(value))
            throw NumericError("train step: non-finite loss at sample " + std::to_string(i));
        total += value;
        tape.backward(ad::scale(loss, inv_b));
    }
    return total * inv_b;
}

namespace {

template <typename Opt>
double step_impl(VelocityNet& net, const std::vector<FlowSample>& batch, std::mt19937_64& rng,
                 Opt& opt, const TrainStepOptions& opts) {
    auto params = net.params();
    nn::zero_grads(params);
    double loss = accumulate_gradients(net, batch, rng, opts);
    opt.step(params);
    nn::zero_grads(params);
    return loss;
}

}  // namespace

double train_step(VelocityNet& net, const std::vector<FlowSample>& batch, std::mt19937_64& rng,
                  nn::Sgd& opt, const TrainStepOptions& opts) {
    return step_impl(net, batch, rng, opt, opts);
}

double train_step(VelocityNet& net, const std::vector<FlowSample>& batch, std::mt19937_64& rng,
                  nn::Adam& opt, const TrainStepOptions& opts) {
    return step_impl(net, batch, rng, opt, opts);
}

Image synthesize(const Image& input, Direction dir, geomap::GeoMapModel& model,
                 const SpaceToDepthCodec& codec, VelocityNet& net, const SamplerConfig& cfg,
                 double pano_v_range) {
    if (codec.channels() != net.cfg.channels)
        throw ConfigError("synthesize: codec channels do not match the velocity net");
    int side = static_cast<int>(std::lround(std::sqrt(double(net.cfg.tokens))));
    if (side * side != net.cfg.tokens)
        throw ConfigError("synthesize: velocity net needs a square latent grid");

    // condition on the source view as given; encode a copy resized to the
    // square latent the transport operates on
    Eigen::VectorXd c = dir == Direction::g2s
                            ? model.embed_ground(e2p::Panorama{input, pano_v_range})
                            : model.embed_satellite(input);
    int img_side = side * codec.factor();
    Image resized;
    const Image* enc_in = &input;
    if (input.width != img_side || input.height != img_side) {
        resized = resize_bilinear(input, img_side, img_side);
        enc_in = &resized;
    }
    SamplerConfig run = cfg;
    run.direction = dir;
    Mat end = integrate(codec.encode(*enc_in), c, run, net);
    return codec.decode(end, side, side);
}

}  // namespace geo2::flow
