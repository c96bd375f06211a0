#include "geo2/velocitynet.hpp"

#include <string>

#include "geo2/common.hpp"

namespace geo2::flow {

void VelocityNetConfig::validate() const {
    if (channels < 1 || tokens < 1 || hidden < 1 || depth < 1 || head_hidden < 1 ||
        cond_dim < 1 || mlp_ratio < 1)
        throw ConfigError("velocity net: all sizes must be positive");
    if (hidden % heads != 0) throw ConfigError("velocity net: hidden must divide by head count");
    if (hidden % 2 != 0) throw ConfigError("velocity net: hidden must be even for time features");
}

VelocityNet::VelocityNet(const VelocityNetConfig& c)
    : cfg(c),
      cond_proj_("flow.cond", c.cond_dim, c.hidden, c.seed),
      in_proj_("flow.in", c.channels, c.hidden, c.seed),
      pos_("flow.pos",
           nn::randn(c.tokens, c.hidden, nn::param_seed(c.seed, "flow.pos"), 0.02)),
      final_mod_("flow.final_mod", c.hidden, 2 * c.hidden, c.seed, /*zero_init=*/true),
      head_in_("flow.head_in", c.hidden, c.head_hidden, c.seed),
      head_out_("flow.head_out", c.head_hidden, c.channels, c.seed, /*zero_init=*/true) {
    cfg.validate();
    for (int i = 0; i < c.depth; ++i) {
        std::string b = "flow.block" + std::to_string(i);
        blocks_.push_back({nn::Linear(b + ".mod", c.hidden, 6 * c.hidden, c.seed,
                                      /*zero_init=*/true),
                           nn::MultiheadAttention(b + ".attn", c.hidden, c.heads, c.seed),
                           nn::Linear(b + ".mlp_in", c.hidden, c.mlp_ratio * c.hidden, c.seed),
                           nn::Linear(b + ".mlp_out", c.mlp_ratio * c.hidden, c.hidden, c.seed)});
    }
}

namespace {

Var ln_noaffine(Tape& t, Var x, int dim) {
    return ad::layer_norm_rows(x, t.constant(ad::Mat::Ones(1, dim)),
                               t.constant(ad::Mat::Zero(1, dim)), 1e-5);
}

// x * (1 + scale) + shift, scale and shift broadcast over token rows
Var modulate(Tape& t, Var x, Var shift, Var scale, int dim) {
    Var one_plus = ad::add(t.constant(ad::Mat::Ones(1, dim)), scale);
    return ad::add_rowvec(ad::mul_rowvec(x, one_plus), shift);
}

}  // namespace

Var VelocityNet::forward(Tape& t, Var x, double time, const Eigen::VectorXd& c) {
    if (time < 0.0 || time > 1.0) throw DomainError("velocity net: t must lie in [0, 1]");
    if (x.rows() != cfg.tokens || x.cols() != cfg.channels)
        throw ConfigError("velocity net: latent shape mismatch");
    if (c.size() != cfg.cond_dim) throw ConfigError("velocity net: condition dim mismatch");

    Var crow = t.constant(c.transpose());
    Var cond = ad::silu(ad::add(cond_proj_.forward(t, crow),
                                t.constant(nn::sinusoidal_embedding(time, cfg.hidden))));

    Var h = ad::add(in_proj_.forward(t, x), t.param(pos_));
    for (auto& blk : blocks_) {
        Var mod = blk.modulation.forward(t, cond);
        auto part = [&](int i) { return ad::block(mod, 0, i * cfg.hidden, 1, cfg.hidden); };

        Var m1 = modulate(t, ln_noaffine(t, h, cfg.hidden), part(0), part(1), cfg.hidden);
        Var a = blk.attn.forward(t, m1, m1);
        h = ad::add(h, ad::mul_rowvec(a, part(2)));

        Var m2 = modulate(t, ln_noaffine(t, h, cfg.hidden), part(3), part(4), cfg.hidden);
        Var z = blk.mlp_out.forward(t, ad::silu(blk.mlp_in.forward(t, m2)));
        h = ad::add(h, ad::mul_rowvec(z, part(5)));
    }

    Var fmod = final_mod_.forward(t, cond);
    Var shift = ad::block(fmod, 0, 0, 1, cfg.hidden);
    Var scale = ad::block(fmod, 0, cfg.hidden, 1, cfg.hidden);
    Var m = modulate(t, ln_noaffine(t, h, cfg.hidden), shift, scale, cfg.hidden);
    return head_out_.forward(t, ad::silu(head_in_.forward(t, m)));
}

Mat VelocityNet::velocity(const Mat& x, double time, const Eigen::VectorXd& c) {
    Tape t;
    return forward(t, t.constant(x), time, c).value();
}

std::vector<Parameter*> VelocityNet::params() {
    std::vector<Parameter*> ps;
    cond_proj_.collect(ps);
    in_proj_.collect(ps);
    ps.push_back(&pos_);
    for (auto& blk : blocks_) {
        blk.modulation.collect(ps);
        blk.attn.collect(ps);
        blk.mlp_in.collect(ps);
        blk.mlp_out.collect(ps);
    }
    final_mod_.collect(ps);
    head_in_.collect(ps);
    head_out_.collect(ps);
    return ps;
}

}  // namespace geo2::flow
