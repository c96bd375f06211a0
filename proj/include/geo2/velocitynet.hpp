#pragma once

#include <cstdint>
#include <vector>

#include "geo2/autograd.hpp"
#include "geo2/nn.hpp"

namespace geo2::flow {

using ad::Mat;
using ad::Parameter;
using ad::Tape;
using ad::Var;

// Anything that can evaluate a conditional velocity at (x, t, c). Analytic
// fields implement this directly in tests; the learned network below is the
// production implementation.
struct VelocityField {
    virtual ~VelocityField() = default;
    virtual Mat velocity(const Mat& x, double t, const Eigen::VectorXd& c) = 0;
};

struct VelocityNetConfig {
    int channels = 192;   // latent feature size per token
    int tokens = 36;      // latent grid positions
    int hidden = 128;
    int depth = 4;
    int heads = 4;
    int head_hidden = 256;  // refinement head width
    int cond_dim = 128;
    int mlp_ratio = 2;
    uint64_t seed = 404;
    // full-scale preset: depth 28, hidden 1152, head_hidden 2048, heads 16
    void validate() const;
};

// Transformer velocity model: token projection with learned positions,
// adaptively normalized attention/MLP blocks driven by the fused
// time-and-condition vector, and a two-layer refinement head whose last
// layer starts at zero so the untrained field is exactly zero.
class VelocityNet : public VelocityField {
  public:
    explicit VelocityNet(const VelocityNetConfig& cfg);

    Var forward(Tape& t, Var x, double time, const Eigen::VectorXd& c);
    Mat velocity(const Mat& x, double time, const Eigen::VectorXd& c) override;

    std::vector<Parameter*> params();
    const VelocityNetConfig cfg;

  private:
    struct Block {
        nn::Linear modulation;  // cond -> 6*hidden, zero initialized
        nn::MultiheadAttention attn;
        nn::Linear mlp_in, mlp_out;
    };

    nn::Linear cond_proj_;
    nn::Linear in_proj_;
    Parameter pos_;
    std::vector<Block> blocks_;
    nn::Linear final_mod_;  // cond -> 2*hidden, zero initialized
    nn::Linear head_in_, head_out_;
};

}  // namespace geo2::flow
