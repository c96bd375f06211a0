#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geo2/autograd.hpp"

namespace geo2::nn {

using ad::Mat;
using ad::Parameter;
using ad::Tape;
using ad::Var;

// Seeded gaussian init; every parameter derives its stream from
// (model seed, parameter name) so construction order never matters.
Mat randn(Eigen::Index rows, Eigen::Index cols, uint64_t seed, double stddev = 1.0);
uint64_t param_seed(uint64_t model_seed, const std::string& name);

struct Linear {
    Parameter W;  // in x out
    Parameter b;  // 1 x out
    Linear() = default;
    Linear(const std::string& name, int in, int out, uint64_t model_seed, bool zero_init = false);

    Var forward(Tape& t, Var x);
    Mat forward_plain(const Mat& x) const;
    void collect(std::vector<Parameter*>& out);
};

struct Conv2d {
    Parameter W;  // Cout x Cin*k*k
    Parameter b;  // Cout x 1
    int kernel = 3, stride = 1, pad = 1;
    Conv2d() = default;
    Conv2d(const std::string& name, int cin, int cout, int kernel, int stride, int pad,
           uint64_t model_seed);

    ad::ConvGeom geom(int in_h, int in_w) const { return {in_h, in_w, kernel, stride, pad}; }
    Var forward(Tape& t, Var x, int in_h, int in_w);
    Mat forward_plain(const Mat& x, int in_h, int in_w) const;
    void collect(std::vector<Parameter*>& out);
};

struct LayerNorm {
    Parameter gamma;  // 1 x D
    Parameter beta;   // 1 x D
    double eps = 1e-5;
    LayerNorm() = default;
    LayerNorm(const std::string& name, int dim);

    Var forward(Tape& t, Var x);
    void collect(std::vector<Parameter*>& out);
};

// Scaled dot-product multi-head attention, query and key/value token
// matrices as rows. Throws NumericError on non-finite attention logits.
// When attn_out is given, per-head softmax matrices are copied into it.
struct MultiheadAttention {
    int heads = 1;
    Linear wq, wk, wv, wo;
    MultiheadAttention() = default;
    MultiheadAttention(const std::string& name, int dim, int heads, uint64_t model_seed);

    Var forward(Tape& t, Var query, Var keyvalue, std::vector<Mat>* attn_out = nullptr);
    void collect(std::vector<Parameter*>& out);
};

// cos/sin features of a scalar in [0, 1]; dim must be even
Mat sinusoidal_embedding(double t, int dim, double max_period = 10000.0);

// bilinear resize of planar feature maps (C, h*w) -> (C, oh*ow)
Mat resize_planar(const Mat& x, int h, int w, int oh, int ow);

struct Sgd {
    double lr = 1e-3;
    void step(const std::vector<Parameter*>& params);
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long t = 0;
    void step(const std::vector<Parameter*>& params);
};

void zero_grads(const std::vector<Parameter*>& params);

// order-sensitive content hash over parameter values; freeze-contract tests
// compare it before and after training stages
uint64_t params_hash(const std::vector<Parameter*>& params);

}  // namespace geo2::nn
