#include "geo2/nn.hpp"

#include <cmath>
#include <random>

#include "geo2/common.hpp"

namespace geo2::nn {

Mat randn(Eigen::Index rows, Eigen::Index cols, uint64_t seed, double stddev) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, stddev);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
    return m;
}

uint64_t param_seed(uint64_t model_seed, const std::string& name) {
    return stream_seed(model_seed, "param:" + name);
}

Linear::Linear(const std::string& name, int in, int out, uint64_t model_seed, bool zero_init) {
    double sd = zero_init ? 0.0 : std::sqrt(2.0 / (in + out));
    W = Parameter(name + ".W", zero_init ? Mat::Zero(in, out)
                                         : randn(in, out, param_seed(model_seed, name + ".W"), sd));
    b = Parameter(name + ".b", Mat::Zero(1, out));
}

Var Linear::forward(Tape& t, Var x) {
    return ad::add_rowvec(ad::matmul(x, t.param(W)), t.param(b));
}

Mat Linear::forward_plain(const Mat& x) const { return (x * W.value).rowwise() + b.value.row(0); }

void Linear::collect(std::vector<Parameter*>& out) {
    out.push_back(&W);
    out.push_back(&b);
}

Conv2d::Conv2d(const std::string& name, int cin, int cout, int kernel, int stride, int pad,
               uint64_t model_seed)
    : kernel(kernel), stride(stride), pad(pad) {
    int fan = cin * kernel * kernel;
    double sd = std::sqrt(2.0 / (fan + cout));
    W = Parameter(name + ".W", randn(cout, fan, param_seed(model_seed, name + ".W"), sd));
    b = Parameter(name + ".b", Mat::Zero(cout, 1));
}

Var Conv2d::forward(Tape& t, Var x, int in_h, int in_w) {
    return ad::conv2d(x, t.param(W), t.param(b), geom(in_h, in_w));
}

Mat Conv2d::forward_plain(const Mat& x, int in_h, int in_w) const {
    return ad::conv2d_plain(x, W.value, b.value, geom(in_h, in_w));
}

void Conv2d::collect(std::vector<Parameter*>& out) {
    out.push_back(&W);
    out.push_back(&b);
}

LayerNorm::LayerNorm(const std::string& name, int dim) {
    gamma = Parameter(name + ".gamma", Mat::Ones(1, dim));
    beta = Parameter(name + ".beta", Mat::Zero(1, dim));
}

Var LayerNorm::forward(Tape& t, Var x) {
    return ad::layer_norm_rows(x, t.param(gamma), t.param(beta), eps);
}

void LayerNorm::collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

MultiheadAttention::MultiheadAttention(const std::string& name, int dim, int heads,
                                       uint64_t model_seed)
    : heads(heads),
      wq(name + ".wq", dim, dim, model_seed),
      wk(name + ".wk", dim, dim, model_seed),
      wv(name + ".wv", dim, dim, model_seed),
      wo(name + ".wo", dim, dim, model_seed) {
    if (dim % heads != 0) throw ConfigError("attention dim must divide by head count");
}

Var MultiheadAttention::forward(Tape& t, Var query, Var keyvalue, std::vector<Mat>* attn_out) {
    int dim = static_cast<int>(wq.W.value.rows());
    if (query.cols() != dim || keyvalue.cols() != dim)
        throw ConfigError("attention: token dim mismatch");
    int dh = dim / heads;
    int nq = static_cast<int>(query.rows());

    Var q = wq.forward(t, query);
    Var k = wk.forward(t, keyvalue);
    Var v = wv.forward(t, keyvalue);

    std::vector<Var> heads_out;
    for (int h = 0; h < heads; ++h) {
        Var qh = ad::block(q, 0, h * dh, nq, dh);
        Var kh = ad::block(k, 0, h * dh, static_cast<int>(keyvalue.rows()), dh);
        Var vh = ad::block(v, 0, h * dh, static_cast<int>(keyvalue.rows()), dh);
        Var logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), 1.0 / std::sqrt(double(dh)));
        if (!logits.value().allFinite())
            throw NumericError("attention: non-finite logits in head " + std::to_string(h));
        Var a = ad::softmax_rows(logits);
        if (attn_out) attn_out->push_back(a.value());
        heads_out.push_back(ad::matmul(a, vh));
    }
    return wo.forward(t, ad::hconcat(heads_out));
}

void MultiheadAttention::collect(std::vector<Parameter*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

Mat sinusoidal_embedding(double t, int dim, double max_period) {
    if (dim % 2 != 0) throw ConfigError("sinusoidal embedding dim must be even");
    int half = dim / 2;
    Mat e(1, dim);
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(max_period) * i / half);
        e(0, i) = std::cos(t * freq);
        e(0, half + i) = std::sin(t * freq);
    }
    return e;
}

Mat resize_planar(const Mat& x, int h, int w, int oh, int ow) {
    if (x.cols() != static_cast<Eigen::Index>(h) * w) throw UsageError("resize_planar: bad shape");
    Mat y(x.rows(), static_cast<Eigen::Index>(oh) * ow);
    double sx = static_cast<double>(w) / ow;
    double sy = static_cast<double>(h) / oh;
    for (int oy = 0; oy < oh; ++oy) {
        double v = (oy + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(v));
        double fy = v - y0;
        int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < ow; ++ox) {
            double u = (ox + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(u));
            double fx = u - x0;
            int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
            for (Eigen::Index c = 0; c < x.rows(); ++c) {
                double v00 = x(c, static_cast<Eigen::Index>(y0c) * w + x0c);
                double v10 = x(c, static_cast<Eigen::Index>(y0c) * w + x1c);
                double v01 = x(c, static_cast<Eigen::Index>(y1c) * w + x0c);
                double v11 = x(c, static_cast<Eigen::Index>(y1c) * w + x1c);
                y(c, static_cast<Eigen::Index>(oy) * ow + ox) =
                    (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 +
                    fx * fy * v11;
            }
        }
    }
    return y;
}

void Sgd::step(const std::vector<Parameter*>& params) {
    for (auto* p : params)
        if (p->trainable) p->value -= lr * p->grad;
}

void Adam::step(const std::vector<Parameter*>& params) {
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto* p : params) {
        if (!p->trainable) continue;
        p->m = beta1 * p->m + (1 - beta1) * p->grad;
        p->v = beta2 * p->v + (1 - beta2) * p->grad.cwiseProduct(p->grad);
        Mat mhat = p->m / c1;
        Mat vhat = p->v / c2;
        p->value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
    }
}

void zero_grads(const std::vector<Parameter*>& params) {
    for (auto* p : params) p->zero_grad();
}

uint64_t params_hash(const std::vector<Parameter*>& params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : params) {
        h = fnv1a(p->name.data(), p->name.size(), h);
        h = fnv1a(p->value.data(), sizeof(double) * p->value.size(), h);
    }
    return h;
}

}  // namespace geo2::nn
