#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace geo2::ad {

using Mat = Eigen::MatrixXd;

// Named trainable tensor. Adam moments live here so checkpoints can carry
// optimizer state; grad accumulates across tapes until zeroed.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    Mat m;  // Adam first moment
    Mat v;  // Adam second moment
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Mat init) : name(std::move(n)), value(std::move(init)) {
        grad = Mat::Zero(value.rows(), value.cols());
        m = Mat::Zero(value.rows(), value.cols());
        v = Mat::Zero(value.rows(), value.cols());
    }

    void zero_grad() { grad.setZero(); }
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

// Reverse-mode tape over dense matrices. Nodes are appended in forward
// order, so walking ids backward is a valid topological order.
class Tape {
  public:
    Var constant(Mat value);
    Var param(Parameter& p);  // leaf tracked for gradient, sink = p.grad

    void backward(Var scalar_loss);  // seeds d(loss)/d(loss) = 1

    const Mat& value(Var v) const;
    const Mat& grad(Var v) const;  // valid after backward
    size_t size() const { return nodes_.size(); }

    // module internals
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        bool grad_alloc = false;
        Parameter* sink = nullptr;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backprop;
    };

    int emplace(Mat value, std::vector<int> parents, std::function<void(Tape&, int)> backprop);
    Node& node(int id) { return nodes_[id]; }
    const Node& node(int id) const { return nodes_[id]; }
    Mat& grad_buf(int id);  // allocates zero grad on first touch
    bool needs(int id) const { return nodes_[id].needs_grad; }

  private:
    // deque keeps value references stable while the tape grows
    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

// elementwise and broadcast arithmetic
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);             // hadamard
Var scale(Var a, double s);
Var add_rowvec(Var x, Var v);      // v: 1 x C broadcast over rows
Var mul_rowvec(Var x, Var v);
Var add_colvec(Var x, Var v);      // v: R x 1 broadcast over columns

// linear algebra and shaping
Var matmul(Var a, Var b);
Var transpose(Var a);
Var block(Var a, int r0, int c0, int rows, int cols);
Var hconcat(const std::vector<Var>& parts);
Var vconcat(const std::vector<Var>& parts);

// nonlinearities
Var tanh_(Var a);
Var silu(Var a);

// rowwise softmax family (numerically stabilized by row max)
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

// reductions
Var sum_all(Var a);    // 1x1
Var mean_all(Var a);   // 1x1
Var mean_rows(Var a);  // 1xC column means (mean over rows)
Var sqrt_scalar(Var a);

// entries (r, c) gathered into an n x 1 column
Var gather(Var a, const std::vector<std::pair<int, int>>& idx);

// rowwise layer norm, population variance, then affine when gamma/beta given
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var layer_norm_rows(Var x, double eps = 1e-5);

// rowwise L2 normalization; throws NumericError on a near-zero row
Var l2_normalize_rows(Var x, double min_norm = 1e-12);

// conv over planar layout: x is (Cin, H*W), w is (Cout, Cin*k*k),
// b is (Cout, 1); zero padding `pad`, square kernel and stride
struct ConvGeom {
    int in_h, in_w, kernel, stride, pad;
    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};
Var conv2d(Var x, Var w, Var b, const ConvGeom& g);

// plain (untracked) helpers shared with frozen backbones
Mat im2col(const Mat& x, const ConvGeom& g);
Mat conv2d_plain(const Mat& x, const Mat& w, const Mat& b, const ConvGeom& g);

}  // namespace geo2::ad
