#include "geo2/autograd.hpp"

#include <cmath>

#include "geo2/common.hpp"

namespace geo2::ad {

namespace {

void check(bool ok, const char* msg) {
    if (!ok) throw UsageError(std::string("autograd: ") + msg);
}

Var make(Tape* t, int id) { return Var{t, id}; }

}  // namespace

const Mat& Var::value() const { return tape->value(*this); }

Var Tape::constant(Mat value) {
    int id = emplace(std::move(value), {}, nullptr);
    return make(this, id);
}

Var Tape::param(Parameter& p) {
    int id = emplace(p.value, {}, nullptr);
    nodes_[id].needs_grad = p.trainable;
    nodes_[id].sink = p.trainable ? &p : nullptr;
    return make(this, id);
}

int Tape::emplace(Mat value, std::vector<int> parents, std::function<void(Tape&, int)> backprop) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backprop = std::move(backprop);
    for (int p : n.parents)
        if (nodes_[p].needs_grad) n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (!n.grad_alloc) {
        n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.grad_alloc = true;
    }
    return n.grad;
}

const Mat& Tape::value(Var v) const {
    check(v.tape == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "bad var");
    return nodes_[v.id].value;
}

const Mat& Tape::grad(Var v) const {
    check(v.tape == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "bad var");
    check(nodes_[v.id].grad_alloc, "gradient not populated; run backward first");
    return nodes_[v.id].grad;
}

void Tape::backward(Var loss) {
    check(loss.tape == this, "loss from another tape");
    check(!backward_done_, "backward already ran on this tape");
    check(loss.value().rows() == 1 && loss.value().cols() == 1, "loss must be scalar");
    if (!std::isfinite(loss.value()(0, 0))) throw NumericError("non-finite loss");
    backward_done_ = true;

    grad_buf(loss.id)(0, 0) = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || !n.grad_alloc) continue;
        if (n.backprop) n.backprop(*this, id);
    }
    for (auto& n : nodes_)
        if (n.sink && n.grad_alloc) n.sink->grad += n.grad;
}

Var add(Var a, Var b) {
    check(a.tape == b.tape, "tape mismatch");
    check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    Mat y = a.value() + b.value();
    int pa = a.id, pb = b.id;
    int id = a.tape->emplace(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(pa)) t.grad_buf(pa) += g;
        if (t.needs(pb)) t.grad_buf(pb) += g;
    });
    return make(a.tape, id);
}

Var sub(Var a, Var b) {
    check(a.tape == b.tape, "tape mismatch");
    check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    Mat y = a.value() - b.value();
    int pa = a.id, pb = b.id;
    int id = a.tape->emplace(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(pa)) t.grad_buf(pa) += g;
        if (t.needs(pb)) t.grad_buf(pb) -= g;
    });
    return make(a.tape, id);
}

Var mul(Var a, Var b) {
    check(a.tape == b.tape, "tape mismatch");
    check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
    Mat y = a.value().cwiseProduct(b.value());
    int pa = a.id, pb = b.id;
    int id = a.tape->emplace(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(pa)) t.grad_buf(pa) += g.cwiseProduct(t.node(pb).value);
        if (t.needs(pb)) t.grad_buf(pb) += g.cwiseProduct(t.node(pa).value);
    });
    return make(a.tape, id);
}

Var scale(Var a, double s) {
    Mat y = a.value() * s;
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa, s](Tape& t, int self) {
        if (t.needs(pa)) t.grad_buf(pa) += t.node(self).grad * s;
    });
    return make(a.tape, id);
}

Var add_rowvec(Var x, Var v) {
    check(x.tape == v.tape, "tape mismatch");
    check(v.rows() == 1 && v.cols() == x.cols(), "add_rowvec: v must be 1 x cols(x)");
    Mat y = x.value().rowwise() + v.value().row(0);
    int px = x.id, pv = v.id;
    int id = x.tape->emplace(std::move(y), {px, pv}, [px, pv](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(px)) t.grad_buf(px) += g;
        if (t.needs(pv)) t.grad_buf(pv) += g.colwise().sum();
    });
    return make(x.tape, id);
}

Var mul_rowvec(Var x, Var v) {
    check(x.tape == v.tape, "tape mismatch");
    check(v.rows() == 1 && v.cols() == x.cols(), "mul_rowvec: v must be 1 x cols(x)");
    Mat y = x.value().array().rowwise() * v.value().row(0).array();
    int px = x.id, pv = v.id;
    int id = x.tape->emplace(std::move(y), {px, pv}, [px, pv](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(px))
            t.grad_buf(px).array() += g.array().rowwise() * t.node(pv).value.row(0).array();
        if (t.needs(pv))
            t.grad_buf(pv) += (g.cwiseProduct(t.node(px).value)).colwise().sum();
    });
    return make(x.tape, id);
}

Var add_colvec(Var x, Var v) {
    check(x.tape == v.tape, "tape mismatch");
    check(v.cols() == 1 && v.rows() == x.rows(), "add_colvec: v must be rows(x) x 1");
    Mat y = x.value().colwise() + v.value().col(0);
    int px = x.id, pv = v.id;
    int id = x.tape->emplace(std::move(y), {px, pv}, [px, pv](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(px)) t.grad_buf(px) += g;
        if (t.needs(pv)) t.grad_buf(pv) += g.rowwise().sum();
    });
    return make(x.tape, id);
}

Var matmul(Var a, Var b) {
    check(a.tape == b.tape, "tape mismatch");
    check(a.cols() == b.rows(), "matmul: inner dims differ");
    Mat y = a.value() * b.value();
    int pa = a.id, pb = b.id;
    int id = a.tape->emplace(std::move(y), {pa, pb}, [pa, pb](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        if (t.needs(pa)) t.grad_buf(pa) += g * t.node(pb).value.transpose();
        if (t.needs(pb)) t.grad_buf(pb) += t.node(pa).value.transpose() * g;
    });
    return make(a.tape, id);
}

Var transpose(Var a) {
    Mat y = a.value().transpose();
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa](Tape& t, int self) {
        if (t.needs(pa)) t.grad_buf(pa) += t.node(self).grad.transpose();
    });
    return make(a.tape, id);
}

Var block(Var a, int r0, int c0, int rows, int cols) {
    check(r0 >= 0 && c0 >= 0 && r0 + rows <= a.rows() && c0 + cols <= a.cols(),
          "block: out of range");
    Mat y = a.value().block(r0, c0, rows, cols);
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa, r0, c0, rows, cols](Tape& t, int self) {
        if (t.needs(pa)) t.grad_buf(pa).block(r0, c0, rows, cols) += t.node(self).grad;
    });
    return make(a.tape, id);
}

Var hconcat(const std::vector<Var>& parts) {
    check(!parts.empty(), "hconcat: empty");
    Tape* tape = parts[0].tape;
    Eigen::Index rows = parts[0].rows(), cols = 0;
    std::vector<int> ids;
    for (const auto& p : parts) {
        check(p.tape == tape, "tape mismatch");
        check(p.rows() == rows, "hconcat: row mismatch");
        cols += p.cols();
        ids.push_back(p.id);
    }
    Mat y(rows, cols);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        y.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    int id = tape->emplace(std::move(y), ids, [ids](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        Eigen::Index off = 0;
        for (int pid : ids) {
            Eigen::Index w = t.node(pid).value.cols();
            if (t.needs(pid)) t.grad_buf(pid) += g.middleCols(off, w);
            off += w;
        }
    });
    return make(tape, id);
}

Var vconcat(const std::vector<Var>& parts) {
    check(!parts.empty(), "vconcat: empty");
    Tape* tape = parts[0].tape;
    Eigen::Index cols = parts[0].cols(), rows = 0;
    std::vector<int> ids;
    for (const auto& p : parts) {
        check(p.tape == tape, "tape mismatch");
        check(p.cols() == cols, "vconcat: column mismatch");
        rows += p.rows();
        ids.push_back(p.id);
    }
    Mat y(rows, cols);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        y.middleRows(off, p.rows()) = p.value();
        off += p.rows();
    }
    int id = tape->emplace(std::move(y), ids, [ids](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        Eigen::Index off = 0;
        for (int pid : ids) {
            Eigen::Index h = t.node(pid).value.rows();
            if (t.needs(pid)) t.grad_buf(pid) += g.middleRows(off, h);
            off += h;
        }
    });
    return make(tape, id);
}

Var tanh_(Var a) {
    Mat y = a.value().array().tanh();
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa](Tape& t, int self) {
        if (!t.needs(pa)) return;
        const Mat& y = t.node(self).value;
        t.grad_buf(pa).array() += t.node(self).grad.array() * (1.0 - y.array().square());
    });
    return make(a.tape, id);
}

Var silu(Var a) {
    Eigen::ArrayXXd sig = 1.0 / (1.0 + (-a.value().array()).exp());
    Mat y = a.value().array() * sig;
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa](Tape& t, int self) {
        if (!t.needs(pa)) return;
        const Mat& x = t.node(pa).value;
        Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
        t.grad_buf(pa).array() +=
            t.node(self).grad.array() * (s * (1.0 + x.array() * (1.0 - s)));
    });
    return make(a.tape, id);
}

Var softmax_rows(Var a) {
    Mat y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        double mx = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - mx).exp();
        y.row(r) /= y.row(r).sum();
    }
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa](Tape& t, int self) {
        if (!t.needs(pa)) return;
        const Mat& y = t.node(self).value;
        const Mat& g = t.node(self).grad;
        Mat& out = t.grad_buf(pa);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            double dot = g.row(r).dot(y.row(r));
            out.row(r).array() += (g.row(r).array() - dot) * y.row(r).array();
        }
    });
    return make(a.tape, id);
}

Var log_softmax_rows(Var a) {
    Mat y = a.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        double mx = y.row(r).maxCoeff();
        double lse = std::log((y.row(r).array() - mx).exp().sum());
        y.row(r) = y.row(r).array() - mx - lse;
    }
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa](Tape& t, int self) {
        if (!t.needs(pa)) return;
        const Mat& y = t.node(self).value;
        const Mat& g = t.node(self).grad;
        Mat& out = t.grad_buf(pa);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            double s = g.row(r).sum();
            out.row(r) += g.row(r) - s * y.row(r).array().exp().matrix();
        }
    });
    return make(a.tape, id);
}

Var sum_all(Var a) {
    Mat y(1, 1);
    y(0, 0) = a.value().sum();
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa](Tape& t, int self) {
        if (t.needs(pa)) t.grad_buf(pa).array() += t.node(self).grad(0, 0);
    });
    return make(a.tape, id);
}

Var mean_all(Var a) {
    double n = static_cast<double>(a.rows() * a.cols());
    Mat y(1, 1);
    y(0, 0) = a.value().sum() / n;
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa, n](Tape& t, int self) {
        if (t.needs(pa)) t.grad_buf(pa).array() += t.node(self).grad(0, 0) / n;
    });
    return make(a.tape, id);
}

Var mean_rows(Var a) {
    double n = static_cast<double>(a.rows());
    Mat y = a.value().colwise().mean();
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa, n](Tape& t, int self) {
        if (!t.needs(pa)) return;
        const Mat& g = t.node(self).grad;  // 1 x C
        t.grad_buf(pa).array().rowwise() += g.row(0).array() / n;
    });
    return make(a.tape, id);
}

Var sqrt_scalar(Var a) {
    check(a.rows() == 1 && a.cols() == 1, "sqrt_scalar: needs 1x1");
    double x = a.value()(0, 0);
    check(x >= 0, "sqrt_scalar: negative input");
    Mat y(1, 1);
    y(0, 0) = std::sqrt(x);
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa](Tape& t, int self) {
        if (!t.needs(pa)) return;
        double yv = t.node(self).value(0, 0);
        if (yv > 0) t.grad_buf(pa)(0, 0) += t.node(self).grad(0, 0) / (2 * yv);
    });
    return make(a.tape, id);
}

Var gather(Var a, const std::vector<std::pair<int, int>>& idx) {
    check(!idx.empty(), "gather: empty index list");
    Mat y(static_cast<Eigen::Index>(idx.size()), 1);
    for (size_t i = 0; i < idx.size(); ++i) {
        auto [r, c] = idx[i];
        check(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "gather: index out of range");
        y(static_cast<Eigen::Index>(i), 0) = a.value()(r, c);
    }
    int pa = a.id;
    int id = a.tape->emplace(std::move(y), {pa}, [pa, idx](Tape& t, int self) {
        if (!t.needs(pa)) return;
        const Mat& g = t.node(self).grad;
        Mat& out = t.grad_buf(pa);
        for (size_t i = 0; i < idx.size(); ++i)
            out(idx[i].first, idx[i].second) += g(static_cast<Eigen::Index>(i), 0);
    });
    return make(a.tape, id);
}

namespace {

// shared layer norm core; gamma/beta ids may be -1 (no affine)
Var layer_norm_impl(Var x, int pg, int pb, double eps) {
    const Mat& xv = x.value();
    Eigen::Index n = xv.rows(), c = xv.cols();
    Mat xhat(n, c);
    Eigen::VectorXd inv(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        double mu = xv.row(r).mean();
        double var = (xv.row(r).array() - mu).square().sum() / c;
        inv(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mu) * inv(r);
    }
    Mat y = xhat;
    Tape& tape = *x.tape;
    if (pg >= 0) {
        y = y.array().rowwise() * tape.node(pg).value.row(0).array();
        y = y.rowwise() + tape.node(pb).value.row(0);
    }
    std::vector<int> parents{x.id};
    if (pg >= 0) {
        parents.push_back(pg);
        parents.push_back(pb);
    }
    int px = x.id;
    int id = tape.emplace(std::move(y), parents,
                          [px, pg, pb, xhat, inv](Tape& t, int self) {
        const Mat& g = t.node(self).grad;
        Eigen::Index n = g.rows(), c = g.cols();
        Mat dxhat = g;
        if (pg >= 0) {
            dxhat = dxhat.array().rowwise() * t.node(pg).value.row(0).array();
            if (t.needs(pg)) t.grad_buf(pg) += g.cwiseProduct(xhat).colwise().sum();
            if (t.needs(pb)) t.grad_buf(pb) += g.colwise().sum();
        }
        if (!t.needs(px)) return;
        Mat& out = t.grad_buf(px);
        for (Eigen::Index r = 0; r < n; ++r) {
            double m1 = dxhat.row(r).mean();
            double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            out.row(r) +=
                inv(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
        }
        (void)c;
    });
    return make(x.tape, id);
}

}  // namespace

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    check(x.tape == gamma.tape && x.tape == beta.tape, "tape mismatch");
    check(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm: gamma must be 1 x cols");
    check(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm: beta must be 1 x cols");
    return layer_norm_impl(x, gamma.id, beta.id, eps);
}

Var layer_norm_rows(Var x, double eps) { return layer_norm_impl(x, -1, -1, eps); }

Var l2_normalize_rows(Var x, double min_norm) {
    const Mat& xv = x.value();
    Eigen::VectorXd norms(xv.rows());
    Mat y(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        double n = xv.row(r).norm();
        if (!(n > min_norm))
            throw NumericError("l2_normalize_rows: degenerate row norm " + std::to_string(n));
        norms(r) = n;
        y.row(r) = xv.row(r) / n;
    }
    int px = x.id;
    int id = x.tape->emplace(std::move(y), {px}, [px, norms](Tape& t, int self) {
        if (!t.needs(px)) return;
        const Mat& y = t.node(self).value;
        const Mat& g = t.node(self).grad;
        Mat& out = t.grad_buf(px);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            double dot = y.row(r).dot(g.row(r));
            out.row(r) += (g.row(r) - dot * y.row(r)) / norms(r);
        }
    });
    return make(x.tape, id);
}

Mat im2col(const Mat& x, const ConvGeom& g) {
    Eigen::Index cin = x.rows();
    Mat k(cin * g.kernel * g.kernel, static_cast<Eigen::Index>(g.out_h()) * g.out_w());
    k.setZero();
    for (int oy = 0; oy < g.out_h(); ++oy)
        for (int ox = 0; ox < g.out_w(); ++ox) {
            Eigen::Index col = static_cast<Eigen::Index>(oy) * g.out_w() + ox;
            for (Eigen::Index ci = 0; ci < cin; ++ci)
                for (int ky = 0; ky < g.kernel; ++ky) {
                    int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (int kx = 0; kx < g.kernel; ++kx) {
                        int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.in_w) continue;
                        k((ci * g.kernel + ky) * g.kernel + kx, col) =
                            x(ci, static_cast<Eigen::Index>(iy) * g.in_w + ix);
                    }
                }
        }
    return k;
}

namespace {

void col2im_add(Mat& dx, const Mat& dk, const ConvGeom& g) {
    Eigen::Index cin = dx.rows();
    for (int oy = 0; oy < g.out_h(); ++oy)
        for (int ox = 0; ox < g.out_w(); ++ox) {
            Eigen::Index col = static_cast<Eigen::Index>(oy) * g.out_w() + ox;
            for (Eigen::Index ci = 0; ci < cin; ++ci)
                for (int ky = 0; ky < g.kernel; ++ky) {
                    int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    for (int kx = 0; kx < g.kernel; ++kx) {
                        int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.in_w) continue;
                        dx(ci, static_cast<Eigen::Index>(iy) * g.in_w + ix) +=
                            dk((ci * g.kernel + ky) * g.kernel + kx, col);
                    }
                }
        }
}

}  // namespace

Mat conv2d_plain(const Mat& x, const Mat& w, const Mat& b, const ConvGeom& g) {
    Mat k = im2col(x, g);
    Mat y = w * k;
    y.colwise() += b.col(0);
    return y;
}

Var conv2d(Var x, Var w, Var b, const ConvGeom& g) {
    check(x.tape == w.tape && x.tape == b.tape, "tape mismatch");
    check(x.cols() == static_cast<Eigen::Index>(g.in_h) * g.in_w, "conv2d: x cols != H*W");
    check(w.cols() == x.rows() * g.kernel * g.kernel, "conv2d: w cols != Cin*k*k");
    check(b.rows() == w.rows() && b.cols() == 1, "conv2d: b must be Cout x 1");

    Mat k = im2col(x.value(), g);
    Mat y = w.value() * k;
    y.colwise() += b.value().col(0);
    int px = x.id, pw = w.id, pb = b.id;
    int id = x.tape->emplace(std::move(y), {px, pw, pb}, [px, pw, pb, k, g](Tape& t, int self) {
        const Mat& gr = t.node(self).grad;
        if (t.needs(pw)) t.grad_buf(pw) += gr * k.transpose();
        if (t.needs(pb)) t.grad_buf(pb) += gr.rowwise().sum();
        if (t.needs(px)) {
            Mat dk = t.node(pw).value.transpose() * gr;
            col2im_add(t.grad_buf(px), dk, g);
        }
    });
    return make(x.tape, id);
}

}  // namespace geo2::ad
