#include "geo2/objectives.hpp"

#include <cmath>

#include "geo2/common.hpp"

namespace geo2::objectives {

void LossConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("loss: tau must be positive");
    if (!(kl_temperature > 0.0)) throw ConfigError("loss: kl_temperature must be positive");
    if (alpha < 0.0) throw ConfigError("loss: alpha must be non-negative");
}

namespace {

// log sum exp of a row with the max subtracted first
double lse(const Eigen::RowVectorXd& s) {
    double m = s.maxCoeff();
    double acc = 0.0;
    for (int i = 0; i < s.size(); ++i) acc += std::exp(s(i) - m);
    return m + std::log(acc);
}

}  // namespace

double infonce(const Eigen::VectorXd& f, const Mat& bank, int positive_index, double tau) {
    if (bank.rows() == 0) throw UsageError("infonce: empty bank");
    if (bank.cols() != f.size()) throw UsageError("infonce: dimension mismatch");
    if (positive_index < 0 || positive_index >= bank.rows())
        throw UsageError("infonce: positive index out of range");
    if (!(tau > 0.0)) throw ConfigError("infonce: tau must be positive");
    Eigen::RowVectorXd s = (bank * f).transpose() / tau;
    double m = s.maxCoeff();
    double acc = 0.0;
    for (int i = 0; i < s.size(); ++i) acc += std::exp(s(i) - m);
    // -log softmax(positive); written so uniform scores give exactly ln N
    return std::log(acc) - (s(positive_index) - m);
}

double infonce_batch(const Mat& fg, const Mat& fs, double tau, bool symmetric) {
    if (fg.rows() != fs.rows() || fg.cols() != fs.cols())
        throw UsageError("infonce: batch shape mismatch");
    if (fg.rows() == 0) throw UsageError("infonce: empty batch");
    if (!(tau > 0.0)) throw ConfigError("infonce: tau must be positive");
    const int n = static_cast<int>(fg.rows());
    Mat s = fg * fs.transpose() / tau;
    double g2s = 0.0;
    for (int i = 0; i < n; ++i) g2s += lse(s.row(i)) - s(i, i);
    g2s /= n;
    if (!symmetric) return g2s;
    double s2g = 0.0;
    for (int j = 0; j < n; ++j) s2g += lse(s.col(j).transpose()) - s(j, j);
    s2g /= n;
    return 0.5 * (g2s + s2g);
}

namespace {

// mean of the diagonal negative log softmax terms for one direction
Var direction_loss(Tape& t, Var scores) {
    const int n = static_cast<int>(scores.rows());
    Var logp = log_softmax_rows(scores);
    std::vector<std::pair<int, int>> diag;
    diag.reserve(n);
    for (int i = 0; i < n; ++i) diag.emplace_back(i, i);
    Var pos = gather(logp, diag);
    return scale(mean_all(pos), -1.0);
}

}  // namespace

Var infonce_batch(Tape& t, Var fg, Var fs, double tau, bool symmetric) {
    if (fg.rows() != fs.rows() || fg.cols() != fs.cols())
        throw UsageError("infonce: batch shape mismatch");
    if (fg.rows() == 0) throw UsageError("infonce: empty batch");
    if (!(tau > 0.0)) throw ConfigError("infonce: tau must be positive");
    Var s = scale(matmul(fg, transpose(fs)), 1.0 / tau);
    Var g2s = direction_loss(t, s);
    if (!symmetric) return g2s;
    Var s2g = direction_loss(t, transpose(s));
    return scale(add(g2s, s2g), 0.5);
}

double kl_consistency(const Eigen::VectorXd& fg, const Eigen::VectorXd& fs, double temperature) {
    if (fg.size() != fs.size()) throw UsageError("kl: dimension mismatch");
    if (fg.size() == 0) throw UsageError("kl: empty vectors");
    if (!(temperature > 0.0)) throw ConfigError("kl: temperature must be positive");
    Eigen::RowVectorXd a = fg.transpose() / temperature;
    Eigen::RowVectorXd b = fs.transpose() / temperature;
    double la = lse(a), lb = lse(b);
    double acc = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        double lp = a(i) - la, lq = b(i) - lb;
        double p = std::exp(lp), q = std::exp(lq);
        acc += p * (lp - lq) + q * (lq - lp);
    }
    return acc;
}

Var kl_consistency(Tape& t, Var fg, Var fs, double temperature) {
    if (fg.rows() != fs.rows() || fg.cols() != fs.cols())
        throw UsageError("kl: batch shape mismatch");
    if (fg.rows() == 0) throw UsageError("kl: empty batch");
    if (!(temperature > 0.0)) throw ConfigError("kl: temperature must be positive");
    Var a = scale(fg, 1.0 / temperature);
    Var b = scale(fs, 1.0 / temperature);
    Var p = softmax_rows(a), lp = log_softmax_rows(a);
    Var q = softmax_rows(b), lq = log_softmax_rows(b);
    Var kl_pq = sum_all(mul(p, sub(lp, lq)));
    Var kl_qp = sum_all(mul(q, sub(lq, lp)));
    return scale(add(kl_pq, kl_qp), 1.0 / static_cast<double>(fg.rows()));
}

double flow_loss_value(const Mat& pred, const Mat& xg, const Mat& xs, bool norm_reduction) {
    if (pred.rows() != xg.rows() || pred.cols() != xg.cols() || xg.rows() != xs.rows() ||
        xg.cols() != xs.cols())
        throw UsageError("flow loss: shape mismatch");
    Mat diff = pred - (xs - xg);
    double ss = diff.squaredNorm();
    if (norm_reduction) return std::sqrt(ss);
    return ss / static_cast<double>(diff.size());
}

Var flow_loss(Tape& t, Var pred, const Mat& xg, const Mat& xs, bool norm_reduction) {
    if (pred.rows() != xg.rows() || pred.cols() != xg.cols() || xg.rows() != xs.rows() ||
        xg.cols() != xs.cols())
        throw UsageError("flow loss: shape mismatch");
    Var target = t.constant(xs - xg);
    Var diff = sub(pred, target);
    Var sq = mul(diff, diff);
    if (norm_reduction) return sqrt_scalar(sum_all(sq));
    return mean_all(sq);
}

}  // namespace geo2::objectives
