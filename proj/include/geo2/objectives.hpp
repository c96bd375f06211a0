#pragma once

#include <Eigen/Dense>

#include "geo2/autograd.hpp"

namespace geo2::objectives {

using ad::Mat;
using ad::Tape;
using ad::Var;

struct LossConfig {
    double tau = 0.07;           // InfoNCE temperature
    double alpha = 0.1;          // consistency weight in the joint stage
    double kl_temperature = 1.0;
    bool infonce_symmetric = true;   // false: ground-to-satellite only
    bool flow_norm_reduction = false;  // false: mean squared error; true: L2 norm

    void validate() const;
};

// contrastive retrieval loss of one query against a bank; stable
// log-sum-exp, exact ln N at uniform similarities
double infonce(const Eigen::VectorXd& f, const Mat& bank, int positive_index, double tau);

// batched in-batch-negatives form over row-aligned pairs (row i of ground
// matches row i of satellite); averages over queries, and over both
// directions when symmetric
double infonce_batch(const Mat& fg, const Mat& fs, double tau, bool symmetric);
Var infonce_batch(Tape& t, Var fg, Var fs, double tau, bool symmetric);

// symmetric KL between the softmax distributions the two embeddings induce
// over the embedding dimension
double kl_consistency(const Eigen::VectorXd& fg, const Eigen::VectorXd& fs, double temperature);
// batch rows paired; mean over rows
Var kl_consistency(Tape& t, Var fg, Var fs, double temperature);

// regression onto the displacement v = xs - xg
double flow_loss_value(const Mat& pred, const Mat& xg, const Mat& xs, bool norm_reduction);
Var flow_loss(Tape& t, Var pred, const Mat& xg, const Mat& xs, bool norm_reduction);

}  // namespace geo2::objectives
