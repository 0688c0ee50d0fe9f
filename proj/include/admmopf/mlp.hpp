#pragma once

#include <vector>

#include <Eigen/Dense>

#include "admmopf/rng.hpp"

namespace admmopf {

// Fully-connected Q-network: rectified-linear hidden activations, linear
// output, 64-bit parameters. Weight matrices are (out x in).
struct QNetwork {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;

  static QNetwork init(const std::vector<int>& dims, SplitMix64& rng);

  std::vector<int> dims() const;
  int input_dim() const { return static_cast<int>(w.front().cols()); }
  int output_dim() const { return static_cast<int>(w.back().rows()); }
};

Eigen::VectorXd q_forward(const QNetwork& net, const Eigen::VectorXd& s);

// Batched forward; rows are samples.
Eigen::MatrixXd q_forward_batch(const QNetwork& net, const Eigen::MatrixXd& S);

struct QGrad {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

// Gradient of the weighted mean squared error over the batch,
//   L = (1/B) sum_b weight_b (Q(s_b, a_b) - target_b)^2,
// w.r.t. all parameters. td (if given) receives Q(s_b,a_b) - target_b.
QGrad q_backward_batch(const QNetwork& net, const Eigen::MatrixXd& S,
                       const std::vector<int>& actions,
                       const Eigen::VectorXd& targets,
                       const Eigen::VectorXd& weights,
                       Eigen::VectorXd* td = nullptr);

// Single-sample form: gradient of (Q(s,a) - target)^2.
QGrad q_backward(const QNetwork& net, const Eigen::VectorXd& s, double target,
                 int action);

struct SgdMomentum {
  double lr = 1e-4;
  double momentum = 0.9;
  double grad_clip = 10.0;  // global gradient-norm clip; <= 0 disables
  std::vector<Eigen::MatrixXd> vw;
  std::vector<Eigen::VectorXd> vb;

  void step(QNetwork& net, const QGrad& g);
};

}  // namespace admmopf
