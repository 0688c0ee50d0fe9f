#include "admmopf/mlp.hpp"

#include <cmath>

#include "admmopf/errors.hpp"

namespace admmopf {

QNetwork QNetwork::init(const std::vector<int>& dims, SplitMix64& rng) {
  QNetwork net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    // He-normal fan-in scaling for the rectified-linear layers.
    const double scale = std::sqrt(2.0 / dims[i]);
    Eigen::MatrixXd W(dims[i + 1], dims[i]);
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c)
        W(r, c) = scale * rng.gaussian();
    net.w.push_back(std::move(W));
    net.b.push_back(Eigen::VectorXd::Zero(dims[i + 1]));
  }
  return net;
}

std::vector<int> QNetwork::dims() const {
  std::vector<int> d;
  d.push_back(static_cast<int>(w.front().cols()));
  for (const auto& W : w) d.push_back(static_cast<int>(W.rows()));
  return d;
}

Eigen::VectorXd q_forward(const QNetwork& net, const Eigen::VectorXd& s) {
  Eigen::VectorXd a = s;
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    a = (net.w[i] * a + net.b[i]).eval();
    if (i + 1 < net.w.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

Eigen::MatrixXd q_forward_batch(const QNetwork& net, const Eigen::MatrixXd& S) {
  Eigen::MatrixXd A = S;
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    A = (A * net.w[i].transpose()).rowwise() + net.b[i].transpose();
    if (i + 1 < net.w.size()) A = A.cwiseMax(0.0);
  }
  return A;
}

QGrad q_backward_batch(const QNetwork& net, const Eigen::MatrixXd& S,
                       const std::vector<int>& actions,
                       const Eigen::VectorXd& targets,
                       const Eigen::VectorXd& weights,
                       Eigen::VectorXd* td) {
  const int B = static_cast<int>(S.rows());
  const int L = static_cast<int>(net.w.size());

  // Forward pass keeping pre/post activations per layer.
  std::vector<Eigen::MatrixXd> act(L + 1);
  act[0] = S;
  for (int i = 0; i < L; ++i) {
    act[i + 1] =
        ((act[i] * net.w[i].transpose()).rowwise() + net.b[i].transpose());
    if (i + 1 < L) act[i + 1] = act[i + 1].cwiseMax(0.0);
  }
  if (!act[L].allFinite())
    throw TrainingError("q-network produced a non-finite activation");

  Eigen::VectorXd delta_q(B);
  for (int b = 0; b < B; ++b) delta_q[b] = act[L](b, actions[b]) - targets[b];
  if (td) *td = delta_q;

  // dL/d(output) is nonzero only on the selected action of each sample.
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(B, net.w.back().rows());
  for (int b = 0; b < B; ++b)
    G(b, actions[b]) = 2.0 * weights[b] * delta_q[b] / B;

  QGrad grad;
  grad.w.resize(L);
  grad.b.resize(L);
  for (int i = L - 1; i >= 0; --i) {
    grad.w[i] = G.transpose() * act[i];
    grad.b[i] = G.colwise().sum().transpose();
    if (i > 0) {
      G = (G * net.w[i]).eval();
      // ReLU mask from the post-activation of the previous layer.
      G = ((act[i].array() > 0.0).cast<double>() * G.array()).matrix();
    }
  }
  if (!delta_q.allFinite()) throw TrainingError("non-finite TD error");
  return grad;
}

QGrad q_backward(const QNetwork& net, const Eigen::VectorXd& s, double target,
                 int action) {
  Eigen::MatrixXd S(1, s.size());
  S.row(0) = s.transpose();
  Eigen::VectorXd t(1), w(1);
  t[0] = target;
  w[0] = 1.0;
  return q_backward_batch(net, S, {action}, t, w);
}

void SgdMomentum::step(QNetwork& net, const QGrad& g) {
  if (vw.empty()) {
    for (const auto& W : net.w) vw.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
    for (const auto& bb : net.b) vb.push_back(Eigen::VectorXd::Zero(bb.size()));
  }
  // Global gradient-norm clip: TD errors are unbounded (the relative
  // advantage can spike when baseline residuals are tiny), and one oversized
  // step is enough to blow the network up.
  double scale = 1.0;
  if (grad_clip > 0) {
    double sq = 0;
    for (const auto& W : g.w) sq += W.squaredNorm();
    for (const auto& bb : g.b) sq += bb.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > grad_clip) scale = grad_clip / norm;
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient");
  }
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    vw[i] = momentum * vw[i] + scale * g.w[i];
    vb[i] = momentum * vb[i] + scale * g.b[i];
    net.w[i] -= lr * vw[i];
    net.b[i] -= lr * vb[i];
    if (!net.w[i].allFinite() || !net.b[i].allFinite())
      throw TrainingError("non-finite parameter after update");
  }
}

}  // namespace admmopf
