#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "models/models.hpp"

namespace auditalloc::models {

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const Matrix> design(const TrainingData& d) {
  return {d.x.data(), static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.n_features)};
}

}  // namespace

double LinearModel::margin(std::span<const double> x) const {
  double z = intercept_;
  for (std::size_t f = 0; f < coef_.size(); ++f) z += coef_[f] * x[f];
  return z;
}

nlohmann::json LinearModel::to_json() const {
  return {{"kind", kind_}, {"intercept", intercept_}, {"coef", coef_}};
}

std::shared_ptr<const LinearModel> LinearModel::from_json(const nlohmann::json& j) {
  return std::make_shared<LinearModel>(j.at("kind").get<std::string>(),
                                       j.at("intercept").get<double>(),
                                       j.at("coef").get<std::vector<double>>());
}

std::shared_ptr<const LinearModel> fit_lda(const TrainingData& d, double ridge) {
  const auto X = design(d);
  const auto p = static_cast<Eigen::Index>(d.n_features);
  Eigen::VectorXd mu[2] = {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(p)};
  double wc[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int c = d.y[i] > 0.5 ? 1 : 0;
    mu[c] += d.w[i] * X.row(static_cast<Eigen::Index>(i)).transpose();
    wc[c] += d.w[i];
  }
  mu[0] /= wc[0];
  mu[1] /= wc[1];

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const int c = d.y[i] > 0.5 ? 1 : 0;
    const Eigen::VectorXd r = X.row(static_cast<Eigen::Index>(i)).transpose() - mu[c];
    S.noalias() += d.w[i] * r * r.transpose();
  }
  S /= wc[0] + wc[1];
  const double scale = std::max(S.diagonal().mean(), 1e-12);
  S.diagonal().array() += ridge * scale;

  const Eigen::VectorXd a = S.ldlt().solve(mu[1] - mu[0]);
  const double intercept = -0.5 * a.dot(mu[0] + mu[1]) + std::log(wc[1] / wc[0]);
  return std::make_shared<LinearModel>("lda", intercept,
                                       std::vector<double>(a.data(), a.data() + p));
}

double logistic_objective_impl(const TrainingData& d, std::span<const double> beta, double l2) {
  double loss = 0.0, W = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto x = d.row(i);
    double z = beta[0];
    for (std::size_t f = 0; f < d.n_features; ++f) z += beta[f + 1] * x[f];
    loss += d.w[i] * (softplus(z) - d.y[i] * z);
    W += d.w[i];
  }
  double pen = 0.0;
  for (std::size_t f = 1; f < beta.size(); ++f) pen += beta[f] * beta[f];
  return loss / W + 0.5 * l2 * pen;
}

std::vector<double> logistic_gradient_impl(const TrainingData& d, std::span<const double> beta,
                                           double l2) {
  std::vector<double> g(beta.size(), 0.0);
  double W = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto x = d.row(i);
    double z = beta[0];
    for (std::size_t f = 0; f < d.n_features; ++f) z += beta[f + 1] * x[f];
    const double r = d.w[i] * (sigmoid(z) - d.y[i]);
    g[0] += r;
    for (std::size_t f = 0; f < d.n_features; ++f) g[f + 1] += r * x[f];
    W += d.w[i];
  }
  for (auto& v : g) v /= W;
  for (std::size_t f = 1; f < beta.size(); ++f) g[f] += l2 * beta[f];
  return g;
}

std::shared_ptr<const LinearModel> fit_logistic(const TrainingData& d, double l2, int max_iter,
                                                double tol) {
  const auto n = static_cast<Eigen::Index>(d.size());
  const auto p = static_cast<Eigen::Index>(d.n_features) + 1;
  Matrix Xa(n, p);
  Xa.col(0).setOnes();
  Xa.rightCols(p - 1) = design(d);
  const Eigen::Map<const Eigen::VectorXd> y(d.y.data(), n), w(d.w.data(), n);
  const double W = w.sum();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  // Start the intercept at the weighted log-odds.
  const double ybar = std::clamp(w.dot(y) / W, 1e-6, 1 - 1e-6);
  beta[0] = std::log(ybar / (1 - ybar));

  auto objective = [&](const Eigen::VectorXd& b) {
    return logistic_objective_impl(d, std::span<const double>(b.data(), b.size()), l2);
  };
  double f = objective(beta);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd z = Xa * beta;
    Eigen::VectorXd prob(n), hw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(z[i]);
      hw[i] = w[i] * prob[i] * (1 - prob[i]) / W;
    }
    Eigen::VectorXd grad = Xa.transpose() * (w.cwiseProduct(prob - y)) / W;
    grad.tail(p - 1) += l2 * beta.tail(p - 1);
    if (grad.lpNorm<Eigen::Infinity>() < tol) break;

    Eigen::MatrixXd H = Xa.transpose() * hw.asDiagonal() * Xa;
    H.diagonal().tail(p - 1).array() += l2;
    H.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = H.ldlt().solve(grad);

    double t = 1.0, f_new = f;
    Eigen::VectorXd cand;
    for (int ls = 0; ls < 60; ++ls) {
      cand = beta - t * step;
      f_new = objective(cand);
      if (f_new <= f - 1e-4 * t * grad.dot(step)) break;
      t *= 0.5;
    }
    if (!(f_new <= f)) break;
    const double moved = (cand - beta).lpNorm<Eigen::Infinity>();
    beta = cand;
    f = f_new;
    if (moved < 1e-14) break;
  }
  return std::make_shared<LinearModel>(
      "logistic", beta[0], std::vector<double>(beta.data() + 1, beta.data() + p));
}

}  // namespace auditalloc::models
