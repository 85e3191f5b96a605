#include <fmt/format.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "gmq/classic.hpp"
#include "gmq/error.hpp"
#include "gmq/kernels.hpp"

namespace gmq {

namespace {

Tensor standardize(const Tensor& x, const Tensor& mean, const Tensor& scale) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) / scale[j];
  return out;
}

// Row-wise softmax of logits in place.
void softmax_rows(Tensor& z) {
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) s += (v = std::exp(v - mx));
    for (double& v : row) v /= s;
  }
}

Tensor logits(const Tensor& xs, const Tensor& w, const Tensor& b) {
  Tensor z = kernels::active::matmul_nt(xs, w);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t k = 0; k < z.cols(); ++k) z(i, k) += b[k];
  return z;
}

// Upper bound on the curvature of mean cross-entropy in (W, b):
// 0.5 * lambda_max(X~^T X~ / n) with X~ = [X, 1].
double curvature_bound(const Tensor& xs) {
  const std::size_t n = xs.rows(), d = xs.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v(d + 1);
    for (std::size_t j = 0; j < d; ++j) v[j] = xs(i, j);
    v[d] = 1.0;
    gram.noalias() += v * v.transpose();
  }
  gram /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return 0.5 * eig.eigenvalues().maxCoeff();
}

}  // namespace

SoftClassifier::SoftClassifier(Tensor weights, Tensor bias, Tensor mean, Tensor scale)
    : weights_(std::move(weights)), bias_(std::move(bias)), mean_(std::move(mean)), scale_(std::move(scale)) {
  if (weights_.rank() != 2 || bias_.shape() != Shape{weights_.rows()} || mean_.shape() != Shape{weights_.cols()} ||
      scale_.shape() != mean_.shape())
    throw ContractViolation("classifier: inconsistent parameter shapes");
}

Tensor SoftClassifier::predict_proba(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != dim())
    throw ContractViolation(fmt::format("classifier: expected (m,{}) features, got {}", dim(), shape_string(x.shape())));
  Tensor z = logits(standardize(x, mean_, scale_), weights_, bias_);
  softmax_rows(z);
  return z;
}

int argmax_row(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<int> SoftClassifier::predict(const Tensor& x) const {
  const Tensor p = predict_proba(x);
  std::vector<int> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) out[i] = argmax_row(p.row(i));
  return out;
}

SoftClassifier train_classifier(const ExampleSet& examples, const ClassifierConfig& config) {
  if (!examples.labeled()) throw ValidationError("classifier training needs example labels");
  const std::size_t n = examples.size(), d = examples.dim(), l = examples.class_count;
  if (l < 2) throw ValidationError("classifier training needs at least 2 classes");
  const auto& y = *examples.labels;
  std::vector<std::size_t> counts(l);
  for (int c : y) ++counts.at(static_cast<std::size_t>(c));
  for (std::size_t c = 0; c < l; ++c)
    if (counts[c] == 0) throw ValidationError(fmt::format("class {} is absent from the training data", c));

  Tensor mean({d}), scale({d});
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += examples.features(i, j);
    mean[j] = s / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (examples.features(i, j) - mean[j]) * (examples.features(i, j) - mean[j]);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  const Tensor xs = standardize(examples.features, mean, scale);
  const double step = 1.0 / (curvature_bound(xs) + config.l2);

  // theta = (W, b); y_* is the extrapolated point.
  Tensor w({l, d}), b({l}), w_prev = w, b_prev = b;
  auto gradient = [&](const Tensor& wy, const Tensor& by, Tensor& gw, Tensor& gb) {
    Tensor p = logits(xs, wy, by);
    softmax_rows(p);
    for (std::size_t i = 0; i < n; ++i) p(i, static_cast<std::size_t>(y[i])) -= 1.0;
    for (double& v : p.storage()) v /= static_cast<double>(n);
    gw = kernels::active::matmul_tn(p, xs);
    for (std::size_t k = 0; k < w.size(); ++k) gw[k] += config.l2 * wy[k];
    gb = Tensor({l});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < l; ++k) gb[k] += p(i, k);
  };

  double t = 1.0;
  Tensor gw, gb;
  for (std::size_t it = 0; it < config.max_iter; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    Tensor wy = w, by = b;
    for (std::size_t k = 0; k < w.size(); ++k) wy[k] += beta * (w[k] - w_prev[k]);
    for (std::size_t k = 0; k < l; ++k) by[k] += beta * (b[k] - b_prev[k]);
    gradient(wy, by, gw, gb);
    double gmax = 0.0;
    for (double v : gw.storage()) gmax = std::max(gmax, std::abs(v));
    for (double v : gb.storage()) gmax = std::max(gmax, std::abs(v));
    w_prev = w;
    b_prev = b;
    double progress = 0.0;  // <grad, step direction>, restart when momentum points uphill
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] = wy[k] - step * gw[k];
      progress += gw[k] * (w[k] - w_prev[k]);
    }
    for (std::size_t k = 0; k < l; ++k) {
      b[k] = by[k] - step * gb[k];
      progress += gb[k] * (b[k] - b_prev[k]);
    }
    t = progress > 0.0 ? 1.0 : t_next;
    if (gmax < config.tol) break;
  }
  return SoftClassifier(std::move(w), std::move(b), std::move(mean), std::move(scale));
}

std::vector<int> stratified_folds(std::span<const int> labels, std::size_t classes, std::size_t k, Rng& rng) {
  if (k < 2) throw ConfigError("cross-validation needs k >= 2 folds");
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) members.at(static_cast<std::size_t>(labels[i])).push_back(i);
  for (std::size_t c = 0; c < classes; ++c)
    if (members[c].size() < k)
      throw ConfigError(fmt::format("class {} has {} examples, fewer than k={} folds; use a smaller k", c,
                                    members[c].size(), k));
  std::vector<int> fold(labels.size());
  for (auto& idx : members) {
    rng.shuffle(std::span(idx));
    for (std::size_t j = 0; j < idx.size(); ++j) fold[idx[j]] = static_cast<int>(j % k);
  }
  return fold;
}

CvPredictions cv_predictions(const ExampleSet& examples, std::size_t k, const ClassifierConfig& config, Rng& rng) {
  if (!examples.labeled()) throw ValidationError("cross-validation needs example labels");
  const std::size_t n = examples.size(), d = examples.dim(), l = examples.class_count;
  CvPredictions cv;
  cv.labels = *examples.labels;
  cv.classes = l;
  cv.fold = stratified_folds(cv.labels, l, k, rng);
  cv.posteriors = Tensor({n, l});
  cv.hard.assign(n, 0);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (cv.fold[i] == static_cast<int>(f) ? test : train).push_back(i);
    auto gather = [&](const std::vector<std::size_t>& rows) {
      Tensor x({rows.size(), d});
      for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(examples.features.row(rows[r]).begin(), d, x.row(r).begin());
      return x;
    };
    ExampleSet part{gather(train), std::vector<int>(), l};
    for (std::size_t i : train) part.labels->push_back(cv.labels[i]);
    const Tensor p = train_classifier(part, config).predict_proba(gather(test));
    for (std::size_t r = 0; r < test.size(); ++r) {
      std::copy_n(p.row(r).begin(), l, cv.posteriors.row(test[r]).begin());
      cv.hard[test[r]] = argmax_row(p.row(r));
    }
  }
  return cv;
}

}  // namespace gmq
