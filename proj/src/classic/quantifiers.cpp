#include <fmt/format.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gmq/classic.hpp"
#include "gmq/error.hpp"
#include "gmq/log.hpp"
#include "gmq/protocols.hpp"

namespace gmq {

namespace {

void require_posteriors(const Tensor& p) {
  if (p.rank() != 2 || p.rows() == 0 || p.cols() == 0)
    throw ContractViolation("quantifier: posteriors must be a non-empty (m,l) matrix, got " + shape_string(p.shape()));
}

// Sum-normalize away rounding drift before validating.
PrevalenceVector to_prevalence(std::vector<double> v) {
  double s = 0.0;
  for (double& x : v) s += (x = std::max(0.0, x));
  for (double& x : v) x /= s;
  return PrevalenceVector(std::move(v));
}

double sq_residual(const Tensor& c, std::span<const double> p, std::span<const double> q) {
  double f = 0.0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    double r = -q[i];
    for (std::size_t j = 0; j < c.cols(); ++j) r += c(i, j) * p[j];
    f += r * r;
  }
  return f;
}

}  // namespace

PrevalenceVector cc(const Tensor& posteriors) {
  require_posteriors(posteriors);
  std::vector<double> counts(posteriors.cols());
  for (std::size_t i = 0; i < posteriors.rows(); ++i) counts[argmax_row(posteriors.row(i))] += 1.0;
  for (double& v : counts) v /= static_cast<double>(posteriors.rows());
  return PrevalenceVector(std::move(counts));
}

PrevalenceVector pcc(const Tensor& posteriors) {
  require_posteriors(posteriors);
  std::vector<double> mean(posteriors.cols());
  for (std::size_t i = 0; i < posteriors.rows(); ++i)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += posteriors(i, k);
  for (double& v : mean) v /= static_cast<double>(posteriors.rows());
  return to_prevalence(std::move(mean));
}

namespace {

ConfusionEstimate confusion_from(const CvPredictions& cv, bool soft) {
  const std::size_t l = cv.classes;
  ConfusionEstimate ce{Tensor({l, l}), soft};
  std::vector<double> count(l);
  for (std::size_t i = 0; i < cv.labels.size(); ++i) {
    const auto j = static_cast<std::size_t>(cv.labels[i]);
    count[j] += 1.0;
    if (soft) {
      for (std::size_t k = 0; k < l; ++k) ce.matrix(k, j) += cv.posteriors(i, k);
    } else {
      ce.matrix(static_cast<std::size_t>(cv.hard[i]), j) += 1.0;
    }
  }
  for (std::size_t j = 0; j < l; ++j) {
    if (count[j] == 0.0) throw ValidationError(fmt::format("confusion: class {} has no examples", j));
    for (std::size_t k = 0; k < l; ++k) ce.matrix(k, j) /= count[j];
  }
  return ce;
}

}  // namespace

ConfusionEstimate hard_confusion(const CvPredictions& cv) { return confusion_from(cv, false); }
ConfusionEstimate soft_confusion(const CvPredictions& cv) { return confusion_from(cv, true); }

std::vector<double> project_simplex(std::span<const double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(0.0, v[i] - theta);
  return out;
}

namespace {

// Exact least squares on the support of `p` under sum(p) = 1, via the KKT
// system. Kept only if it stays nonnegative and does not increase the
// residual; gradient steps alone stall near 1e-6 on ill-conditioned C.
std::vector<double> polish(const Eigen::MatrixXd& c, std::span<const double> q, std::vector<double> p, double f) {
  std::vector<Eigen::Index> support;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) support.push_back(static_cast<Eigen::Index>(j));
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd cs(c.rows(), s);
  for (Eigen::Index k = 0; k < s; ++k) cs.col(k) = c.col(support[static_cast<std::size_t>(k)]);
  const Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + 1, s + 1);
  kkt.topLeftCorner(s, s) = 2.0 * cs.transpose() * cs;
  kkt.block(0, s, s, 1).setOnes();
  kkt.block(s, 0, 1, s).setOnes();
  Eigen::VectorXd rhs(s + 1);
  rhs.head(s) = 2.0 * cs.transpose() * qv;
  rhs[s] = 1.0;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return p;
  const Eigen::VectorXd sol = lu.solve(rhs);
  std::vector<double> cand(p.size(), 0.0);
  for (Eigen::Index k = 0; k < s; ++k) {
    if (!(sol[k] >= 0.0)) return p;
    cand[static_cast<std::size_t>(support[static_cast<std::size_t>(k)])] = sol[k];
  }
  Eigen::VectorXd cv = Eigen::Map<const Eigen::VectorXd>(cand.data(), static_cast<Eigen::Index>(cand.size()));
  return (c * cv - qv).squaredNorm() <= f ? cand : p;
}

}  // namespace

SimplexSolve solve_simplex_ls(const Tensor& c, std::span<const double> q, double tol, std::size_t max_iter) {
  if (c.rank() != 2 || c.rows() != q.size())
    throw ContractViolation(fmt::format("simplex solve: shape mismatch {} vs ({})", shape_string(c.shape()), q.size()));
  const std::size_t rows = c.rows(), l = c.cols();
  Eigen::MatrixXd cm(rows, l);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < l; ++j) cm(i, j) = c(i, j);
  const Eigen::MatrixXd gram = cm.transpose() * cm;
  const double lip = 2.0 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .maxCoeff();
  Eigen::VectorXd ctq(l);
  for (std::size_t j = 0; j < l; ++j) {
    ctq[j] = 0.0;
    for (std::size_t i = 0; i < rows; ++i) ctq[j] += c(i, j) * q[i];
  }
  if (!(lip > 0.0)) return {PrevalenceVector::uniform(l), 0, true};

  std::vector<double> x(l, 1.0 / static_cast<double>(l)), x_prev = x, y = x, best = x, trial(l);
  double best_f = sq_residual(c, x, q), t = 1.0;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    Eigen::Map<const Eigen::VectorXd> ym(y.data(), static_cast<Eigen::Index>(l));
    const Eigen::VectorXd grad = 2.0 * (gram * ym - ctq);
    for (std::size_t j = 0; j < l; ++j) trial[j] = y[j] - grad[static_cast<Eigen::Index>(j)] / lip;
    x_prev = x;
    x = project_simplex(trial);
    double move = 0.0, progress = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      move = std::max(move, std::abs(x[j] - x_prev[j]));
      progress += grad[static_cast<Eigen::Index>(j)] * (x[j] - x_prev[j]);
    }
    const double f = sq_residual(c, x, q);
    if (f <= best_f) {
      best_f = f;
      best = x;
    }
    if (move < tol) return {to_prevalence(polish(cm, q, best, best_f)), it, true};
    const double t_next = progress > 0.0 ? 1.0 : 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = progress > 0.0 ? 0.0 : (t - 1.0) / t_next;
    for (std::size_t j = 0; j < l; ++j) y[j] = x[j] + beta * (x[j] - x_prev[j]);
    t = t_next;
  }
  warn(fmt::format("simplex least squares did not converge in {} iterations; returning best iterate", max_iter));
  return {to_prevalence(polish(cm, q, best, best_f)), max_iter, false};
}

PrevalenceVector acc(const Tensor& posteriors, const ConfusionEstimate& confusion) {
  return solve_simplex_ls(confusion.matrix, cc(posteriors).values()).p;
}

PrevalenceVector pacc(const Tensor& posteriors, const ConfusionEstimate& confusion) {
  return solve_simplex_ls(confusion.matrix, pcc(posteriors).values()).p;
}

// --- DMy ------------------------------------------------------------------

namespace {

std::size_t bin_of(double v, std::size_t bins) {
  const auto b = static_cast<std::size_t>(std::floor(std::clamp(v, 0.0, 1.0) * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

}  // namespace

std::vector<double> posterior_histogram(const Tensor& posteriors, std::size_t bins) {
  require_posteriors(posteriors);
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  const std::size_t l = posteriors.cols();
  std::vector<double> h(l * bins);
  for (std::size_t i = 0; i < posteriors.rows(); ++i)
    for (std::size_t c = 0; c < l; ++c) h[c * bins + bin_of(posteriors(i, c), bins)] += 1.0;
  for (double& v : h) v /= static_cast<double>(posteriors.rows());
  return h;
}

HistogramModel histogram_model(const CvPredictions& cv, std::size_t bins) {
  const std::size_t l = cv.classes;
  HistogramModel hm{bins, l, Tensor({l, l * bins})};
  for (std::size_t j = 0; j < l; ++j) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < cv.labels.size(); ++i)
      if (cv.labels[i] == static_cast<int>(j)) rows.push_back(i);
    if (rows.empty()) throw ValidationError(fmt::format("histogram model: class {} has no examples", j));
    Tensor sub({rows.size(), l});
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(cv.posteriors.row(rows[r]).begin(), l, sub.row(r).begin());
    const auto h = posterior_histogram(sub, bins);
    std::copy(h.begin(), h.end(), hm.class_histograms.row(j).begin());
  }
  return hm;
}

namespace {

// Objective and gradient of the mean per-coordinate Hellinger distance.
double dmy_eval(const HistogramModel& hm, std::span<const double> h, std::span<const double> p,
                std::vector<double>* grad) {
  const std::size_t l = hm.classes, b = hm.bins, width = l * b;
  std::vector<double> mix(width);
  for (std::size_t j = 0; j < l; ++j)
    for (std::size_t k = 0; k < width; ++k) mix[k] += p[j] * hm.class_histograms(j, k);
  double total = 0.0;
  std::vector<double> dmix(grad ? width : 0);
  for (std::size_t c = 0; c < l; ++c) {
    double s = 0.0;
    for (std::size_t k = c * b; k < (c + 1) * b; ++k) {
      const double d = std::sqrt(std::max(mix[k], 0.0)) - std::sqrt(h[k]);
      s += d * d;
    }
    const double hd = std::sqrt(0.5 * s);
    total += hd;
    if (grad && hd > 0.0) {
      for (std::size_t k = c * b; k < (c + 1) * b; ++k) {
        const double m = std::max(mix[k], 1e-12);
        dmix[k] = (1.0 - std::sqrt(h[k] / m)) / (4.0 * hd);
      }
    }
  }
  if (grad) {
    grad->assign(l, 0.0);
    for (std::size_t j = 0; j < l; ++j)
      for (std::size_t k = 0; k < width; ++k) (*grad)[j] += dmix[k] * hm.class_histograms(j, k);
    for (double& g : *grad) g /= static_cast<double>(l);
  }
  return total / static_cast<double>(l);
}

}  // namespace

double dmy_objective(const HistogramModel& model, std::span<const double> bag_hist, std::span<const double> p) {
  if (bag_hist.size() != model.classes * model.bins || p.size() != model.classes)
    throw ContractViolation("dmy: histogram or prevalence length mismatch");
  return dmy_eval(model, bag_hist, p, nullptr);
}

PrevalenceVector dmy_from_histogram(const HistogramModel& model, std::span<const double> bag_hist, Rng& rng,
                                    const DmyConfig& config) {
  if (bag_hist.size() != model.classes * model.bins)
    throw ContractViolation("dmy: bag histogram has the wrong length");
  const std::size_t l = model.classes;
  std::vector<double> best;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<double> grad, next(l), step_pt(l);
  for (std::size_t r = 0; r < std::max<std::size_t>(config.restarts, 1); ++r) {
    std::vector<double> x = kraemer_sample(l, rng).values();
    double f = dmy_eval(model, bag_hist, x, &grad);
    double step = 1.0;
    for (std::size_t it = 0; it < config.max_iter; ++it) {
      bool accepted = false;
      double move = 0.0;
      for (int bt = 0; bt < 60; ++bt) {
        for (std::size_t j = 0; j < l; ++j) step_pt[j] = x[j] - step * grad[j];
        next = project_simplex(step_pt);
        double lin = 0.0, sq = 0.0;
        move = 0.0;
        for (std::size_t j = 0; j < l; ++j) {
          const double dx = next[j] - x[j];
          lin += grad[j] * dx;
          sq += dx * dx;
          move = std::max(move, std::abs(dx));
        }
        const double fn = dmy_eval(model, bag_hist, next, nullptr);
        if (fn <= f + lin + sq / (2.0 * step)) {
          accepted = fn <= f;
          if (accepted) {
            x = next;
            f = fn;
          }
          break;
        }
        step *= 0.5;
      }
      if (!accepted || move < config.tol) break;
      f = dmy_eval(model, bag_hist, x, &grad);
      step *= 2.0;
    }
    if (f < best_f) {
      best_f = f;
      best = x;
    }
  }
  return to_prevalence(std::move(best));
}

PrevalenceVector dmy(const Tensor& posteriors, const HistogramModel& model, Rng& rng, const DmyConfig& config) {
  if (posteriors.rank() != 2 || posteriors.cols() != model.classes)
    throw ContractViolation("dmy: posterior width does not match the histogram model");
  return dmy_from_histogram(model, posterior_histogram(posteriors, model.bins), rng, config);
}

// --- EMQ ------------------------------------------------------------------

EmResult emq_trace(const Tensor& posteriors, std::span<const double> train_priors, std::size_t max_iter, double tol) {
  require_posteriors(posteriors);
  const std::size_t m = posteriors.rows(), l = posteriors.cols();
  if (train_priors.size() != l) throw ContractViolation("emq: train priors length does not match posteriors");
  for (double v : train_priors)
    if (!(v > 0.0)) throw ContractViolation("emq: train priors must be positive");
  EmResult res;
  std::vector<double> prior(train_priors.begin(), train_priors.end()), next(l), w(l);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    double loglik = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < l; ++k) s += (w[k] = posteriors(i, k) * prior[k] / train_priors[k]);
      loglik += std::log(s);
      for (std::size_t k = 0; k < l; ++k) next[k] += w[k] / s;
    }
    double change = 0.0;
    for (std::size_t k = 0; k < l; ++k) {
      next[k] /= static_cast<double>(m);
      change = std::max(change, std::abs(next[k] - prior[k]));
    }
    prior = next;
    res.priors.push_back(prior);
    res.log_likelihood.push_back(loglik);
    res.iterations = it;
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) warn(fmt::format("EMQ reached {} iterations without converging", max_iter));
  res.p = to_prevalence(prior);
  return res;
}

PrevalenceVector emq(const Tensor& posteriors, std::span<const double> train_priors, std::size_t max_iter,
                     double tol) {
  return emq_trace(posteriors, train_priors, max_iter, tol).p;
}

// --- calibration ----------------------------------------------------------

namespace {

constexpr double kTiny = 1e-12;

double logit(double p) {
  p = std::clamp(p, kTiny, 1.0 - kTiny);
  return std::log(p / (1.0 - p));
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Gradient descent with Armijo backtracking on a smooth convex objective.
template <class F>
std::vector<double> descend(F&& f, std::vector<double> x, std::size_t max_iter = 10000, double tol = 1e-9) {
  std::vector<double> g(x.size()), trial(x.size());
  double fx = f(x, &g);
  double step = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    double gg = 0.0;
    for (double v : g) gg += v * v;
    if (std::sqrt(gg) < tol) break;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t k = 0; k < x.size(); ++k) trial[k] = x[k] - step * g[k];
      const double ft = f(trial, nullptr);
      if (ft <= fx - 0.5 * step * gg) {
        x = trial;
        const double prev = fx;
        fx = f(x, &g);
        if (prev - fx <= 1e-15 * (1.0 + std::abs(fx))) return x;
        moved = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return x;
}

}  // namespace

Tensor Calibration::apply(const Tensor& posteriors) const {
  require_posteriors(posteriors);
  Tensor out(posteriors.shape());
  for (std::size_t i = 0; i < posteriors.rows(); ++i) {
    if (kind == Kind::Platt) {
      if (posteriors.cols() != 2) throw ContractViolation("Platt calibration is binary only");
      const double p1 = sigmoid(a * logit(posteriors(i, 1)) + b);
      out(i, 0) = 1.0 - p1;
      out(i, 1) = p1;
      continue;
    }
    auto row = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < row.size(); ++k)
      mx = std::max(mx, row[k] = std::log(std::max(posteriors(i, k), 1e-300)) / t);
    double s = 0.0;
    for (double& v : row) s += (v = std::exp(v - mx));
    for (double& v : row) v /= s;
  }
  return out;
}

Calibration platt_calibrate(const Tensor& posteriors, std::span<const int> labels) {
  require_posteriors(posteriors);
  const std::size_t n = posteriors.rows(), l = posteriors.cols();
  if (labels.size() != n) throw ContractViolation("calibration: one label per row required");
  if (std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels[0]; }))
    throw ValidationError("calibration needs examples from more than one class");
  Calibration cal;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (l == 2) {
    cal.kind = Calibration::Kind::Platt;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = logit(posteriors(i, 1));
    auto nll = [&](const std::vector<double>& ab, std::vector<double>* g) {
      double f = 0.0, ga = 0.0, gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double z = ab[0] * x[i] + ab[1];
        // -log sigmoid(+-z), stable form.
        const double sz = labels[i] == 1 ? z : -z;
        f += sz >= 0 ? std::log1p(std::exp(-sz)) : -sz + std::log1p(std::exp(sz));
        const double r = sigmoid(z) - (labels[i] == 1 ? 1.0 : 0.0);
        ga += r * x[i];
        gb += r;
      }
      if (g) *g = {ga * inv_n, gb * inv_n};
      return f * inv_n;
    };
    const auto ab = descend(nll, {1.0, 0.0});
    cal.a = ab[0];
    cal.b = ab[1];
    return cal;
  }
  cal.kind = Calibration::Kind::Temperature;
  Tensor logs(posteriors.shape());
  for (std::size_t k = 0; k < logs.size(); ++k) logs[k] = std::log(std::max(posteriors[k], 1e-300));
  // Parameterized by u = log t so that t stays positive.
  auto nll = [&](const std::vector<double>& u, std::vector<double>* g) {
    const double t = std::exp(u[0]);
    double f = 0.0, gu = 0.0;
    std::vector<double> z(l);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l; ++k) mx = std::max(mx, z[k] = logs(i, k) / t);
      double s = 0.0;
      for (std::size_t k = 0; k < l; ++k) s += std::exp(z[k] - mx);
      const double lse = mx + std::log(s);
      const auto y = static_cast<std::size_t>(labels[i]);
      f += lse - z[y];
      double ez = 0.0;
      for (std::size_t k = 0; k < l; ++k) ez += std::exp(z[k] - lse) * z[k];
      gu += z[y] - ez;
    }
    if (g) *g = {gu * inv_n};
    return f * inv_n;
  };
  cal.t = std::exp(descend(nll, {0.0})[0]);
  return cal;
}

}  // namespace gmq
