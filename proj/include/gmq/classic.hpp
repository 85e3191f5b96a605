#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gmq/data.hpp"
#include "gmq/rng.hpp"
#include "gmq/tensor.hpp"

namespace gmq {

// ---------------------------------------------------------------------------
// Base classifier

struct ClassifierConfig {
  double l2 = 1e-2;              // penalty on W (not the bias)
  std::size_t max_iter = 5000;   // accelerated gradient steps
  double tol = 1e-8;             // stop when the gradient inf-norm drops below
};

// Multinomial logistic regression on standardized features.
class SoftClassifier {
 public:
  SoftClassifier() = default;
  SoftClassifier(Tensor weights, Tensor bias, Tensor mean, Tensor scale);

  std::size_t class_count() const { return weights_.rows(); }
  std::size_t dim() const { return weights_.cols(); }

  Tensor predict_proba(const Tensor& x) const;  // (m, l), rows on the simplex
  std::vector<int> predict(const Tensor& x) const;

  const Tensor& weights() const { return weights_; }  // (l, d)
  const Tensor& bias() const { return bias_; }        // (l)
  const Tensor& mean() const { return mean_; }        // (d)
  const Tensor& scale() const { return scale_; }      // (d)

 private:
  Tensor weights_, bias_, mean_, scale_;
};

// Full-batch Nesterov gradient descent on mean cross-entropy + l2/2 ||W||^2,
// starting from zero; deterministic.
SoftClassifier train_classifier(const ExampleSet& examples, const ClassifierConfig& config = {});

// Argmax with ties to the lowest class index.
int argmax_row(std::span<const double> row);

// ---------------------------------------------------------------------------
// Cross-validation

struct CvPredictions {
  Tensor posteriors;        // (n, l), out-of-fold
  std::vector<int> hard;    // argmax of posteriors
  std::vector<int> fold;    // fold id per example
  std::vector<int> labels;  // true labels, copied for convenience
  std::size_t classes = 0;
};

// Stratified k-fold: each class's examples are shuffled and dealt round-robin
// into folds.
std::vector<int> stratified_folds(std::span<const int> labels, std::size_t classes, std::size_t k, Rng& rng);
CvPredictions cv_predictions(const ExampleSet& examples, std::size_t k, const ClassifierConfig& config, Rng& rng);

// ---------------------------------------------------------------------------
// Prevalence estimators on classifier output

PrevalenceVector cc(const Tensor& posteriors);
PrevalenceVector pcc(const Tensor& posteriors);

// C(i, j) = estimated P(predicted i | true j). Columns sum to one.
struct ConfusionEstimate {
  Tensor matrix;
  bool soft = false;
};
ConfusionEstimate hard_confusion(const CvPredictions& cv);
ConfusionEstimate soft_confusion(const CvPredictions& cv);

// Euclidean projection of v onto the probability simplex.
std::vector<double> project_simplex(std::span<const double> v);

struct SimplexSolve {
  PrevalenceVector p;
  std::size_t iterations = 0;
  bool converged = false;
};

// min ||C p - q||^2 over the simplex by accelerated projected gradient with
// adaptive restart. Stops when an iteration moves p by less than `tol`
// (inf-norm). Warns and returns the best iterate on non-convergence.
SimplexSolve solve_simplex_ls(const Tensor& c, std::span<const double> q, double tol = 1e-10,
                              std::size_t max_iter = 100000);

PrevalenceVector acc(const Tensor& posteriors, const ConfusionEstimate& confusion);
PrevalenceVector pacc(const Tensor& posteriors, const ConfusionEstimate& confusion);

// Per true class j, l concatenated per-coordinate histograms of posteriors
// (b bins on [0,1] each, each summing to 1).
struct HistogramModel {
  std::size_t bins = 8;
  std::size_t classes = 0;
  Tensor class_histograms;  // (l, l*b)
};

// Histograms of the l posterior coordinates over rows of `posteriors`, (l*b).
std::vector<double> posterior_histogram(const Tensor& posteriors, std::size_t bins);
HistogramModel histogram_model(const CvPredictions& cv, std::size_t bins);

struct DmyConfig {
  std::size_t restarts = 10;
  double tol = 1e-7;
  std::size_t max_iter = 10000;
};

// Mean over coordinates of the Hellinger distance between sum_j p_j H_j and
// the bag histogram.
double dmy_objective(const HistogramModel& model, std::span<const double> bag_hist, std::span<const double> p);
PrevalenceVector dmy_from_histogram(const HistogramModel& model, std::span<const double> bag_hist, Rng& rng,
                                    const DmyConfig& config = {});
PrevalenceVector dmy(const Tensor& posteriors, const HistogramModel& model, Rng& rng, const DmyConfig& config = {});

struct EmResult {
  PrevalenceVector p;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::vector<double>> priors;  // prior after each M-step
  std::vector<double> log_likelihood;       // bag log-likelihood at each M-step input
};

// Saerens-Latinne-Decaestecker prior adjustment.
EmResult emq_trace(const Tensor& posteriors, std::span<const double> train_priors, std::size_t max_iter = 1000,
                   double tol = 1e-6);
PrevalenceVector emq(const Tensor& posteriors, std::span<const double> train_priors, std::size_t max_iter = 1000,
                     double tol = 1e-6);

// ---------------------------------------------------------------------------
// Calibration

// Binary: Platt sigmoid on the log-odds, p1 = sigmoid(a * logit(s1) + b).
// Multiclass: temperature, p = softmax(log(s) / t).
struct Calibration {
  enum class Kind { Platt, Temperature } kind = Kind::Temperature;
  double a = 1.0, b = 0.0;  // Platt
  double t = 1.0;           // temperature

  Tensor apply(const Tensor& posteriors) const;
};

Calibration platt_calibrate(const Tensor& posteriors, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Packaged quantifiers

enum class ClassicMethod { Cc, Pcc, Acc, Pacc, Dmy, Emq, EmqPlatt };

ClassicMethod parse_classic_method(std::string_view name);  // "cc", ..., "emq-platt"
std::string_view method_name(ClassicMethod method) noexcept;
bool is_classic_method(std::string_view name);

struct ClassicConfig {
  ClassifierConfig classifier;
  std::size_t folds = 10;
  std::size_t dmy_bins = 8;
  DmyConfig dmy;
};

// A fitted classifier plus whatever the method needs on top of it.
class ClassicQuantifier {
 public:
  static ClassicQuantifier fit(ClassicMethod method, const ExampleSet& examples, const ClassicConfig& config,
                               Rng& rng);

  // Deterministic; DMy restarts are seeded from `seed`.
  PrevalenceVector quantify(const Tensor& bag) const;

  ClassicMethod method() const { return method_; }
  const ClassicConfig& config() const { return config_; }
  const SoftClassifier& classifier() const { return classifier_; }
  std::size_t class_count() const { return classifier_.class_count(); }
  std::size_t dim() const { return classifier_.dim(); }

  // Named tensors for serialization; only what the method uses.
  std::map<std::string, Tensor> parameters() const;
  static ClassicQuantifier from_parameters(ClassicMethod method, const ClassicConfig& config, std::uint64_t seed,
                                           const std::map<std::string, Tensor>& params);
  std::uint64_t seed() const { return seed_; }

 private:
  ClassicMethod method_ = ClassicMethod::Cc;
  ClassicConfig config_;
  SoftClassifier classifier_;
  ConfusionEstimate confusion_;
  HistogramModel histograms_;
  Calibration calibration_;
  std::vector<double> train_priors_;
  std::uint64_t seed_ = 0;
};

}  // namespace gmq
