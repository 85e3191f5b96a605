#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmq/tensor.hpp"

namespace gmq {

// A point on the probability simplex over l classes.
class PrevalenceVector {
 public:
  PrevalenceVector() = default;
  // Validates: every entry in [0,1], sum within `tol` of 1.
  explicit PrevalenceVector(std::vector<double> values, double tol = 1e-9);

  // Accepts a vector whose sum is within `tol` of 1 (e.g. rounded decimals
  // read from disk) and divides it by its sum.
  static PrevalenceVector renormalized(std::vector<double> values, double tol);
  static PrevalenceVector uniform(std::size_t classes);
  static PrevalenceVector one_hot(std::size_t classes, std::size_t k);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  friend bool operator==(const PrevalenceVector&, const PrevalenceVector&) = default;

 private:
  std::vector<double> values_;
};

// Class counts over m. Throws ContractViolation on an empty list or a label >= l.
PrevalenceVector prevalence_from_labels(std::span<const int> labels, std::size_t classes);

// A bag of m examples (rows of `features`), optionally labeled.
struct Bag {
  Tensor features;  // m x d_in
  std::optional<PrevalenceVector> prevalence;
  std::optional<std::vector<int>> labels;

  std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
  std::size_t dim() const { return features.rank() == 2 ? features.cols() : 0; }
};

// Checks m >= 1 and, when both labels and prevalence are present, that the
// label counts over m match the prevalence within 1e-9.
void validate_bag(const Bag& bag);

// Individually labeled (or unlabeled) examples, as read from examples.csv.
struct ExampleSet {
  Tensor features;  // n x d_in
  std::optional<std::vector<int>> labels;
  std::size_t class_count = 0;

  std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
  std::size_t dim() const { return features.rank() == 2 ? features.cols() : 0; }
  bool labeled() const { return labels.has_value(); }
};

// Dataset manifest (meta.json).
struct Manifest {
  std::size_t classes = 0;
  std::size_t features = 0;
  std::size_t examples = 0;
  std::size_t bags = 0;
  std::size_t test_bags = 0;
};

struct Dataset {
  Manifest manifest;
  ExampleSet examples;
  std::vector<Bag> bags;       // bags/
  std::vector<Bag> test_bags;  // test_bags/, may be empty

  std::size_t class_count() const { return manifest.classes; }
  std::size_t feature_dim() const { return manifest.features; }
};

// Header `f0,...,f{d-1}[,label]`. Class count is `declared_classes` when
// given, otherwise max label + 1.
ExampleSet load_examples_csv(const std::filesystem::path& path,
                             std::optional<std::size_t> declared_classes = std::nullopt);
void save_examples_csv(const std::filesystem::path& path, const ExampleSet& examples);

// `dir/bag_<i>.csv` feature rows plus `dir/prevalences.csv` with header
// `bag_id,p0,...,p{l-1}`. Ids must be exactly 0..n-1. Prevalence rows must sum
// to 1 within 1e-6 and are renormalized on load.
std::vector<Bag> load_bags(const std::filesystem::path& dir,
                           std::optional<std::size_t> declared_classes = std::nullopt);
void save_bags(const std::filesystem::path& dir, std::span<const Bag> bags);

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Directory layout: meta.json, examples.csv, bags/, and optionally test_bags/.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

// Shortest text that is exact for doubles at 17 significant digits.
std::string format_double(double v);

}  // namespace gmq
