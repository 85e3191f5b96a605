#include "gmq/synthetic.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

#include "gmq/error.hpp"
#include "gmq/protocols.hpp"

namespace gmq {

void SyntheticSpec::validate() const {
  if (classes < 2) throw ConfigError(fmt::format("synthetic data needs at least 2 classes, got {}", classes));
  if (examples < classes)
    throw ConfigError(fmt::format("synthetic data needs n >= l examples, got n={} l={}", examples, classes));
  if (features < classes)
    throw ConfigError(fmt::format("synthetic data needs d_in >= l (got d_in={} l={})", features, classes));
  if (bag_size < 1) throw ConfigError("bag size must be >= 1");
  if (!(separation >= 0.0)) throw ConfigError("separation must be >= 0");
}

SyntheticSource::SyntheticSource(const SyntheticSpec& spec) : spec_(spec) { spec_.validate(); }

Tensor SyntheticSource::sample_class(std::size_t k, std::size_t count, Rng& rng) const {
  const std::size_t d = spec_.features;
  const double offset = spec_.separation / std::sqrt(2.0);
  Tensor x({count, d});
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal() + (j == k ? offset : 0.0);
  return x;
}

ExampleSet SyntheticSource::examples(std::size_t n, Rng& rng) const {
  const std::size_t l = spec_.classes;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % l);
  rng.shuffle(std::span(labels));
  ExampleSet ex{Tensor({n, spec_.features}), std::vector<int>(), l};
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor row = sample_class(static_cast<std::size_t>(labels[i]), 1, rng);
    std::copy(row.storage().begin(), row.storage().end(), ex.features.row(i).begin());
  }
  ex.labels = std::move(labels);
  return ex;
}

Bag SyntheticSource::bag(const PrevalenceVector& p, std::size_t m, Rng& rng) const {
  const auto counts = largest_remainder_counts(p, m);
  std::vector<int> labels;
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], static_cast<int>(k));
  rng.shuffle(std::span(labels));
  Bag b{Tensor({m, spec_.features}), std::nullopt, std::vector<int>()};
  for (std::size_t i = 0; i < m; ++i) {
    const Tensor row = sample_class(static_cast<std::size_t>(labels[i]), 1, rng);
    std::copy(row.storage().begin(), row.storage().end(), b.features.row(i).begin());
  }
  b.prevalence = prevalence_from_labels(labels, spec_.classes);
  b.labels = std::move(labels);
  return b;
}

std::vector<Bag> SyntheticSource::bags(std::size_t count, std::size_t m, Rng& rng) const {
  std::vector<Bag> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(bag(kraemer_sample(spec_.classes, rng), m, rng));
  return out;
}

Dataset generate_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  const SyntheticSource src(spec);
  Rng ex_rng = Rng::derive(seed, 1), bag_rng = Rng::derive(seed, 2), test_rng = Rng::derive(seed, 3);
  Dataset ds;
  ds.manifest = {spec.classes, spec.features, spec.examples, spec.bags, spec.test_bags};
  ds.examples = src.examples(spec.examples, ex_rng);
  ds.bags = src.bags(spec.bags, spec.bag_size, bag_rng);
  ds.test_bags = src.bags(spec.test_bags, spec.bag_size, test_rng);
  for (auto* group : {&ds.bags, &ds.test_bags})
    for (Bag& b : *group) b.labels.reset();
  return ds;
}

}  // namespace gmq
