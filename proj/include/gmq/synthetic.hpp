#pragma once

#include <cstddef>
#include <cstdint>

#include "gmq/data.hpp"
#include "gmq/rng.hpp"

namespace gmq {

// Isotropic unit-variance Gaussian class clusters. Class c is centered at
// (separation / sqrt 2) * e_c, so every pair of centers is `separation`
// standard deviations apart. Needs features >= classes.
struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t features = 10;
  std::size_t examples = 3000;
  std::size_t bags = 200;
  std::size_t test_bags = 200;
  std::size_t bag_size = 100;
  double separation = 2.0;

  void validate() const;  // ConfigError on l < 2, n < l, d_in < l, m < 1
};

class SyntheticSource {
 public:
  explicit SyntheticSource(const SyntheticSpec& spec);

  // `count` fresh draws from class k, (count, d_in).
  Tensor sample_class(std::size_t k, std::size_t count, Rng& rng) const;
  // Balanced labels (n/l each, remainder to the lowest classes), shuffled.
  ExampleSet examples(std::size_t n, Rng& rng) const;
  // Class counts by largest remainder, rows shuffled; labeled with the
  // realized prevalence. Example labels are kept on the bag.
  Bag bag(const PrevalenceVector& p, std::size_t m, Rng& rng) const;
  // Bags at Kraemer-drawn prevalences.
  std::vector<Bag> bags(std::size_t count, std::size_t m, Rng& rng) const;

  const SyntheticSpec& spec() const { return spec_; }

 private:
  SyntheticSpec spec_;
};

// examples.csv, bags/ and test_bags/ content, each part from its own stream
// derived from `seed`. Bag example labels are dropped.
Dataset generate_dataset(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace gmq
