#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gmq/data.hpp"
#include "gmq/rng.hpp"

namespace gmq {

struct SamplingConfig {
  std::size_t bag_size = 100;        // m for APP bags
  std::size_t bags_per_epoch = 100;  // bags emitted per epoch
  bool mixer_enabled = true;
  bool app_enabled = false;          // U+APP when true
  double app_fraction = 0.5;
  std::uint64_t seed = 0;
};

// Uniform draw from the (l-1)-simplex: sort l-1 uniforms, take the gaps
// between 0, the sorted draws, and 1.
PrevalenceVector kraemer_sample(std::size_t classes, Rng& rng);

// Per-class counts summing to m: floor(m p_k), then the leftover units go to
// the largest fractional remainders, ties to the lowest class index.
std::vector<std::size_t> largest_remainder_counts(const PrevalenceVector& p, std::size_t m);

// Class-conditional sampler over an example-labeled set (APP protocol).
class AppSampler {
 public:
  explicit AppSampler(const ExampleSet& examples);

  // m examples drawn with replacement, class counts from
  // largest_remainder_counts; the bag is labeled with its realized counts.
  Bag sample(const PrevalenceVector& target, std::size_t m, Rng& rng) const;
  std::size_t class_count() const { return members_.size(); }

 private:
  const ExampleSet* examples_;
  std::vector<std::vector<std::size_t>> members_;
};

Bag sample_bag_app(const ExampleSet& examples, const PrevalenceVector& target, std::size_t m, Rng& rng);

// ceil(m/2) rows of `a` and floor(m/2) rows of `b`, each without replacement,
// labeled with the mean of the parents' prevalences. Rows of the result are
// shuffled. Parents must be labeled, equal-sized, and equal-dimensional.
Bag bag_mixer(const Bag& a, const Bag& b, Rng& rng);

// Per-epoch training bags for the deep quantifiers.
//
// An epoch emits bags_per_epoch bags. With APP enabled, round(app_fraction *
// bags_per_epoch) of them are APP bags at Kraemer prevalences and the rest are
// natural. Natural slots walk a fresh shuffle of the natural bags; with the
// mixer on, each slot's bag is mixed with another uniformly chosen natural
// bag. The combined list is shuffled. Everything is keyed on (seed, epoch).
class TrainingStream {
 public:
  // `labeled` may be null for the U setting; it must outlive the stream.
  TrainingStream(std::vector<Bag> natural, const ExampleSet* labeled, SamplingConfig config);

  std::vector<Bag> epoch(std::size_t index) const;

  const SamplingConfig& config() const { return config_; }
  std::size_t app_bags_per_epoch() const;
  const std::vector<Bag>& natural() const { return natural_; }

 private:
  std::vector<Bag> natural_;
  std::optional<AppSampler> app_;
  SamplingConfig config_;
};

}  // namespace gmq
