#include "gmq/protocols.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmq/error.hpp"

namespace gmq {

PrevalenceVector kraemer_sample(std::size_t classes, Rng& rng) {
  if (classes == 0) throw ContractViolation("kraemer_sample: need at least one class");
  std::vector<double> cuts(classes - 1);
  for (double& c : cuts) c = rng.uniform();
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> p(classes);
  double prev = 0.0;
  for (std::size_t k = 0; k + 1 < classes; ++k) {
    p[k] = cuts[k] - prev;
    prev = cuts[k];
  }
  p[classes - 1] = 1.0 - prev;
  return PrevalenceVector(std::move(p));
}

std::vector<std::size_t> largest_remainder_counts(const PrevalenceVector& p, std::size_t m) {
  const std::size_t l = p.size();
  std::vector<std::size_t> counts(l);
  std::vector<double> rem(l);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < l; ++k) {
    const double exact = p[k] * static_cast<double>(m);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    rem[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; assigned < m; ++i, ++assigned) ++counts[order[i % l]];
  return counts;
}

AppSampler::AppSampler(const ExampleSet& examples) : examples_(&examples) {
  if (!examples.labeled()) throw ConfigError("APP sampling requires example-labeled data");
  members_.resize(examples.class_count);
  for (std::size_t i = 0; i < examples.size(); ++i)
    members_.at(static_cast<std::size_t>((*examples.labels)[i])).push_back(i);
}

Bag AppSampler::sample(const PrevalenceVector& target, std::size_t m, Rng& rng) const {
  if (m == 0) throw ContractViolation("APP bag size must be >= 1");
  if (target.size() != members_.size())
    throw ContractViolation(fmt::format("APP target has {} classes, data has {}", target.size(), members_.size()));
  const auto counts = largest_remainder_counts(target, m);
  const std::size_t d = examples_->dim();
  Bag bag{Tensor({m, d}), std::nullopt, std::vector<int>()};
  std::size_t row = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] && members_[k].empty())
      throw ProtocolError(fmt::format("class {} needs {} examples but has none available", k, counts[k]));
    for (std::size_t j = 0; j < counts[k]; ++j, ++row) {
      const std::size_t src = members_[k][rng.uniform_int(members_[k].size())];
      std::copy_n(examples_->features.row(src).begin(), d, bag.features.row(row).begin());
      bag.labels->push_back(static_cast<int>(k));
    }
  }
  bag.prevalence = prevalence_from_labels(*bag.labels, members_.size());
  return bag;
}

Bag sample_bag_app(const ExampleSet& examples, const PrevalenceVector& target, std::size_t m, Rng& rng) {
  return AppSampler(examples).sample(target, m, rng);
}

namespace {

void copy_rows(const Bag& from, std::span<const std::size_t> rows, Bag& to, std::size_t at) {
  for (std::size_t r : rows) {
    std::copy_n(from.features.row(r).begin(), from.dim(), to.features.row(at).begin());
    if (to.labels) to.labels->push_back((*from.labels)[r]);
    ++at;
  }
}

}  // namespace

Bag bag_mixer(const Bag& a, const Bag& b, Rng& rng) {
  if (!a.prevalence || !b.prevalence) throw ContractViolation("bag_mixer: parents must carry prevalence labels");
  if (a.size() != b.size() || a.dim() != b.dim() || a.prevalence->size() != b.prevalence->size())
    throw ContractViolation(fmt::format("bag_mixer: parent sizes ({}x{}) and ({}x{}) differ", a.size(), a.dim(),
                                        b.size(), b.dim()));
  const std::size_t m = a.size();
  const std::size_t from_a = (m + 1) / 2, from_b = m / 2;
  auto pick = [&](std::size_t count) {
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span(idx));
    idx.resize(count);
    return idx;
  };
  const auto rows_a = pick(from_a);
  const auto rows_b = pick(from_b);
  const bool labeled = a.labels && b.labels;
  Bag mixed{Tensor({m, a.dim()}), std::nullopt, labeled ? std::optional(std::vector<int>()) : std::nullopt};
  copy_rows(a, rows_a, mixed, 0);
  copy_rows(b, rows_b, mixed, from_a);
  std::vector<double> p(a.prevalence->size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = 0.5 * ((*a.prevalence)[k] + (*b.prevalence)[k]);
  mixed.prevalence = PrevalenceVector(std::move(p));
  return mixed;
}

TrainingStream::TrainingStream(std::vector<Bag> natural, const ExampleSet* labeled, SamplingConfig config)
    : natural_(std::move(natural)), config_(config) {
  if (config_.app_enabled) {
    if (!labeled || !labeled->labeled())
      throw ConfigError("U+APP setting requires example-labeled data");
    if (config_.app_fraction < 0.0 || config_.app_fraction > 1.0)
      throw ConfigError("app_fraction must lie in [0,1]");
    app_.emplace(*labeled);
  }
  if (natural_.empty() && app_bags_per_epoch() < config_.bags_per_epoch)
    throw ConfigError("training stream needs natural bags");
  for (const Bag& b : natural_)
    if (!b.prevalence) throw ConfigError("natural training bags must carry prevalence labels");
}

std::size_t TrainingStream::app_bags_per_epoch() const {
  if (!config_.app_enabled) return 0;
  return static_cast<std::size_t>(std::llround(config_.app_fraction * static_cast<double>(config_.bags_per_epoch)));
}

std::vector<Bag> TrainingStream::epoch(std::size_t index) const {
  Rng rng = Rng::derive(config_.seed, index);
  const std::size_t n_app = app_bags_per_epoch();
  const std::size_t n_nat = config_.bags_per_epoch - n_app;
  std::vector<Bag> out;
  out.reserve(config_.bags_per_epoch);

  std::vector<std::size_t> order(natural_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t s = 0; s < n_nat; ++s) {
    if (s % order.size() == 0) rng.shuffle(std::span(order));
    const Bag& base = natural_[order[s % order.size()]];
    if (config_.mixer_enabled && natural_.size() > 1) {
      std::size_t other = rng.uniform_int(natural_.size() - 1);
      if (other >= order[s % order.size()]) ++other;
      out.push_back(bag_mixer(base, natural_[other], rng));
    } else {
      out.push_back(base);
    }
  }
  const std::size_t classes = app_ ? app_->class_count() : 0;
  for (std::size_t s = 0; s < n_app; ++s) out.push_back(app_->sample(kraemer_sample(classes, rng), config_.bag_size, rng));
  rng.shuffle(std::span(out));
  return out;
}

}  // namespace gmq
