#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "gmq/error.hpp"
#include "gmq/protocols.hpp"

namespace gmq {
namespace {

ExampleSet labeled_set(std::vector<int> labels, std::size_t classes) {
  ExampleSet ex;
  ex.features = Tensor({labels.size(), 2});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ex.features(i, 0) = static_cast<double>(i);
    ex.features(i, 1) = labels[i];
  }
  ex.labels = std::move(labels);
  ex.class_count = classes;
  return ex;
}

Bag tagged_bag(std::size_t m, double tag, PrevalenceVector p) {
  Bag b{Tensor({m, 2}), std::move(p), std::nullopt};
  for (std::size_t i = 0; i < m; ++i) {
    b.features(i, 0) = tag;
    b.features(i, 1) = static_cast<double>(i);
  }
  return b;
}

TEST(Kraemer, SingleClassIsOne) {
  Rng rng(1);
  EXPECT_EQ(kraemer_sample(1, rng).values(), std::vector<double>{1.0});
}

TEST(Kraemer, ThreeClassMeans) {
  Rng rng(2);
  std::vector<double> s(3);
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto p = kraemer_sample(3, rng);
    for (int k = 0; k < 3; ++k) s[k] += p[k];
  }
  for (double v : s) EXPECT_NEAR(v / n, 1.0 / 3.0, 0.01);
}

double ks_uniform(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    d = std::max({d, (i + 1) / n - x[i], x[i] - i / n});
  return d;
}

TEST(Kraemer, BinaryMarginalIsUniform) {
  Rng rng(3);
  std::vector<double> x(100000);
  for (double& v : x) v = kraemer_sample(2, rng)[0];
  EXPECT_LT(ks_uniform(x), 0.01);
}

TEST(Kraemer, DirichletCovariance) {
  for (std::size_t l = 2; l <= 5; ++l) {
    Rng rng(40 + l);
    constexpr int n = 100000;
    std::vector<double> mean(l), cross(l * l);
    for (int i = 0; i < n; ++i) {
      const auto p = kraemer_sample(l, rng);
      for (std::size_t a = 0; a < l; ++a) {
        mean[a] += p[a];
        for (std::size_t b = 0; b < l; ++b) cross[a * l + b] += p[a] * p[b];
      }
    }
    const double expected = -1.0 / (double(l * l) * (l + 1));
    for (std::size_t a = 0; a < l; ++a)
      for (std::size_t b = 0; b < l; ++b) {
        if (a == b) continue;
        const double cov = cross[a * l + b] / n - (mean[a] / n) * (mean[b] / n);
        EXPECT_NEAR(cov, expected, 0.2 * std::abs(expected)) << "l=" << l;
      }
  }
}

TEST(LargestRemainder, TieGoesToLowestIndex) {
  EXPECT_EQ(largest_remainder_counts(PrevalenceVector({0.5, 0.5}), 3), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(largest_remainder_counts(PrevalenceVector({0.2, 0.3, 0.5}), 10), (std::vector<std::size_t>{2, 3, 5}));
  EXPECT_EQ(largest_remainder_counts(PrevalenceVector({0.1, 0.45, 0.45}), 3), (std::vector<std::size_t>{0, 2, 1}));
}

TEST(App, DegeneratePrevalence) {
  const auto ex = labeled_set({0, 1, 0, 1}, 2);
  Rng rng(5);
  const Bag b = sample_bag_app(ex, PrevalenceVector({1, 0}), 5, rng);
  EXPECT_EQ(b.size(), 5u);
  EXPECT_EQ(*b.labels, std::vector<int>(5, 0));
  EXPECT_EQ(b.prevalence->values(), (std::vector<double>{1, 0}));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(b.features(i, 1), 0.0);
}

TEST(App, HalfHalfRounding) {
  const auto ex = labeled_set({0, 1, 1, 0}, 2);
  Rng rng(6);
  const Bag b = sample_bag_app(ex, PrevalenceVector({0.5, 0.5}), 3, rng);
  EXPECT_DOUBLE_EQ((*b.prevalence)[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ((*b.prevalence)[1], 1.0 / 3.0);
}

TEST(App, LabelMatchesMembersProperty) {
  const auto ex = labeled_set({0, 1, 2, 2, 1, 0, 0}, 3);
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    const Bag b = sample_bag_app(ex, kraemer_sample(3, rng), 1 + rng.uniform_int(50), rng);
    EXPECT_EQ(*b.prevalence, prevalence_from_labels(*b.labels, 3));
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.features(i, 1), (*b.labels)[i]);
  }
}

TEST(App, MissingClassIsProtocolError) {
  const auto ex = labeled_set({0, 0}, 2);
  Rng rng(8);
  EXPECT_THROW(sample_bag_app(ex, PrevalenceVector({0.5, 0.5}), 4, rng), ProtocolError);
  EXPECT_NO_THROW(sample_bag_app(ex, PrevalenceVector({1, 0}), 4, rng));
}

TEST(Mixer, SelfMixKeepsLabel) {
  Rng rng(9);
  const Bag a = tagged_bag(7, 1, PrevalenceVector({0.3, 0.7}));
  const Bag m = bag_mixer(a, a, rng);
  EXPECT_EQ(m.prevalence->values(), a.prevalence->values());
}

TEST(Mixer, OppositeOneHots) {
  Rng rng(10);
  const Bag m = bag_mixer(tagged_bag(4, 1, PrevalenceVector({1, 0})), tagged_bag(4, 2, PrevalenceVector({0, 1})), rng);
  EXPECT_EQ(m.prevalence->values(), (std::vector<double>{0.5, 0.5}));
}

TEST(Mixer, CompositionProperty) {
  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t m = 1 + rng.uniform_int(40);
    const Bag a = tagged_bag(m, 1, kraemer_sample(3, rng));
    const Bag b = tagged_bag(m, 2, kraemer_sample(3, rng));
    const Bag mixed = bag_mixer(a, b, rng);
    ASSERT_EQ(mixed.size(), m);
    std::map<double, std::vector<double>> from;
    for (std::size_t i = 0; i < m; ++i) from[mixed.features(i, 0)].push_back(mixed.features(i, 1));
    EXPECT_EQ(from[1].size(), (m + 1) / 2);
    EXPECT_EQ(from[2].size(), m / 2);
    for (auto& [tag, rows] : from) {
      std::sort(rows.begin(), rows.end());
      EXPECT_EQ(std::adjacent_find(rows.begin(), rows.end()), rows.end()) << "row drawn twice";
    }
    double s = 0.0;
    for (double p : *mixed.prevalence) s += p;
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(Mixer, SizeMismatchIsContractViolation) {
  Rng rng(12);
  EXPECT_THROW(bag_mixer(tagged_bag(3, 1, PrevalenceVector({1, 0})), tagged_bag(4, 2, PrevalenceVector({1, 0})), rng),
               ContractViolation);
}

std::vector<Bag> natural_bags(std::size_t n, Rng& rng) {
  std::vector<Bag> bags;
  for (std::size_t i = 0; i < n; ++i) bags.push_back(tagged_bag(6, static_cast<double>(i), kraemer_sample(2, rng)));
  return bags;
}

TEST(Stream, USettingNoMixerIsShuffledPass) {
  Rng rng(13);
  const auto nat = natural_bags(10, rng);
  TrainingStream s(nat, nullptr, {.bag_size = 6, .bags_per_epoch = 10, .mixer_enabled = false, .seed = 3});
  const auto ep = s.epoch(0);
  std::vector<double> tags;
  for (const Bag& b : ep) tags.push_back(b.features(0, 0));
  std::vector<double> sorted = tags;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(sorted[i], static_cast<double>(i));
  EXPECT_EQ(s.app_bags_per_epoch(), 0u);
}

TEST(Stream, HalfOfBagsAreApp) {
  Rng rng(14);
  const auto ex = labeled_set({0, 1, 0, 1, 1}, 2);
  TrainingStream s(natural_bags(8, rng), &ex,
                   {.bag_size = 6, .bags_per_epoch = 100, .mixer_enabled = true, .app_enabled = true, .seed = 4});
  EXPECT_EQ(s.app_bags_per_epoch(), 50u);
  const auto ep = s.epoch(2);
  ASSERT_EQ(ep.size(), 100u);
  std::size_t app = std::count_if(ep.begin(), ep.end(), [](const Bag& b) { return b.labels.has_value(); });
  EXPECT_EQ(app, 50u);
  for (const Bag& b : ep) EXPECT_NO_THROW(PrevalenceVector(b.prevalence->values(), 1e-12));
}

TEST(Stream, SameSeedSameSequence) {
  Rng r1(15), r2(15);
  const auto ex = labeled_set({0, 1, 0, 1}, 2);
  const SamplingConfig cfg{.bag_size = 6, .bags_per_epoch = 12, .mixer_enabled = true, .app_enabled = true, .seed = 77};
  TrainingStream a(natural_bags(5, r1), &ex, cfg), b(natural_bags(5, r2), &ex, cfg);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto ea = a.epoch(e), eb = b.epoch(e);
    for (std::size_t i = 0; i < ea.size(); ++i) {
      EXPECT_EQ(ea[i].features, eb[i].features);
      EXPECT_EQ(ea[i].prevalence, eb[i].prevalence);
    }
  }
  EXPECT_NE(a.epoch(0)[0].features, a.epoch(1)[0].features);
}

TEST(Stream, AppWithoutLabelsIsConfigError) {
  Rng rng(16);
  ExampleSet unlabeled;
  unlabeled.features = Tensor({3, 2});
  EXPECT_THROW(TrainingStream(natural_bags(3, rng), &unlabeled, {.app_enabled = true}), ConfigError);
  EXPECT_THROW(TrainingStream(natural_bags(3, rng), nullptr, {.app_enabled = true}), ConfigError);
}

}  // namespace
}  // namespace gmq
