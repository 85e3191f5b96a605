#include <gtest/gtest.h>

#include <string>

#include "gmq/data.hpp"
#include "gmq/error.hpp"
#include "gmq/rng.hpp"
#include "support/tempdir.hpp"

namespace gmq {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(Examples, TwoLabeledRows) {
  TempDir dir;
  write_file(dir / "e.csv", "f0,f1,label\n0.5,1.5,0\n-2,3e-1,1\n");
  const ExampleSet ex = load_examples_csv(dir / "e.csv");
  EXPECT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex.dim(), 2u);
  EXPECT_EQ(ex.class_count, 2u);
  ASSERT_TRUE(ex.labeled());
  EXPECT_EQ(*ex.labels, (std::vector<int>{0, 1}));
  EXPECT_DOUBLE_EQ(ex.features(1, 1), 0.3);
}

TEST(Examples, NoLabelColumnIsUnlabeled) {
  TempDir dir;
  write_file(dir / "e.csv", "f0,f1\n1,2\n3,4\n");
  const ExampleSet ex = load_examples_csv(dir / "e.csv");
  EXPECT_FALSE(ex.labeled());
  EXPECT_EQ(ex.size(), 2u);
}

TEST(Examples, RaggedRowNamesLine) {
  TempDir dir;
  write_file(dir / "e.csv", "f0,f1,f2,f3\n1,2,3\n");
  try {
    load_examples_csv(dir / "e.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Examples, NonNumericAndOutOfRangeLabel) {
  TempDir dir;
  write_file(dir / "a.csv", "f0,label\n1,0\nx,1\n");
  EXPECT_THROW(load_examples_csv(dir / "a.csv"), ParseError);
  write_file(dir / "b.csv", "f0,label\n1,0\n2,3\n");
  try {
    load_examples_csv(dir / "b.csv", 3);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Bags, ThreeBagsLoad) {
  TempDir dir;
  write_file(dir / "bags/prevalences.csv", "bag_id,p0,p1\n0,0.5,0.5\n1,1,0\n2,0.25,0.75\n");
  for (int i = 0; i < 3; ++i) write_file(dir / ("bags/bag_" + std::to_string(i) + ".csv"), "f0,f1\n1,2\n3,4\n");
  const auto bags = load_bags(dir / "bags");
  ASSERT_EQ(bags.size(), 3u);
  EXPECT_DOUBLE_EQ((*bags[2].prevalence)[1], 0.75);
  EXPECT_EQ(bags[1].size(), 2u);
}

TEST(Bags, PrevalenceRowOverOneRejected) {
  TempDir dir;
  write_file(dir / "bags/prevalences.csv", "bag_id,p0,p1\n0,0.6,0.5\n");
  write_file(dir / "bags/bag_0.csv", "f0\n1\n");
  EXPECT_THROW(load_bags(dir / "bags"), ValidationError);
}

TEST(Bags, EmptyBagRejected) {
  TempDir dir;
  write_file(dir / "bags/prevalences.csv", "bag_id,p0,p1\n0,0.5,0.5\n");
  write_file(dir / "bags/bag_0.csv", "f0\n");
  EXPECT_THROW(load_bags(dir / "bags"), ValidationError);
}

TEST(Bags, MissingFileAndSparseIdsRejected) {
  TempDir dir;
  write_file(dir / "a/prevalences.csv", "bag_id,p0,p1\n0,0.5,0.5\n");
  EXPECT_THROW(load_bags(dir / "a"), ValidationError);
  write_file(dir / "b/prevalences.csv", "bag_id,p0,p1\n0,0.5,0.5\n2,0.5,0.5\n");
  write_file(dir / "b/bag_0.csv", "f0\n1\n");
  write_file(dir / "b/bag_2.csv", "f0\n1\n");
  EXPECT_THROW(load_bags(dir / "b"), ValidationError);
}

TEST(Bags, RoundedPrevalencesAreRenormalized) {
  TempDir dir;
  write_file(dir / "bags/prevalences.csv", "bag_id,p0,p1,p2\n0,0.3333333,0.3333333,0.3333333\n");
  write_file(dir / "bags/bag_0.csv", "f0\n1\n");
  const auto bags = load_bags(dir / "bags");
  double s = 0.0;
  for (double p : *bags[0].prevalence) s += p;
  EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(Prevalence, FromLabels) {
  const std::vector<int> a{0, 0, 1}, b{2}, c{0, 1, 2, 3};
  const auto pa = prevalence_from_labels(a, 2);
  EXPECT_DOUBLE_EQ(pa[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(pa[1], 1.0 / 3.0);
  EXPECT_EQ(prevalence_from_labels(b, 3).values(), (std::vector<double>{0, 0, 1}));
  EXPECT_EQ(prevalence_from_labels(c, 4).values(), (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  EXPECT_THROW(prevalence_from_labels(std::vector<int>{}, 2), ContractViolation);
  EXPECT_THROW(prevalence_from_labels(std::vector<int>{2}, 2), ContractViolation);
}

TEST(Prevalence, InvalidVectorsRejected) {
  EXPECT_THROW(PrevalenceVector({0.6, 0.5}), ValidationError);
  EXPECT_THROW(PrevalenceVector({1.1, -0.1}), ValidationError);
  EXPECT_NO_THROW(PrevalenceVector({0.2, 0.8}));
}

TEST(Prevalence, FromLabelsAlwaysValidProperty) {
  Rng rng(9);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t l = 2 + rng.uniform_int(6), m = 1 + rng.uniform_int(300);
    std::vector<int> labels(m);
    for (int& y : labels) y = static_cast<int>(rng.uniform_int(l));
    EXPECT_NO_THROW(PrevalenceVector(prevalence_from_labels(labels, l).values(), 1e-12));
  }
}

Dataset random_dataset(Rng& rng) {
  const std::size_t l = 3, d = 4, n = 25;
  Dataset ds;
  ds.manifest = {l, d, n, 4, 2};
  ds.examples.features = Tensor({n, d});
  ds.examples.labels = std::vector<int>(n);
  ds.examples.class_count = l;
  for (double& v : ds.examples.features.storage()) v = rng.normal() * std::pow(10.0, rng.uniform(-8, 8));
  for (int& y : *ds.examples.labels) y = static_cast<int>(rng.uniform_int(l));
  auto make_bags = [&](std::size_t count) {
    std::vector<Bag> bags;
    for (std::size_t b = 0; b < count; ++b) {
      Bag bag{Tensor({1 + rng.uniform_int(7), d}), std::nullopt, std::nullopt};
      for (double& v : bag.features.storage()) v = rng.uniform(-1, 1) / 3.0;
      double u = rng.uniform(), w = rng.uniform() * (1 - u);
      bag.prevalence = PrevalenceVector({u, w, 1 - u - w});
      bags.push_back(std::move(bag));
    }
    return bags;
  };
  ds.bags = make_bags(4);
  ds.test_bags = make_bags(2);
  return ds;
}

TEST(RoundTrip, SaveLoadIsBitExact) {
  Rng rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    TempDir dir;
    const Dataset ds = random_dataset(rng);
    save_dataset(dir.path(), ds);
    const Dataset back = load_dataset(dir.path());
    EXPECT_EQ(back.manifest.classes, 3u);
    EXPECT_EQ(back.examples.features, ds.examples.features);
    EXPECT_EQ(back.examples.labels, ds.examples.labels);
    ASSERT_EQ(back.bags.size(), ds.bags.size());
    ASSERT_EQ(back.test_bags.size(), ds.test_bags.size());
    for (std::size_t b = 0; b < ds.bags.size(); ++b) {
      EXPECT_EQ(back.bags[b].features, ds.bags[b].features);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR((*back.bags[b].prevalence)[k], (*ds.bags[b].prevalence)[k], 1e-12);
    }
  }
}

TEST(RoundTrip, FormatDoubleIsExact) {
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Validate, BagLabelsMustMatchPrevalence) {
  Bag bag{Tensor({2, 1}), PrevalenceVector({0.5, 0.5}), std::vector<int>{0, 1}};
  EXPECT_NO_THROW(validate_bag(bag));
  bag.labels = std::vector<int>{0, 0};
  EXPECT_THROW(validate_bag(bag), ValidationError);
}

}  // namespace
}  // namespace gmq
