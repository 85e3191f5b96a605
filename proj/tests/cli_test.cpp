#include <gtest/gtest.h>

#include <algorithm>
#include <json.hpp>
#include <set>
#include <sstream>

#include "gmq/classic.hpp"
#include "gmq/cli.hpp"
#include "gmq/error.hpp"
#include "gmq/log.hpp"
#include "support/cli_runner.hpp"

namespace gmq {
namespace {

using testing::read_file;
using testing::run_cli;
using testing::snapshot;
using testing::TempDir;
using testing::write_file;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { set_quiet(true); }
  void TearDown() override { set_quiet(false); }

  // Small 3-class dataset under dir/data.
  std::string gen(const std::string& name = "data", std::vector<std::string> extra = {}) {
    const std::string out = (dir_ / name).string();
    std::vector<std::string> args{"--quiet", "--seed", "7", "--out", out, "gen", "--examples", "300",
                                  "--bags",  "20",      "--test-bags", "8", "--bag-size", "30", "--features", "4"};
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(run_cli(args), 0);
    return out;
  }

  int train(const std::string& data, const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args{"--quiet", "--seed", "5", "--out", (dir_ / out).string(), "train", "--data", data,
                                  "--max-epochs", "3", "--spaces", "2", "--gaussians", "4", "--bags-per-epoch", "6"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  }

  TempDir dir_;
};

// --- gen --------------------------------------------------------------------

TEST_F(Cli, GenIsByteIdenticalPerSeed) {
  const std::string a = gen("a", {"--examples", "3000"});
  const std::string b = gen("b", {"--examples", "3000"});
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_NO_THROW(load_bags(std::filesystem::path(a) / "bags"));
  EXPECT_EQ(load_dataset(a).examples.size(), 3000u);
}

TEST_F(Cli, GenRejectsInvalidSpec) {
  EXPECT_EQ(run_cli({"--quiet", "--seed", "1", "--out", (dir_ / "x").string(), "gen", "--classes", "1"}), 1);
  EXPECT_EQ(run_cli({"--quiet", "--seed", "1", "--out", (dir_ / "x").string(), "gen", "--examples", "2"}), 1);
  EXPECT_EQ(run_cli({"--quiet", "--out", (dir_ / "x").string(), "gen"}), 1);  // no seed
}

TEST_F(Cli, ZeroSeparationGivesChanceAccuracy) {
  const std::string data = gen("d", {"--separation", "0", "--examples", "3000"});
  const ExampleSet ex = load_dataset(data).examples;
  Rng rng(1);
  const CvPredictions cv = cv_predictions(ex, 5, ClassifierConfig{}, rng);
  std::size_t right = 0;
  for (std::size_t i = 0; i < ex.size(); ++i) right += cv.hard[i] == (*ex.labels)[i];
  EXPECT_NEAR(static_cast<double>(right) / ex.size(), 1.0 / 3.0, 0.05);
}

// --- train --------------------------------------------------------------------

TEST_F(Cli, SplitIsSeededSeventyThirtyAndDisjoint) {
  std::vector<Bag> bags(20);
  for (std::size_t i = 0; i < 20; ++i) bags[i].features = Tensor({1, 1}, static_cast<double>(i));
  const auto [tr, va] = cli::split_bags(bags, 0.7, 3);
  EXPECT_EQ(tr.size(), 14u);
  EXPECT_EQ(va.size(), 6u);
  std::set<double> seen;
  for (const auto* part : {&tr, &va})
    for (const Bag& b : *part) seen.insert(b.features[0]);
  EXPECT_EQ(seen.size(), 20u);
  const auto again = cli::split_bags(bags, 0.7, 3);
  for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_EQ(again.first[i].features, tr[i].features);
  EXPECT_THROW(cli::split_bags(std::span(bags).first(1), 0.7, 3), ConfigError);
}

TEST_F(Cli, CcArtifactHoldsOnlyClassifierWeights) {
  const std::string data = gen();
  ASSERT_EQ(train(data, "cc", {"--quantifier", "cc"}), 0);
  const auto j = nlohmann::json::parse(read_file(dir_ / "cc/model.json"));
  for (const auto& [name, t] : j["parameters"].items()) EXPECT_EQ(name.rfind("classifier.", 0), 0u) << name;
  EXPECT_EQ(j["architecture"], "cc");
  EXPECT_EQ(j["metadata"]["grid"].size(), 3u);
}

TEST_F(Cli, DmyGridCoversBins) {
  const std::string data = gen();
  ASSERT_EQ(train(data, "dmy", {"--quantifier", "dmy"}), 0);
  EXPECT_EQ(cli::load_metadata(dir_ / "dmy/model.json").grid.size(), 9u);
}

TEST_F(Cli, UnlabeledSettingNeverDrawsAppBags) {
  const std::string data = gen();
  ASSERT_EQ(train(data, "u", {"--setting", "u"}), 0);
  ASSERT_EQ(train(data, "app", {"--setting", "u+app"}), 0);
  const auto u = cli::load_metadata(dir_ / "u/model.json");
  const auto app = cli::load_metadata(dir_ / "app/model.json");
  EXPECT_EQ(u.app_bags_generated, 0u);
  EXPECT_EQ(app.app_bags_generated, 3u * 3u);
  EXPECT_EQ(u.history.size(), 3u);
  EXPECT_EQ(read_file(dir_ / "u/history.csv").substr(0, 35), "epoch,train_loss,val_loss,cka_term\n");
}

TEST_F(Cli, RerunGivesIdenticalArtifact) {
  const std::string data = gen();
  ASSERT_EQ(train(data, "r1", {"--setting", "u+app", "--quantifier", "dqn-med", "--latent-dim", "8"}), 0);
  ASSERT_EQ(train(data, "r2", {"--setting", "u+app", "--quantifier", "dqn-med", "--latent-dim", "8"}), 0);
  EXPECT_EQ(snapshot(dir_ / "r1"), snapshot(dir_ / "r2"));
}

TEST_F(Cli, AppWithoutExampleLabelsIsAConfigError) {
  const std::string data = gen();
  ExampleSet ex = load_dataset(data).examples;
  ex.labels.reset();
  save_examples_csv(std::filesystem::path(data) / "examples.csv", ex);
  EXPECT_EQ(train(data, "x", {"--setting", "u+app"}), 1);
  EXPECT_EQ(train(data, "y", {"--setting", "u"}), 0);
}

TEST_F(Cli, DivergenceExitsWithNumericFailureAndKeepsCheckpoint) {
  const std::string data = gen();
  EXPECT_EQ(train(data, "div", {"--lr", "1e300"}), 2);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "div/model.json"));
  EXPECT_NO_THROW(cli::load_model(dir_ / "div/model.json"));
}

TEST_F(Cli, ConfigFileValuesAreOverriddenByFlags) {
  const std::string data = gen();
  write_file(dir_ / "run.toml", "seed = 5\nquiet = true\nout = \"" + (dir_ / "cfg").string() +
                                    "\"\n\n[train]\ndata = \"" + data + "\"\nquantifier = \"pcc\"\nloss = \"ae\"\n");
  ASSERT_EQ(run_cli({"--config", (dir_ / "run.toml").string(), "train"}), 0);
  EXPECT_EQ(cli::load_model(dir_ / "cfg/model.json").name(), "pcc");
  ASSERT_EQ(run_cli({"--config", (dir_ / "run.toml").string(), "train", "--quantifier", "emq"}), 0);
  EXPECT_EQ(cli::load_model(dir_ / "cfg/model.json").name(), "emq");
  EXPECT_EQ(cli::load_metadata(dir_ / "cfg/model.json").loss, LossKind::Ae);
}

TEST_F(Cli, UnknownQuantifierAndMissingDataAreConfigErrors) {
  const std::string data = gen();
  EXPECT_EQ(train(data, "x", {"--quantifier", "histnet"}), 1);
  EXPECT_EQ(train((dir_ / "missing").string(), "x", {}), 1);
}

// --- artifacts ----------------------------------------------------------------

TEST_F(Cli, ArtifactRoundTripsEveryFamily) {
  const std::string data = gen();
  const std::vector<Bag> bags = load_bags(std::filesystem::path(data) / "test_bags");
  for (const std::string q : {"gmnet", "dqn-avg", "acc", "pacc", "dmy", "emq-platt"}) {
    cli::TrainOptions opts;
    opts.data = data;
    opts.quantifier = q;
    opts.out = dir_ / ("rt_" + q);
    opts.seed = 2;
    opts.spaces = 2;
    opts.gaussians = 3;
    opts.latent_dim = q == "dqn-avg" ? 6 : 0;
    opts.trainer.max_epochs = 2;
    opts.sampling.bags_per_epoch = 4;
    const cli::TrainOutcome r = cli::run_train(opts);
    const cli::Model loaded = cli::load_model(opts.out / "model.json");
    EXPECT_EQ(loaded.name(), q);
    for (const Bag& b : bags) {
      const PrevalenceVector a = r.model.quantify(b.features), c = loaded.quantify(b.features);
      for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], c[k], 1e-12) << q;
    }
  }
}

TEST_F(Cli, TamperedArtifactFailsProbeCheck) {
  const std::string data = gen();
  ASSERT_EQ(train(data, "m", {"--quantifier", "pcc"}), 0);
  auto j = nlohmann::ordered_json::parse(read_file(dir_ / "m/model.json"));
  j["parameters"]["classifier.bias"]["values"][0] = j["parameters"]["classifier.bias"]["values"][0].get<double>() + 0.5;
  write_file(dir_ / "m/model.json", j.dump(2));
  EXPECT_THROW(cli::load_model(dir_ / "m/model.json"), ValidationError);
  EXPECT_EQ(run_cli({"--quiet", "--out", (dir_ / "e").string(), "eval", "--model", (dir_ / "m/model.json").string(),
                     "--bags", data + "/test_bags"}),
            1);
  EXPECT_FALSE(std::filesystem::exists(dir_ / "e"));
}

// --- eval -------------------------------------------------------------------------

TEST_F(Cli, PerfectClassifierGivesZeroLoss) {
  const std::string data = gen("sep", {"--separation", "60"});
  ASSERT_EQ(train(data, "cc", {"--quantifier", "cc"}), 0);
  ASSERT_EQ(run_cli({"--quiet", "--out", (dir_ / "e").string(), "eval", "--model", (dir_ / "cc/model.json").string(),
                     "--bags", data + "/test_bags", "--loss", "ae"}),
            0);
  const EvalSummary s = load_summary(dir_ / "e/summary.json");
  EXPECT_NEAR(s.mean, 0.0, 1e-15);
  EXPECT_EQ(s.n, 8u);
}

TEST_F(Cli, EvalSummaryMatchesPerBagCsvAndIsIdempotent) {
  const std::string data = gen();
  ASSERT_EQ(train(data, "g", {}), 0);
  for (const std::string out : {"e1", "e2"})
    ASSERT_EQ(run_cli({"--quiet", "--out", (dir_ / out).string(), "eval", "--model",
                       (dir_ / "g/model.json").string(), "--bags", data + "/test_bags", "--loss", "nmd"}),
              0);
  EXPECT_EQ(snapshot(dir_ / "e1"), snapshot(dir_ / "e2"));
  std::istringstream csv(read_file(dir_ / "e1/per_bag.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "bag_id,loss");
  double sum = 0.0;
  std::size_t n = 0;
  while (std::getline(csv, line)) {
    sum += std::stod(line.substr(line.find(',') + 1));
    ++n;
  }
  const EvalSummary s = load_summary(dir_ / "e1/summary.json");
  EXPECT_EQ(s.n, n);
  EXPECT_NEAR(s.mean, sum / n, 1e-12);
  EXPECT_EQ(s.method, "gmnet");
  EXPECT_EQ(s.loss, "nmd");
}

TEST_F(Cli, ClassCountMismatchIsRejected) {
  const std::string three = gen();
  const std::string two = gen("two", {"--classes", "2"});
  ASSERT_EQ(train(three, "m", {"--quantifier", "cc"}), 0);
  EXPECT_EQ(run_cli({"--quiet", "--out", (dir_ / "e").string(), "eval", "--model", (dir_ / "m/model.json").string(),
                     "--bags", two + "/test_bags"}),
            1);
}

// --- report -------------------------------------------------------------------------

void fake_summary(const std::filesystem::path& dir, const std::string& method, double mean, LossKind loss) {
  save_report(dir, EvalReport::from_losses({mean - 0.1, mean + 0.1}), method, loss);
}

TEST_F(Cli, ReportFlagsBestAndSortsByMethod) {
  fake_summary(dir_ / "b", "zeta", 0.5, LossKind::Rae);
  fake_summary(dir_ / "a", "alpha", 0.7, LossKind::Rae);
  cli::ReportOptions opts{{dir_ / "b", dir_ / "a"}, dir_ / "report.csv"};
  const std::string table = cli::run_report(opts);
  EXPECT_LT(table.find("alpha"), table.find("zeta"));
  EXPECT_EQ(read_file(dir_ / "report.csv"),
            "method,loss,mean,std,n,best\nalpha,rae,0.69999999999999996,0.099999999999999978,2,0\n"
            "zeta,rae,0.5,0.099999999999999978,2,1\n");
  auto line_of = [&](const std::string& m) {
    const auto at = table.find(m);
    return table.substr(at, table.find('\n', at) - at);
  };
  EXPECT_NE(line_of("zeta").find('*'), std::string::npos);
  EXPECT_EQ(line_of("alpha").find('*'), std::string::npos);
}

TEST_F(Cli, ReportSingleInputIsOneRow) {
  fake_summary(dir_ / "a", "cc", 0.3, LossKind::Ae);
  const std::string table = cli::run_report({{dir_ / "a" / "summary.json"}, std::nullopt});
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);
}

TEST_F(Cli, ReportRejectsMixedLosses) {
  fake_summary(dir_ / "a", "cc", 0.3, LossKind::Ae);
  fake_summary(dir_ / "b", "acc", 0.3, LossKind::Rae);
  EXPECT_THROW(cli::run_report({{dir_ / "a", dir_ / "b"}, std::nullopt}), ValidationError);
  EXPECT_EQ(run_cli({"report", (dir_ / "a").string(), (dir_ / "b").string()}), 1);
}

}  // namespace
}  // namespace gmq
