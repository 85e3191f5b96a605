#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "gmq/cli.hpp"
#include "gmq/error.hpp"
#include "gmq/log.hpp"

namespace gmq::cli {

namespace {

LossKind loss_option(const std::string& name) { return parse_loss_kind(name); }

std::vector<std::string> loss_names() { return {"rae", "nmd", "ae"}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantification by bag-level learning: data generation, training, evaluation, reporting"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags override it");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  app.add_option("--seed", seed, "Random seed (required by gen and train)");
  app.add_option("--out", out, "Output directory (report: CSV file)");
  app.add_flag("--quiet", quiet, "Suppress progress output on stderr");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen_cmd->add_option("--classes", gen.spec.classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--features", gen.spec.features, "Feature dimension")->capture_default_str();
  gen_cmd->add_option("--examples", gen.spec.examples, "Labeled examples")->capture_default_str();
  gen_cmd->add_option("--bags", gen.spec.bags, "Natural prevalence-labeled bags")->capture_default_str();
  gen_cmd->add_option("--test-bags", gen.spec.test_bags, "Held-out test bags")->capture_default_str();
  gen_cmd->add_option("--bag-size", gen.spec.bag_size, "Examples per bag")->capture_default_str();
  gen_cmd->add_option("--separation", gen.spec.separation, "Distance between class centers in std units")
      ->capture_default_str();

  TrainOptions tr;
  std::string tr_loss = "rae", setting = "u";
  bool no_mixer = false;
  auto* train_cmd = app.add_subcommand("train", "Train a quantifier on a dataset directory");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--quantifier", tr.quantifier,
                        "gmnet, dqn-avg, dqn-max, dqn-med, cc, pcc, acc, pacc, dmy, emq, emq-platt")
      ->capture_default_str();
  train_cmd->add_option("--setting", setting, "u or u+app")->check(CLI::IsMember({"u", "u+app"}))->capture_default_str();
  train_cmd->add_option("--loss", tr_loss, "Training/validation loss")->check(CLI::IsMember(loss_names()))
      ->capture_default_str();
  train_cmd->add_option("--spaces", tr.spaces, "GMNet latent spaces")->capture_default_str();
  train_cmd->add_option("--gaussians", tr.gaussians, "GMNet Gaussians per space")->capture_default_str();
  train_cmd->add_option("--latent-dim", tr.latent_dim, "FEM output size (0: architecture default)")
      ->capture_default_str();
  train_cmd->add_option("--cka-lambda", tr.cka_lambda, "CKA regularization weight")->capture_default_str();
  train_cmd->add_flag("--normalize-likelihood", tr.normalize_likelihood,
                      "Normalize each example's likelihood row before the mean");
  train_cmd->add_option("--fem-hidden", tr.fem_hidden, "FEM hidden widths")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  train_cmd->add_option("--qm-hidden", tr.qm_hidden, "QM hidden widths")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  train_cmd->add_option("--fem-dropout", tr.fem_dropout, "FEM dropout rate")->capture_default_str();
  train_cmd->add_option("--qm-dropout", tr.qm_dropout, "QM dropout rate")->capture_default_str();
  train_cmd->add_option("--lr", tr.trainer.adam.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--max-epochs", tr.trainer.max_epochs, "Epoch cap")->capture_default_str();
  train_cmd->add_option("--patience", tr.trainer.patience, "Early-stopping patience")->capture_default_str();
  train_cmd->add_option("--batch-bags", tr.trainer.batch_bags, "Bags per optimizer step")->capture_default_str();
  train_cmd->add_option("--bags-per-epoch", tr.sampling.bags_per_epoch, "Training bags per epoch")
      ->capture_default_str();
  train_cmd->add_option("--app-fraction", tr.sampling.app_fraction, "Share of APP bags under u+app")
      ->capture_default_str();
  train_cmd->add_option("--app-bag-size", tr.sampling.bag_size, "APP bag size (0: natural bag size)");
  train_cmd->add_flag("--no-mixer", no_mixer, "Disable the bag mixer");
  train_cmd->add_option("--folds", tr.folds, "Cross-validation folds for classic quantifiers")->capture_default_str();
  tr.sampling.bag_size = 0;

  EvalOptions ev;
  std::string ev_loss = "rae";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained model on a bag directory");
  eval_cmd->add_option("--model", ev.model, "model.json artifact")->required();
  eval_cmd->add_option("--bags", ev.bags, "Bag directory")->required();
  eval_cmd->add_option("--loss", ev_loss, "Evaluation loss")->check(CLI::IsMember(loss_names()))
      ->capture_default_str();

  ReportOptions rep;
  auto* report_cmd = app.add_subcommand("report", "Compare eval outputs in one table");
  report_cmd->add_option("inputs", rep.inputs, "Eval output directories or summary.json files")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  set_quiet(quiet);
  try {
    auto need_seed = [&]() {
      if (!seed) throw ConfigError("--seed is required");
      return *seed;
    };
    if (*gen_cmd) {
      gen.seed = need_seed();
      gen.out = out;
      const Dataset ds = run_gen(gen);
      fmt::print("wrote {}: {} examples, {} bags, {} test bags, {} classes\n", gen.out.string(), ds.examples.size(),
                 ds.bags.size(), ds.test_bags.size(), ds.class_count());
    } else if (*train_cmd) {
      tr.seed = need_seed();
      tr.out = out;
      tr.loss = loss_option(tr_loss);
      tr.app = setting == "u+app";
      tr.sampling.mixer_enabled = !no_mixer;
      const TrainOutcome r = run_train(tr);
      fmt::print("{} ({}): {} training / {} validation bags, best val {} {:.6f}, stop: {}\n", r.model.name(),
                 r.meta.setting, r.meta.train_bags, r.meta.val_bags, loss_name(r.meta.loss), r.meta.best_val_loss,
                 r.meta.stop_reason);
      if (r.diverged) throw NumericError("training diverged; the last good checkpoint was saved");
    } else if (*eval_cmd) {
      ev.loss = loss_option(ev_loss);
      ev.out = out;
      const EvalReport r = run_eval(ev);
      fmt::print("{}: {:.6f} ± {:.6f} (n={})\n", loss_name(ev.loss), r.mean, r.std, r.n);
    } else if (*report_cmd) {
      if (!out.empty()) rep.out = out;
      fmt::print("{}", run_report(rep));
    }
  } catch (const NumericError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  std::fflush(stdout);
  return 0;
}

}  // namespace gmq::cli
