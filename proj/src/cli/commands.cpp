#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>

#include "gmq/cli.hpp"
#include "gmq/error.hpp"
#include "gmq/log.hpp"

namespace gmq::cli {

namespace {

// Rng::derive stream ids, one per consumer of the run seed.
constexpr std::uint64_t kSplitStream = 101;
constexpr std::uint64_t kInitStream = 102;
constexpr std::uint64_t kClassicStream = 103;

void require_dir(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(fmt::format("{} is not set", what));
  if (!std::filesystem::is_directory(p)) throw ConfigError(fmt::format("{} '{}' does not exist", what, p.string()));
}

void prepare_out(const std::filesystem::path& out) {
  if (out.empty()) throw ConfigError("--out is required");
  std::filesystem::create_directories(out);
}

TrainOutcome train_classic(const TrainOptions& opts, const Dataset& ds, std::span<const Bag> val) {
  const ClassicMethod method = parse_classic_method(opts.quantifier);
  if (!ds.examples.labeled()) throw ConfigError("classic quantifiers need labeled examples");
  if (opts.app) warn("the U+APP setting has no effect on classic quantifiers");

  // Small fixed grid, scored by the experiment loss on the validation bags.
  const std::vector<double> l2_grid{1e-4, 1e-2, 1.0};
  const std::vector<std::size_t> bin_grid =
      method == ClassicMethod::Dmy ? std::vector<std::size_t>{4, 8, 16} : std::vector<std::size_t>{0};
  TrainMetadata meta;
  std::optional<ClassicQuantifier> best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (double l2 : l2_grid)
    for (std::size_t bins : bin_grid) {
      ClassicConfig cfg;
      cfg.classifier.l2 = l2;
      cfg.folds = opts.folds;
      if (bins) cfg.dmy_bins = bins;
      Rng rng = Rng::derive(opts.seed, kClassicStream);
      ClassicQuantifier q = ClassicQuantifier::fit(method, ds.examples, cfg, rng);
      const double loss = evaluate(Model(q), val, opts.loss).mean;
      meta.grid.push_back({l2, bins, loss});
      info(fmt::format("{} l2={} bins={}: val {:.6f}", opts.quantifier, l2, bins, loss));
      if (loss < best_loss) {
        best_loss = loss;
        best = std::move(q);
      }
    }
  if (!best) throw NumericError("every grid point produced a non-finite validation loss");
  meta.best_val_loss = best_loss;
  meta.stop_reason = "grid";
  return {Model(std::move(*best)), std::move(meta), false};
}

TrainOutcome train_deep(const TrainOptions& opts, const Dataset& ds, std::vector<Bag> train_bags,
                        std::span<const Bag> val) {
  const Architecture arch = parse_architecture(opts.quantifier);
  DeepConfig mc = DeepConfig::defaults(arch, ds.feature_dim(), ds.class_count());
  mc.spaces = opts.spaces;
  mc.gaussians = opts.gaussians;
  if (opts.latent_dim) mc.latent_dim = opts.latent_dim;
  mc.cka_lambda = opts.cka_lambda;
  mc.normalize_likelihood = opts.normalize_likelihood;
  if (!opts.fem_hidden.empty()) mc.fem_hidden = opts.fem_hidden;
  if (!opts.qm_hidden.empty()) mc.qm_hidden = opts.qm_hidden;
  mc.fem_dropout = opts.fem_dropout;
  mc.qm_dropout = opts.qm_dropout;
  mc.loss = opts.loss;
  mc.validate();

  SamplingConfig sc = opts.sampling;
  sc.app_enabled = opts.app;
  sc.seed = opts.seed;
  if (sc.bag_size == 0) sc.bag_size = train_bags.front().size();
  TrainerConfig tc = opts.trainer;
  tc.seed = opts.seed;

  const TrainingStream stream(std::move(train_bags), ds.examples.labeled() ? &ds.examples : nullptr, sc);
  Rng init = Rng::derive(opts.seed, kInitStream);
  TrainResult r = train(DeepQuantifier(mc, init), stream, val, tc);

  TrainMetadata meta;
  meta.app_bags_generated = r.app_bags_generated;
  meta.best_epoch = r.best_epoch;
  meta.best_val_loss = r.best_val_loss;
  meta.stop_reason = r.stop_reason;
  meta.history = std::move(r.history);
  meta.trainer = tc;
  meta.sampling = sc;
  return {Model(std::move(r.model)), std::move(meta), r.diverged};
}

struct Row {
  EvalSummary s;
  bool best = false;
};

}  // namespace

std::pair<std::vector<Bag>, std::vector<Bag>> split_bags(std::span<const Bag> bags, double train_fraction,
                                                         std::uint64_t seed) {
  if (bags.size() < 2) throw ConfigError("need at least 2 bags to split into training and validation");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0,1)");
  std::vector<std::size_t> order(bags.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::derive(seed, kSplitStream);
  rng.shuffle(std::span(order));
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(bags.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, bags.size() - 1);
  std::pair<std::vector<Bag>, std::vector<Bag>> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? out.first : out.second).push_back(bags[order[i]]);
  return out;
}

EvalReport evaluate(const Model& model, std::span<const Bag> bags, LossKind loss) {
  if (bags.empty()) throw ValidationError("no bags to evaluate");
  std::vector<double> losses(bags.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < bags.size(); ++i) {
    try {
      if (!bags[i].prevalence) throw ValidationError(fmt::format("bag {} has no prevalence label", i));
      if (bags[i].dim() != model.dim())
        throw ValidationError(fmt::format("bag {} has {} features, the model expects {}", i, bags[i].dim(), model.dim()));
      const PrevalenceVector p_hat = model.quantify(bags[i].features);
      losses[i] = loss_value(loss, bags[i].prevalence->values(), p_hat.values(), bags[i].size());
    } catch (...) {
#pragma omp critical(gmq_cli_evaluate)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return EvalReport::from_losses(std::move(losses));
}

Dataset run_gen(const GenOptions& opts) {
  opts.spec.validate();
  prepare_out(opts.out);
  Dataset ds = generate_dataset(opts.spec, opts.seed);
  save_dataset(opts.out, ds);
  return ds;
}

TrainOutcome run_train(const TrainOptions& opts) {
  require_dir(opts.data, "--data");
  const bool deep = is_deep_architecture(opts.quantifier);
  if (!deep && !is_classic_method(opts.quantifier))
    throw ConfigError(fmt::format("unknown quantifier '{}'", opts.quantifier));
  const Dataset ds = load_dataset(opts.data);
  auto [train_bags, val_bags] = split_bags(ds.bags, opts.train_fraction, opts.seed);
  const std::size_t n_train = train_bags.size();
  if (opts.app && !ds.examples.labeled())
    throw ConfigError("the U+APP setting needs labeled examples (examples.csv has no label column)");
  prepare_out(opts.out);

  TrainOutcome outcome =
      deep ? train_deep(opts, ds, std::move(train_bags), val_bags) : train_classic(opts, ds, val_bags);
  outcome.meta.seed = opts.seed;
  outcome.meta.setting = opts.app ? "u+app" : "u";
  outcome.meta.loss = opts.loss;
  outcome.meta.train_bags = n_train;
  outcome.meta.val_bags = val_bags.size();
  save_model(opts.out / "model.json", outcome.model, outcome.meta);
  if (deep) write_history_csv(opts.out / "history.csv", outcome.meta.history);
  return outcome;
}

EvalReport run_eval(const EvalOptions& opts) {
  if (!std::filesystem::is_regular_file(opts.model))
    throw ConfigError(fmt::format("--model '{}' does not exist", opts.model.string()));
  require_dir(opts.bags, "--bags");
  const Model model = load_model(opts.model);
  const std::vector<Bag> bags = load_bags(opts.bags);
  if (!bags.empty() && bags.front().prevalence && bags.front().prevalence->size() != model.classes())
    throw ValidationError(fmt::format("bags have {} classes, the model has {}", bags.front().prevalence->size(),
                                      model.classes()));
  EvalReport report = evaluate(model, bags, opts.loss);
  prepare_out(opts.out);
  save_report(opts.out, report, model.name(), opts.loss);
  return report;
}

std::string run_report(const ReportOptions& opts) {
  if (opts.inputs.empty()) throw ConfigError("report needs at least one eval output");
  std::vector<Row> rows;
  for (const auto& in : opts.inputs) {
    const auto path = std::filesystem::is_directory(in) ? in / "summary.json" : in;
    rows.push_back({load_summary(path)});
  }
  for (const Row& r : rows)
    if (r.s.loss != rows.front().s.loss)
      throw ValidationError(fmt::format("cannot compare losses '{}' and '{}'", rows.front().s.loss, r.s.loss));
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.s.method < b.s.method; });
  double best = std::numeric_limits<double>::infinity();
  for (const Row& r : rows) best = std::min(best, r.s.mean);
  for (Row& r : rows) r.best = r.s.mean == best;

  std::size_t width = 6;
  for (const Row& r : rows) width = std::max(width, r.s.method.size());
  const std::string& loss = rows.front().s.loss;
  std::string table = fmt::format("{:<{}}  {:>21}  {:>6}  best\n", "method", width, loss + " mean ± std", "n");
  for (const Row& r : rows)
    table += fmt::format("{:<{}}  {:>10.6f} ± {:<8.6f}  {:>6}{}\n", r.s.method, width, r.s.mean, r.s.std, r.s.n,
                         r.best ? "  *" : "");

  if (opts.out) {
    std::ofstream csv(*opts.out);
    if (!csv) throw Error("cannot write " + opts.out->string());
    csv << "method,loss,mean,std,n,best\n";
    for (const Row& r : rows)
      csv << r.s.method << ',' << loss << ',' << format_double(r.s.mean) << ',' << format_double(r.s.std) << ','
          << r.s.n << ',' << (r.best ? 1 : 0) << '\n';
  }
  return table;
}

}  // namespace gmq::cli
