#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gmq/classic.hpp"
#include "gmq/deepquant.hpp"
#include "gmq/synthetic.hpp"

namespace gmq::cli {

inline constexpr int kFormatVersion = 1;

// --- models and artifacts --------------------------------------------------

// A trained quantifier of either family.
class Model {
 public:
  explicit Model(DeepQuantifier q) : impl_(std::move(q)) {}
  explicit Model(ClassicQuantifier q) : impl_(std::move(q)) {}

  PrevalenceVector quantify(const Tensor& bag) const;
  std::string name() const;  // architecture tag or classic method name
  std::size_t classes() const;
  std::size_t dim() const;
  const DeepQuantifier* deep() const { return std::get_if<DeepQuantifier>(&impl_); }
  const ClassicQuantifier* classic() const { return std::get_if<ClassicQuantifier>(&impl_); }

 private:
  std::variant<DeepQuantifier, ClassicQuantifier> impl_;
};

// One grid point tried by the classic hyperparameter search.
struct GridPoint {
  double l2 = 0.0;
  std::size_t bins = 0;  // 0 when the method has no histogram
  double val_loss = 0.0;
};

struct TrainMetadata {
  std::uint64_t seed = 0;
  std::string setting;  // "u" or "u+app"
  LossKind loss = LossKind::Rae;
  std::size_t train_bags = 0;
  std::size_t val_bags = 0;
  std::size_t app_bags_generated = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::string stop_reason;
  std::vector<HistoryRow> history;
  std::vector<GridPoint> grid;
  TrainerConfig trainer;
  SamplingConfig sampling;
};

// JSON artifact with a probe bag whose stored prediction is re-checked on
// load (ValidationError beyond 1e-12).
void save_model(const std::filesystem::path& path, const Model& model, const TrainMetadata& meta);
Model load_model(const std::filesystem::path& path);
TrainMetadata load_metadata(const std::filesystem::path& path);

// --- commands ----------------------------------------------------------------

struct GenOptions {
  SyntheticSpec spec;
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

struct TrainOptions {
  std::filesystem::path data;
  std::string quantifier = "gmnet";
  bool app = false;  // U+APP setting
  LossKind loss = LossKind::Rae;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  double train_fraction = 0.7;

  // Deep models. Zero / empty means the architecture default.
  std::size_t spaces = 9;
  std::size_t gaussians = 100;
  std::size_t latent_dim = 0;
  double cka_lambda = 0.01;
  bool normalize_likelihood = false;
  std::vector<std::size_t> fem_hidden;
  std::vector<std::size_t> qm_hidden;
  double fem_dropout = 0.1;
  double qm_dropout = 0.1;
  TrainerConfig trainer;
  SamplingConfig sampling;  // bag_size 0 means the natural bag size

  // Classic models.
  std::size_t folds = 10;
};

struct TrainOutcome {
  Model model;
  TrainMetadata meta;
  bool diverged = false;
};

struct EvalOptions {
  std::filesystem::path model;
  std::filesystem::path bags;
  LossKind loss = LossKind::Rae;
  std::filesystem::path out;
};

struct ReportOptions {
  std::vector<std::filesystem::path> inputs;  // eval output dirs or summary.json files
  std::optional<std::filesystem::path> out;   // report.csv destination
};

Dataset run_gen(const GenOptions& opts);
TrainOutcome run_train(const TrainOptions& opts);
EvalReport run_eval(const EvalOptions& opts);
std::string run_report(const ReportOptions& opts);  // the aligned text table

// Per-bag losses of `model`, bags evaluated in parallel.
EvalReport evaluate(const Model& model, std::span<const Bag> bags, LossKind loss);

// Deterministic 70/30-style split of bag indices by a seeded shuffle.
std::pair<std::vector<Bag>, std::vector<Bag>> split_bags(std::span<const Bag> bags, double train_fraction,
                                                         std::uint64_t seed);

// Full command-line entry point; returns the process exit code
// (0 success, 1 validation/config error, 2 numeric failure).
int main(int argc, char** argv);

}  // namespace gmq::cli
