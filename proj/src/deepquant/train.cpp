#include <fmt/format.h>

#include <cmath>
#include <exception>
#include <fstream>
#include <limits>

#include "gmq/data.hpp"
#include "gmq/deepquant.hpp"
#include "gmq/error.hpp"
#include "gmq/log.hpp"

namespace gmq {

namespace {

constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

bool all_finite(const DeepQuantifier& model) {
  for (const auto& [name, t] : model.parameter_values())
    for (double v : t.storage())
      if (!std::isfinite(v)) return false;
  return true;
}

void scale_grads(const std::vector<Parameter*>& params, double factor) {
  for (Parameter* p : params)
    for (double& v : p->grad.storage()) v *= factor;
}

}  // namespace

double mean_bag_loss(const DeepQuantifier& model, std::span<const Bag> bags, LossKind loss) {
  if (bags.empty()) throw ContractViolation("mean_bag_loss: no bags");
  std::vector<double> losses(bags.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < bags.size(); ++i) {
    try {
      if (!bags[i].prevalence) throw ValidationError(fmt::format("bag {} has no prevalence label", i));
      const PrevalenceVector p_hat = model.quantify(bags[i].features);
      losses[i] = loss_value(loss, bags[i].prevalence->values(), p_hat.values(), bags[i].size());
    } catch (...) {
#pragma omp critical(gmq_mean_bag_loss)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  double s = 0.0;
  for (double v : losses) s += v;
  return s / static_cast<double>(losses.size());
}

TrainResult train(DeepQuantifier model, const TrainingStream& stream, std::span<const Bag> val_bags,
                  const TrainerConfig& config) {
  if (val_bags.empty()) throw ConfigError("training needs at least one validation bag");
  if (config.batch_bags == 0) throw ConfigError("batch_bags must be >= 1");
  if (config.max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  const DeepConfig& mc = model.config();
  const bool use_cka = mc.is_gmnet() && mc.cka_lambda > 0.0 && mc.spaces >= 2;

  TrainResult result;
  result.model = model;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Parameter*> params = model.parameters();
  AdamState adam;
  std::size_t wait = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const std::vector<Bag> bags = stream.epoch(epoch);
    Rng dropout_rng = Rng::derive(config.seed ^ kDropoutStream, epoch);
    HistoryRow row;
    row.epoch = epoch;
    try {
      std::size_t pending = 0;
      for (std::size_t i = 0; i < bags.size(); ++i) {
        const Bag& bag = bags[i];
        if (!bag.prevalence) throw ProtocolError("training bag without a prevalence label");
        Graph g(/*training=*/true, &dropout_rng);
        const auto fwd = model.build(g, bag.features);
        const NodeId quant = differentiable_loss(g, mc.loss, bag.prevalence->values(), fwd.prevalence, bag.size());
        NodeId root = quant;
        if (use_cka) {
          const NodeId c = cka(g, fwd.latents);
          row.cka_term += g.value(c).item();
          root = total_loss(g, quant, c, mc.cka_lambda);
        }
        const double value = g.value(root).item();
        if (!std::isfinite(value)) throw NumericError(fmt::format("training loss is {} at epoch {}", value, epoch));
        row.train_loss += value;
        g.backward(root);
        if (++pending == config.batch_bags || i + 1 == bags.size()) {
          if (pending > 1) scale_grads(params, 1.0 / static_cast<double>(pending));
          adam_step(params, adam, config.adam);
          for (Parameter* p : params) p->zero_grad();
          pending = 0;
        }
      }
      if (!all_finite(model)) throw NumericError(fmt::format("non-finite parameters after epoch {}", epoch));
      row.val_loss = mean_bag_loss(model, val_bags, mc.loss);
      if (!std::isfinite(row.val_loss)) throw NumericError(fmt::format("validation loss is non-finite at epoch {}", epoch));
    } catch (const NumericError& e) {
      warn(fmt::format("training diverged: {}; keeping the best checkpoint", e.what()));
      result.diverged = true;
      result.stop_reason = "diverged";
      break;
    }
    const double n = static_cast<double>(bags.size());
    row.train_loss /= n;
    row.cka_term /= n;
    result.history.push_back(row);
    info(fmt::format("epoch {}: train {:.6f} val {:.6f}", epoch, row.train_loss, row.val_loss));

    if (row.val_loss < result.best_val_loss) {
      result.best_val_loss = row.val_loss;
      result.best_epoch = epoch;
      result.model = model;
      wait = 0;
    } else if (++wait >= config.patience) {
      result.stop_reason = "patience";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  result.app_bags_generated = stream.app_bags_per_epoch() * (result.history.size() + (result.diverged ? 1 : 0));
  for (Parameter* p : result.model.parameters()) p->zero_grad();
  return result;
}

void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,cka_term\n";
  for (const HistoryRow& r : history)
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
        << format_double(r.cka_term) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace gmq
