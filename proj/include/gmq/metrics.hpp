#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmq/data.hpp"
#include "gmq/graph.hpp"

namespace gmq {

enum class LossKind { Rae, Nmd, Ae };

LossKind parse_loss_kind(std::string_view name);  // "rae" | "nmd" | "ae"
std::string_view loss_name(LossKind kind) noexcept;

// Smoothing factor for RAE on a bag of m examples: 1/(2m).
double rae_epsilon(std::size_t m);

// Relative absolute error with additive smoothing over both vectors.
double rae(std::span<const double> p, std::span<const double> p_hat, std::size_t m);
// Normalized match distance: mean |cumsum difference| over the first l-1
// classes. Class order is taken as ordinal.
double nmd(std::span<const double> p, std::span<const double> p_hat);
double ae(std::span<const double> p, std::span<const double> p_hat);
// Hellinger distance of two normalized histograms, in [0,1].
double hellinger(std::span<const double> h1, std::span<const double> h2);

// `m` is the bag size; only RAE uses it.
double loss_value(LossKind kind, std::span<const double> p, std::span<const double> p_hat, std::size_t m);

// Same losses built on the tape from a rank-1 prediction node. |.| has
// subgradient 0 at 0.
NodeId differentiable_loss(Graph& g, LossKind kind, std::span<const double> p_true, NodeId p_hat, std::size_t m);

struct EvalReport {
  std::vector<double> losses;  // one per bag, in bag-id order
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;

  static EvalReport from_losses(std::vector<double> losses);
};

// Summary block as read back by `report`.
struct EvalSummary {
  std::string method;
  std::string loss;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

// Writes dir/per_bag.csv (`bag_id,loss`) and dir/summary.json.
void save_report(const std::filesystem::path& dir, const EvalReport& report, std::string_view method, LossKind loss);
EvalSummary load_summary(const std::filesystem::path& path);

}  // namespace gmq
