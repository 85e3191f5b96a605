#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmq/adam.hpp"
#include "gmq/data.hpp"
#include "gmq/graph.hpp"
#include "gmq/metrics.hpp"
#include "gmq/protocols.hpp"

namespace gmq {

enum class Architecture { Gmnet, DqnAvg, DqnMax, DqnMed };

Architecture parse_architecture(std::string_view name);  // gmnet, dqn-avg, dqn-max, dqn-med
std::string_view architecture_name(Architecture a) noexcept;
bool is_deep_architecture(std::string_view name);

struct DeepConfig {
  Architecture architecture = Architecture::Gmnet;
  std::size_t input_dim = 0;
  std::size_t classes = 0;

  // FEM: relu hidden layers with dropout, then a sigmoid layer of
  // latent_dim units. GMNet has one FEM per latent space, DQN a single one.
  std::vector<std::size_t> fem_hidden{50};
  std::size_t latent_dim = 5;
  double fem_dropout = 0.1;

  // GMNet only.
  std::size_t spaces = 9;
  std::size_t gaussians = 100;
  bool normalize_likelihood = false;  // per-example normalization before the mean
  double cka_lambda = 0.01;

  // QM: relu hidden layers with dropout, then softmax over the classes.
  std::vector<std::size_t> qm_hidden{64};
  double qm_dropout = 0.1;

  LossKind loss = LossKind::Rae;

  // Defaults for an architecture: GMNet as above; DQN with a 512-unit FEM.
  static DeepConfig defaults(Architecture a, std::size_t input_dim, std::size_t classes);
  void validate() const;  // ConfigError
  bool is_gmnet() const { return architecture == Architecture::Gmnet; }
};

// --- Gaussian bank ---------------------------------------------------------

// Shared initial variance: (mean nearest-center distance / 2)^2, or 0.0625
// when there is a single center.
double initial_variance(const Tensor& means);

struct GaussianInit {
  Tensor means;     // (K, d), uniform on [0,1]^d
  Tensor chol_raw;  // (K, d, d), zero off-diagonal, log(sigma) on the diagonal
  double variance = 0.0;
};
GaussianInit init_gaussian_bank(std::size_t gaussians, std::size_t dim, Rng& rng);

// p(z_i | k) for rows of z, (m, K). `chol_raw` as stored in the model.
Tensor gaussian_likelihood(const Tensor& z, const Tensor& means, const Tensor& chol_raw);

// --- graph pieces ----------------------------------------------------------

// Mean over pairs i<j of ||Zi^T Zj||_F^2 / (||Zi^T Zi||_F ||Zj^T Zj||_F).
NodeId cka(Graph& g, std::span<const NodeId> spaces);
// quant + lambda * cka; lambda == 0 returns `quant` unchanged.
NodeId total_loss(Graph& g, NodeId quant, NodeId cka_node, double lambda);

// --- model -----------------------------------------------------------------

class DeepQuantifier {
 public:
  struct Forward {
    NodeId prevalence = 0;        // rank-1, length l
    NodeId representation = 0;    // (1, R) bag representation fed to the QM
    std::vector<NodeId> latents;  // Z per latent space
  };

  DeepQuantifier() = default;
  DeepQuantifier(DeepConfig config, Rng& rng);

  // Parameters become differentiable leaves; dropout follows g.training().
  Forward build(Graph& g, const Tensor& bag);
  // Parameters enter as constants; safe to call concurrently.
  Forward build_frozen(Graph& g, const Tensor& bag) const;

  PrevalenceVector quantify(const Tensor& bag) const;  // eval mode
  Tensor representation(const Tensor& bag) const;      // eval mode, (1, R)
  Tensor latent(const Tensor& bag, std::size_t space) const;

  const DeepConfig& config() const { return config_; }
  std::vector<Parameter*> parameters();
  std::map<std::string, Tensor> parameter_values() const;
  void set_parameter_values(const std::map<std::string, Tensor>& values);
  static DeepQuantifier from_parameters(DeepConfig config, const std::map<std::string, Tensor>& values);

  // (means, chol_raw) parameter names of GMNet latent space `space`.
  std::pair<std::string, std::string> bank_names(std::size_t space) const;
  const Tensor& value(const std::string& name) const;

 private:
  struct Layer {
    std::size_t w, b;
  };
  using Mlp = std::vector<Layer>;

  template <class Leaf>
  Forward build_with(Graph& g, const Tensor& bag, Leaf&& leaf) const;
  std::size_t add_param(std::string name, Tensor value);
  Mlp add_mlp(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
              Rng& rng);

  DeepConfig config_;
  std::vector<Parameter> params_;
  std::vector<Mlp> fems_;
  std::vector<std::pair<std::size_t, std::size_t>> banks_;
  Mlp qm_;
};

// --- training --------------------------------------------------------------

struct TrainerConfig {
  AdamConfig adam;
  std::size_t max_epochs = 5000;
  std::size_t patience = 40;    // stop after this many epochs without improvement
  std::size_t batch_bags = 1;   // bags per optimizer step, gradients averaged
  std::uint64_t seed = 0;       // dropout masks
};

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean total loss over the epoch's bags
  double val_loss = 0.0;
  double cka_term = 0.0;    // mean CKA score, 0 when unused
};

struct TrainResult {
  DeepQuantifier model;  // best-validation parameters
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool diverged = false;
  std::size_t app_bags_generated = 0;
  std::string stop_reason;  // "patience", "max_epochs", "diverged"
};

TrainResult train(DeepQuantifier model, const TrainingStream& stream, std::span<const Bag> val_bags,
                  const TrainerConfig& config);

// Mean of the plain loss over labeled bags, bags evaluated in parallel.
double mean_bag_loss(const DeepQuantifier& model, std::span<const Bag> bags, LossKind loss);

void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> history);

}  // namespace gmq
