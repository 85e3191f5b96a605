#include <fmt/format.h>

#include <cmath>
#include <limits>

#include "gmq/deepquant.hpp"
#include "gmq/error.hpp"

namespace gmq {

namespace {

constexpr std::pair<Architecture, std::string_view> kArchNames[] = {
    {Architecture::Gmnet, "gmnet"},
    {Architecture::DqnAvg, "dqn-avg"},
    {Architecture::DqnMax, "dqn-max"},
    {Architecture::DqnMed, "dqn-med"},
};

}  // namespace

Architecture parse_architecture(std::string_view name) {
  for (const auto& [a, n] : kArchNames)
    if (n == name) return a;
  throw ConfigError(fmt::format("unknown deep architecture '{}'", name));
}

std::string_view architecture_name(Architecture a) noexcept {
  for (const auto& [arch, n] : kArchNames)
    if (arch == a) return n;
  return "?";
}

bool is_deep_architecture(std::string_view name) {
  for (const auto& entry : kArchNames)
    if (entry.second == name) return true;
  return false;
}

DeepConfig DeepConfig::defaults(Architecture a, std::size_t input_dim, std::size_t classes) {
  DeepConfig c;
  c.architecture = a;
  c.input_dim = input_dim;
  c.classes = classes;
  if (a != Architecture::Gmnet) {
    c.latent_dim = 512;
  }
  return c;
}

void DeepConfig::validate() const {
  if (input_dim == 0) throw ConfigError("deep model: input_dim must be >= 1");
  if (classes < 2) throw ConfigError("deep model: needs at least 2 classes");
  if (latent_dim == 0) throw ConfigError("deep model: latent_dim must be >= 1");
  if (is_gmnet() && (spaces == 0 || gaussians == 0)) throw ConfigError("gmnet: spaces and gaussians must be >= 1");
  if (cka_lambda < 0.0) throw ConfigError("gmnet: cka_lambda must be >= 0");
  for (double r : {fem_dropout, qm_dropout})
    if (r < 0.0 || r >= 1.0) throw ConfigError("dropout rate must lie in [0,1)");
  for (const auto* widths : {&fem_hidden, &qm_hidden})
    for (std::size_t w : *widths)
      if (w == 0) throw ConfigError("hidden layer width must be >= 1");
}

// --- Gaussian bank ---------------------------------------------------------

double initial_variance(const Tensor& means) {
  const std::size_t k = means.rows(), d = means.cols();
  if (k < 2) return 0.0625;
  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (means(a, j) - means(b, j)) * (means(a, j) - means(b, j));
      best = std::min(best, s);
    }
    total += std::sqrt(best);
  }
  const double sigma = total / static_cast<double>(k) / 2.0;
  return sigma * sigma;
}

GaussianInit init_gaussian_bank(std::size_t gaussians, std::size_t dim, Rng& rng) {
  GaussianInit init{Tensor({gaussians, dim}), Tensor({gaussians, dim, dim}), 0.0};
  for (double& v : init.means.storage()) v = rng.uniform();
  init.variance = initial_variance(init.means);
  if (!(init.variance > 0.0)) throw NumericError("gaussian init: coincident centers give zero variance");
  const double log_sigma = 0.5 * std::log(init.variance);
  for (std::size_t k = 0; k < gaussians; ++k)
    for (std::size_t j = 0; j < dim; ++j) init.chol_raw[(k * dim + j) * dim + j] = log_sigma;
  return init;
}

Tensor gaussian_likelihood(const Tensor& z, const Tensor& means, const Tensor& chol_raw) {
  Graph g;
  const NodeId logp =
      g.gaussian_logpdf(g.constant(z), g.constant(means), g.chol_factor(g.constant(chol_raw)));
  return g.value(g.exp(logp));
}

// --- graph pieces ----------------------------------------------------------

NodeId cka(Graph& g, std::span<const NodeId> spaces) {
  if (spaces.size() < 2) throw ContractViolation("cka: needs at least 2 latent spaces");
  std::vector<NodeId> self(spaces.size());
  for (std::size_t i = 0; i < spaces.size(); ++i)
    self[i] = g.frobenius_norm(g.matmul(g.transpose(spaces[i]), spaces[i]));
  NodeId acc = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < spaces.size(); ++i)
    for (std::size_t j = i + 1; j < spaces.size(); ++j) {
      const NodeId cross = g.pow_scalar(g.frobenius_norm(g.matmul(g.transpose(spaces[i]), spaces[j])), 2.0);
      const NodeId term = g.div(cross, g.mul(self[i], self[j]));
      acc = pairs++ ? g.add(acc, term) : term;
    }
  return g.mul_scalar(acc, 1.0 / static_cast<double>(pairs));
}

NodeId total_loss(Graph& g, NodeId quant, NodeId cka_node, double lambda) {
  if (lambda == 0.0) return quant;
  return g.add(quant, g.mul_scalar(cka_node, lambda));
}

// --- model -----------------------------------------------------------------

std::size_t DeepQuantifier::add_param(std::string name, Tensor value) {
  params_.emplace_back(std::move(name), std::move(value));
  return params_.size() - 1;
}

DeepQuantifier::Mlp DeepQuantifier::add_mlp(const std::string& prefix, std::size_t in,
                                            const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng) {
  Mlp mlp;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(out);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w({in, widths[i]}), b({widths[i]});
    for (double& v : w.storage()) v = rng.uniform(-bound, bound);
    for (double& v : b.storage()) v = rng.uniform(-bound, bound);
    mlp.push_back({add_param(fmt::format("{}.layer{}.w", prefix, i), std::move(w)),
                   add_param(fmt::format("{}.layer{}.b", prefix, i), std::move(b))});
    in = widths[i];
  }
  return mlp;
}

DeepQuantifier::DeepQuantifier(DeepConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const std::size_t spaces = config_.is_gmnet() ? config_.spaces : 1;
  for (std::size_t s = 0; s < spaces; ++s)
    fems_.push_back(add_mlp(fmt::format("fem{}", s), config_.input_dim, config_.fem_hidden, config_.latent_dim, rng));
  std::size_t rep = config_.latent_dim;
  if (config_.is_gmnet()) {
    for (std::size_t s = 0; s < spaces; ++s) {
      auto init = init_gaussian_bank(config_.gaussians, config_.latent_dim, rng);
      const std::size_t m = add_param(fmt::format("bank{}.means", s), std::move(init.means));
      const std::size_t c = add_param(fmt::format("bank{}.chol_raw", s), std::move(init.chol_raw));
      banks_.emplace_back(m, c);
    }
    rep = spaces * config_.gaussians;
  }
  qm_ = add_mlp("qm", rep, config_.qm_hidden, config_.classes, rng);
}

template <class Leaf>
DeepQuantifier::Forward DeepQuantifier::build_with(Graph& g, const Tensor& bag, Leaf&& leaf) const {
  if (bag.rank() != 2 || bag.cols() != config_.input_dim || bag.rows() == 0)
    throw ContractViolation(fmt::format("quantifier expects a non-empty (m,{}) bag, got {}", config_.input_dim,
                                        shape_string(bag.shape())));
  const NodeId x = g.constant(bag);
  auto mlp = [&](const Mlp& layers, NodeId h, double rate) {
    for (std::size_t i = 0; i + 1 < layers.size(); ++i)
      h = g.dropout(g.relu(g.affine(h, leaf(layers[i].w), leaf(layers[i].b))), rate);
    return g.affine(h, leaf(layers.back().w), leaf(layers.back().b));
  };
  Forward out;
  for (const Mlp& fem : fems_) out.latents.push_back(g.sigmoid(mlp(fem, x, config_.fem_dropout)));

  NodeId rep = 0;
  switch (config_.architecture) {
    case Architecture::Gmnet: {
      std::vector<NodeId> parts;
      for (std::size_t s = 0; s < banks_.size(); ++s) {
        const NodeId logp =
            g.gaussian_logpdf(out.latents[s], leaf(banks_[s].first), g.chol_factor(leaf(banks_[s].second)));
        const NodeId lik = config_.normalize_likelihood ? g.softmax(logp) : g.exp(logp);
        parts.push_back(g.mean(lik, 0));
      }
      rep = parts.size() == 1 ? parts[0] : g.concat(parts, 0);
      break;
    }
    case Architecture::DqnAvg: rep = g.mean(out.latents[0], 0); break;
    case Architecture::DqnMax: rep = g.max(out.latents[0], 0); break;
    case Architecture::DqnMed: rep = g.median(out.latents[0], 0); break;
  }
  out.representation = g.reshape(rep, {1, g.value(rep).size()});
  const NodeId logits = mlp(qm_, out.representation, config_.qm_dropout);
  out.prevalence = g.reshape(g.softmax(logits), {config_.classes});
  return out;
}

DeepQuantifier::Forward DeepQuantifier::build(Graph& g, const Tensor& bag) {
  return build_with(g, bag, [&](std::size_t i) { return g.param(params_[i]); });
}

DeepQuantifier::Forward DeepQuantifier::build_frozen(Graph& g, const Tensor& bag) const {
  return build_with(g, bag, [&](std::size_t i) { return g.constant(params_[i].value); });
}

PrevalenceVector DeepQuantifier::quantify(const Tensor& bag) const {
  Graph g;
  const auto fwd = build_frozen(g, bag);
  std::vector<double> p = g.value(fwd.prevalence).storage();
  double s = 0.0;
  for (double v : p) s += v;
  for (double& v : p) v /= s;
  return PrevalenceVector(std::move(p));
}

Tensor DeepQuantifier::representation(const Tensor& bag) const {
  Graph g;
  return g.value(build_frozen(g, bag).representation);
}

Tensor DeepQuantifier::latent(const Tensor& bag, std::size_t space) const {
  Graph g;
  return g.value(build_frozen(g, bag).latents.at(space));
}

std::vector<Parameter*> DeepQuantifier::parameters() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::map<std::string, Tensor> DeepQuantifier::parameter_values() const {
  std::map<std::string, Tensor> out;
  for (const Parameter& p : params_) out.emplace(p.name, p.value);
  return out;
}

void DeepQuantifier::set_parameter_values(const std::map<std::string, Tensor>& values) {
  if (values.size() != params_.size())
    throw ValidationError(fmt::format("model expects {} parameters, got {}", params_.size(), values.size()));
  for (Parameter& p : params_) {
    const auto it = values.find(p.name);
    if (it == values.end()) throw ValidationError("missing parameter '" + p.name + "'");
    if (it->second.shape() != p.value.shape())
      throw ValidationError(fmt::format("parameter {} has shape {}, expected {}", p.name,
                                        shape_string(it->second.shape()), shape_string(p.value.shape())));
    p.value = it->second;
    p.zero_grad();
  }
}

DeepQuantifier DeepQuantifier::from_parameters(DeepConfig config, const std::map<std::string, Tensor>& values) {
  Rng scratch(0);
  DeepQuantifier q(std::move(config), scratch);
  q.set_parameter_values(values);
  return q;
}

std::pair<std::string, std::string> DeepQuantifier::bank_names(std::size_t space) const {
  const auto& [m, c] = banks_.at(space);
  return {params_[m].name, params_[c].name};
}

const Tensor& DeepQuantifier::value(const std::string& name) const {
  for (const Parameter& p : params_)
    if (p.name == name) return p.value;
  throw ContractViolation("no parameter named '" + name + "'");
}

}  // namespace gmq
