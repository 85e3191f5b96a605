#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "gmq/cli.hpp"
#include "gmq/error.hpp"

namespace gmq::cli {

using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kProbeRows = 16;
constexpr std::uint64_t kProbeStream = 0x70726f6265ULL;

json tensor_json(const Tensor& t) { return {{"shape", t.shape()}, {"values", t.storage()}}; }

Tensor tensor_from(const json& j, const std::string& what) {
  try {
    Shape shape = j.at("shape").get<Shape>();
    std::vector<double> values = j.at("values").get<std::vector<double>>();
    return Tensor(std::move(shape), std::move(values));
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("artifact: bad tensor '{}': {}", what, e.what()));
  } catch (const ContractViolation& e) {
    throw ValidationError(fmt::format("artifact: bad tensor '{}': {}", what, e.what()));
  }
}

json deep_config_json(const DeepConfig& c) {
  return {{"input_dim", c.input_dim},
          {"classes", c.classes},
          {"fem_hidden", c.fem_hidden},
          {"latent_dim", c.latent_dim},
          {"fem_dropout", c.fem_dropout},
          {"spaces", c.spaces},
          {"gaussians", c.gaussians},
          {"normalize_likelihood", c.normalize_likelihood},
          {"cka_lambda", c.cka_lambda},
          {"qm_hidden", c.qm_hidden},
          {"qm_dropout", c.qm_dropout},
          {"loss", loss_name(c.loss)}};
}

DeepConfig deep_config_from(Architecture a, const json& j) {
  DeepConfig c;
  c.architecture = a;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.fem_hidden = j.at("fem_hidden").get<std::vector<std::size_t>>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.fem_dropout = j.at("fem_dropout").get<double>();
  c.spaces = j.at("spaces").get<std::size_t>();
  c.gaussians = j.at("gaussians").get<std::size_t>();
  c.normalize_likelihood = j.at("normalize_likelihood").get<bool>();
  c.cka_lambda = j.at("cka_lambda").get<double>();
  c.qm_hidden = j.at("qm_hidden").get<std::vector<std::size_t>>();
  c.qm_dropout = j.at("qm_dropout").get<double>();
  c.loss = parse_loss_kind(j.at("loss").get<std::string>());
  c.validate();
  return c;
}

json classic_config_json(const ClassicConfig& c, std::uint64_t seed) {
  return {{"l2", c.classifier.l2},
          {"max_iter", c.classifier.max_iter},
          {"tol", c.classifier.tol},
          {"folds", c.folds},
          {"dmy_bins", c.dmy_bins},
          {"dmy_restarts", c.dmy.restarts},
          {"dmy_tol", c.dmy.tol},
          {"dmy_max_iter", c.dmy.max_iter},
          {"seed", seed}};
}

ClassicConfig classic_config_from(const json& j) {
  ClassicConfig c;
  c.classifier.l2 = j.at("l2").get<double>();
  c.classifier.max_iter = j.at("max_iter").get<std::size_t>();
  c.classifier.tol = j.at("tol").get<double>();
  c.folds = j.at("folds").get<std::size_t>();
  c.dmy_bins = j.at("dmy_bins").get<std::size_t>();
  c.dmy.restarts = j.at("dmy_restarts").get<std::size_t>();
  c.dmy.tol = j.at("dmy_tol").get<double>();
  c.dmy.max_iter = j.at("dmy_max_iter").get<std::size_t>();
  return c;
}

// JSON has no NaN or infinity; those become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json metadata_json(const TrainMetadata& m) {
  json history = json::array();
  for (const HistoryRow& r : m.history)
    history.push_back({{"epoch", r.epoch},
                       {"train_loss", number(r.train_loss)},
                       {"val_loss", number(r.val_loss)},
                       {"cka_term", number(r.cka_term)}});
  json grid = json::array();
  for (const GridPoint& g : m.grid) grid.push_back({{"l2", g.l2}, {"bins", g.bins}, {"val_loss", number(g.val_loss)}});
  return {{"seed", m.seed},
          {"setting", m.setting},
          {"loss", loss_name(m.loss)},
          {"train_bags", m.train_bags},
          {"val_bags", m.val_bags},
          {"app_bags_generated", m.app_bags_generated},
          {"best_epoch", m.best_epoch},
          {"best_val_loss", number(m.best_val_loss)},
          {"stop_reason", m.stop_reason},
          {"trainer",
           {{"lr", m.trainer.adam.lr},
            {"beta1", m.trainer.adam.beta1},
            {"beta2", m.trainer.adam.beta2},
            {"eps", m.trainer.adam.eps},
            {"max_epochs", m.trainer.max_epochs},
            {"patience", m.trainer.patience},
            {"batch_bags", m.trainer.batch_bags}}},
          {"sampling",
           {{"bag_size", m.sampling.bag_size},
            {"bags_per_epoch", m.sampling.bags_per_epoch},
            {"mixer", m.sampling.mixer_enabled},
            {"app", m.sampling.app_enabled},
            {"app_fraction", m.sampling.app_fraction}}},
          {"grid", grid},
          {"history", history}};
}

TrainMetadata metadata_from(const json& j) {
  TrainMetadata m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.setting = j.at("setting").get<std::string>();
  m.loss = parse_loss_kind(j.at("loss").get<std::string>());
  m.train_bags = j.at("train_bags").get<std::size_t>();
  m.val_bags = j.at("val_bags").get<std::size_t>();
  m.app_bags_generated = j.at("app_bags_generated").get<std::size_t>();
  m.best_epoch = j.at("best_epoch").get<std::size_t>();
  m.best_val_loss = number_from(j.at("best_val_loss"));
  m.stop_reason = j.at("stop_reason").get<std::string>();
  const json& t = j.at("trainer");
  m.trainer.adam.lr = t.at("lr").get<double>();
  m.trainer.adam.beta1 = t.at("beta1").get<double>();
  m.trainer.adam.beta2 = t.at("beta2").get<double>();
  m.trainer.adam.eps = t.at("eps").get<double>();
  m.trainer.max_epochs = t.at("max_epochs").get<std::size_t>();
  m.trainer.patience = t.at("patience").get<std::size_t>();
  m.trainer.batch_bags = t.at("batch_bags").get<std::size_t>();
  m.trainer.seed = m.seed;
  const json& s = j.at("sampling");
  m.sampling.bag_size = s.at("bag_size").get<std::size_t>();
  m.sampling.bags_per_epoch = s.at("bags_per_epoch").get<std::size_t>();
  m.sampling.mixer_enabled = s.at("mixer").get<bool>();
  m.sampling.app_enabled = s.at("app").get<bool>();
  m.sampling.app_fraction = s.at("app_fraction").get<double>();
  m.sampling.seed = m.seed;
  for (const json& g : j.at("grid"))
    m.grid.push_back({g.at("l2").get<double>(), g.at("bins").get<std::size_t>(), number_from(g.at("val_loss"))});
  for (const json& r : j.at("history"))
    m.history.push_back({r.at("epoch").get<std::size_t>(), number_from(r.at("train_loss")),
                         number_from(r.at("val_loss")), number_from(r.at("cka_term"))});
  return m;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model artifact " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

Tensor probe_bag(std::size_t dim, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kProbeStream);
  Tensor bag({kProbeRows, dim});
  for (double& v : bag.storage()) v = rng.normal(0.0, 2.0);
  return bag;
}

}  // namespace

PrevalenceVector Model::quantify(const Tensor& bag) const {
  return std::visit([&](const auto& q) { return q.quantify(bag); }, impl_);
}

std::string Model::name() const {
  if (const auto* d = deep()) return std::string(architecture_name(d->config().architecture));
  return std::string(method_name(classic()->method()));
}

std::size_t Model::classes() const {
  if (const auto* d = deep()) return d->config().classes;
  return classic()->class_count();
}

std::size_t Model::dim() const {
  if (const auto* d = deep()) return d->config().input_dim;
  return classic()->dim();
}

void save_model(const std::filesystem::path& path, const Model& model, const TrainMetadata& meta) {
  json j;
  j["format_version"] = kFormatVersion;
  j["architecture"] = model.name();
  j["classes"] = model.classes();
  j["features"] = model.dim();
  std::map<std::string, Tensor> params;
  if (const auto* d = model.deep()) {
    j["family"] = "deep";
    j["config"] = deep_config_json(d->config());
    params = d->parameter_values();
  } else {
    j["family"] = "classic";
    j["config"] = classic_config_json(model.classic()->config(), model.classic()->seed());
    params = model.classic()->parameters();
  }
  json pj = json::object();
  for (const auto& [name, t] : params) pj[name] = tensor_json(t);
  j["parameters"] = std::move(pj);
  j["metadata"] = metadata_json(meta);
  const Tensor probe = probe_bag(model.dim(), meta.seed);
  j["probe"] = {{"bag", tensor_json(probe)}, {"prediction", model.quantify(probe).values()}};

  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
      throw ValidationError(fmt::format("{}: unsupported format_version {}", path.string(), version));
    const std::string arch = j.at("architecture").get<std::string>();
    std::map<std::string, Tensor> params;
    for (const auto& [name, t] : j.at("parameters").items()) params.emplace(name, tensor_from(t, name));

    std::optional<Model> model;
    if (is_deep_architecture(arch)) {
      model.emplace(DeepQuantifier::from_parameters(deep_config_from(parse_architecture(arch), j.at("config")), params));
    } else {
      const json& c = j.at("config");
      model.emplace(ClassicQuantifier::from_parameters(parse_classic_method(arch), classic_config_from(c),
                                                       c.at("seed").get<std::uint64_t>(), params));
    }
    if (model->classes() != j.at("classes").get<std::size_t>() || model->dim() != j.at("features").get<std::size_t>())
      throw ValidationError(path.string() + ": parameter shapes disagree with the declared classes/features");

    const Tensor probe = tensor_from(j.at("probe").at("bag"), "probe.bag");
    const auto expected = j.at("probe").at("prediction").get<std::vector<double>>();
    const PrevalenceVector got = model->quantify(probe);
    if (expected.size() != got.size())
      throw ValidationError(path.string() + ": probe prediction has the wrong length");
    for (std::size_t k = 0; k < expected.size(); ++k)
      if (!(std::abs(expected[k] - got[k]) <= 1e-12))
        throw ValidationError(fmt::format("{}: probe check failed at class {} ({} stored, {} recomputed)",
                                          path.string(), k, expected[k], got[k]));
    return std::move(*model);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: malformed artifact: {}", path.string(), e.what()));
  }
}

TrainMetadata load_metadata(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    return metadata_from(j.at("metadata"));
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: malformed metadata: {}", path.string(), e.what()));
  }
}

}  // namespace gmq::cli
