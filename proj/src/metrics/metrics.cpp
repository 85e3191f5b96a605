#include "gmq/metrics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "gmq/error.hpp"

namespace gmq {

namespace {

void check_lengths(std::string_view what, std::size_t a, std::size_t b) {
  if (a != b) throw ContractViolation(fmt::format("{}: length mismatch ({}) vs ({})", what, a, b));
  if (a == 0) throw ContractViolation(fmt::format("{}: empty prevalence vector", what));
}

double smooth(double p, double eps, std::size_t l) { return (p + eps) / (static_cast<double>(l) * eps + 1.0); }

}  // namespace

LossKind parse_loss_kind(std::string_view name) {
  if (name == "rae") return LossKind::Rae;
  if (name == "nmd") return LossKind::Nmd;
  if (name == "ae") return LossKind::Ae;
  throw ConfigError(fmt::format("unknown loss '{}' (expected rae, nmd or ae)", name));
}

std::string_view loss_name(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::Rae: return "rae";
    case LossKind::Nmd: return "nmd";
    case LossKind::Ae: return "ae";
  }
  return "?";
}

double rae_epsilon(std::size_t m) {
  if (m == 0) throw ContractViolation("rae: bag size must be >= 1");
  return 1.0 / (2.0 * static_cast<double>(m));
}

double rae(std::span<const double> p, std::span<const double> p_hat, std::size_t m) {
  check_lengths("rae", p.size(), p_hat.size());
  const double eps = rae_epsilon(m);
  const std::size_t l = p.size();
  double s = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    const double dp = smooth(p[i], eps, l);
    s += std::abs(dp - smooth(p_hat[i], eps, l)) / dp;
  }
  return s / static_cast<double>(l);
}

double nmd(std::span<const double> p, std::span<const double> p_hat) {
  check_lengths("nmd", p.size(), p_hat.size());
  if (p.size() < 2) throw ContractViolation("nmd: needs at least 2 classes");
  double cum = 0.0, s = 0.0;
  for (std::size_t j = 0; j + 1 < p.size(); ++j) {
    cum += p_hat[j] - p[j];
    s += std::abs(cum);
  }
  return s / static_cast<double>(p.size() - 1);
}

double ae(std::span<const double> p, std::span<const double> p_hat) {
  check_lengths("ae", p.size(), p_hat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - p_hat[i]);
  return s / static_cast<double>(p.size());
}

double hellinger(std::span<const double> h1, std::span<const double> h2) {
  check_lengths("hellinger", h1.size(), h2.size());
  double s1 = 0.0, s2 = 0.0, acc = 0.0;
  for (std::size_t b = 0; b < h1.size(); ++b) {
    if (h1[b] < 0.0 || h2[b] < 0.0) throw ContractViolation("hellinger: negative histogram mass");
    s1 += h1[b];
    s2 += h2[b];
    const double d = std::sqrt(h1[b]) - std::sqrt(h2[b]);
    acc += d * d;
  }
  if (std::abs(s1 - 1.0) > 1e-9 || std::abs(s2 - 1.0) > 1e-9)
    throw ContractViolation(fmt::format("hellinger: histograms must sum to 1 (got {}, {})", s1, s2));
  return std::min(1.0, std::sqrt(acc) / std::sqrt(2.0));
}

double loss_value(LossKind kind, std::span<const double> p, std::span<const double> p_hat, std::size_t m) {
  switch (kind) {
    case LossKind::Rae: return rae(p, p_hat, m);
    case LossKind::Nmd: return nmd(p, p_hat);
    case LossKind::Ae: return ae(p, p_hat);
  }
  throw ContractViolation("unknown loss kind");
}

NodeId differentiable_loss(Graph& g, LossKind kind, std::span<const double> p_true, NodeId p_hat, std::size_t m) {
  const Tensor& pred = g.value(p_hat);
  if (pred.rank() != 1) throw ContractViolation("loss: prediction must be a rank-1 prevalence node, got " +
                                                shape_string(pred.shape()));
  check_lengths(loss_name(kind), p_true.size(), pred.size());
  const std::size_t l = p_true.size();
  const NodeId target = g.constant(Tensor::vector({p_true.begin(), p_true.end()}));
  switch (kind) {
    case LossKind::Rae: {
      const double eps = rae_epsilon(m), norm = static_cast<double>(l) * eps + 1.0;
      Tensor dp({l});
      for (std::size_t i = 0; i < l; ++i) dp[i] = smooth(p_true[i], eps, l);
      const NodeId dp_node = g.constant(dp);
      const NodeId dq = g.div(g.add_scalar(p_hat, eps), g.constant(Tensor::scalar(norm)));
      return g.mean(g.div(g.abs(g.sub(dp_node, dq)), dp_node));
    }
    case LossKind::Nmd: {
      if (l < 2) throw ContractViolation("nmd: needs at least 2 classes");
      const NodeId diff = g.sub(p_hat, target);
      std::vector<NodeId> cums;
      for (std::size_t j = 0; j + 1 < l; ++j) {
        Tensor mask({l});
        for (std::size_t i = 0; i <= j; ++i) mask[i] = 1.0;
        cums.push_back(g.sum(g.mul(diff, g.constant(std::move(mask)))));
      }
      return g.mean(g.abs(g.concat(cums, 0)));
    }
    case LossKind::Ae: return g.mean(g.abs(g.sub(target, p_hat)));
  }
  throw ContractViolation("unknown loss kind");
}

EvalReport EvalReport::from_losses(std::vector<double> losses) {
  EvalReport r;
  r.n = losses.size();
  if (r.n) {
    double s = 0.0;
    for (double v : losses) s += v;
    r.mean = s / static_cast<double>(r.n);
    double ss = 0.0;
    for (double v : losses) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(r.n));
  }
  r.losses = std::move(losses);
  return r;
}

void save_report(const std::filesystem::path& dir, const EvalReport& report, std::string_view method, LossKind loss) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "per_bag.csv", std::ios::binary);
  csv << "bag_id,loss\n";
  for (std::size_t i = 0; i < report.losses.size(); ++i) csv << i << ',' << format_double(report.losses[i]) << '\n';
  nlohmann::ordered_json j;
  j["method"] = method;
  j["loss"] = loss_name(loss);
  j["mean"] = report.mean;
  j["std"] = report.std;
  j["n"] = report.n;
  std::ofstream(dir / "summary.json", std::ios::binary) << j.dump(2) << '\n';
  if (!csv) throw ValidationError("cannot write report to " + dir.string());
}

EvalSummary load_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("method").get<std::string>(), j.at("loss").get<std::string>(), j.at("mean").get<double>(),
            j.at("std").get<double>(), j.at("n").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gmq
