#include <fmt/format.h>

#include "gmq/classic.hpp"
#include "gmq/error.hpp"

namespace gmq {

namespace {

constexpr std::pair<ClassicMethod, std::string_view> kMethodNames[] = {
    {ClassicMethod::Cc, "cc"},   {ClassicMethod::Pcc, "pcc"}, {ClassicMethod::Acc, "acc"},
    {ClassicMethod::Pacc, "pacc"}, {ClassicMethod::Dmy, "dmy"}, {ClassicMethod::Emq, "emq"},
    {ClassicMethod::EmqPlatt, "emq-platt"},
};

const Tensor& need(const std::map<std::string, Tensor>& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw ValidationError("model artifact lacks parameter '" + name + "'");
  return it->second;
}

}  // namespace

ClassicMethod parse_classic_method(std::string_view name) {
  for (const auto& [m, n] : kMethodNames)
    if (n == name) return m;
  throw ConfigError(fmt::format("unknown classical method '{}'", name));
}

std::string_view method_name(ClassicMethod method) noexcept {
  for (const auto& [m, n] : kMethodNames)
    if (m == method) return n;
  return "?";
}

bool is_classic_method(std::string_view name) {
  for (const auto& entry : kMethodNames)
    if (entry.second == name) return true;
  return false;
}

ClassicQuantifier ClassicQuantifier::fit(ClassicMethod method, const ExampleSet& examples,
                                         const ClassicConfig& config, Rng& rng) {
  ClassicQuantifier q;
  q.method_ = method;
  q.config_ = config;
  q.classifier_ = train_classifier(examples, config.classifier);
  q.train_priors_ = prevalence_from_labels(*examples.labels, examples.class_count).values();
  switch (method) {
    case ClassicMethod::Acc:
      q.confusion_ = hard_confusion(cv_predictions(examples, config.folds, config.classifier, rng));
      break;
    case ClassicMethod::Pacc:
      q.confusion_ = soft_confusion(cv_predictions(examples, config.folds, config.classifier, rng));
      break;
    case ClassicMethod::Dmy:
      q.histograms_ = histogram_model(cv_predictions(examples, config.folds, config.classifier, rng), config.dmy_bins);
      break;
    case ClassicMethod::EmqPlatt: {
      const auto cv = cv_predictions(examples, config.folds, config.classifier, rng);
      q.calibration_ = platt_calibrate(cv.posteriors, cv.labels);
      break;
    }
    default:
      break;
  }
  q.seed_ = rng.next_u64();
  return q;
}

PrevalenceVector ClassicQuantifier::quantify(const Tensor& bag) const {
  const Tensor post = classifier_.predict_proba(bag);
  switch (method_) {
    case ClassicMethod::Cc: return cc(post);
    case ClassicMethod::Pcc: return pcc(post);
    case ClassicMethod::Acc: return acc(post, confusion_);
    case ClassicMethod::Pacc: return pacc(post, confusion_);
    case ClassicMethod::Dmy: {
      Rng rng(seed_);
      return dmy(post, histograms_, rng, config_.dmy);
    }
    case ClassicMethod::Emq: return emq(post, train_priors_);
    case ClassicMethod::EmqPlatt: return emq(calibration_.apply(post), train_priors_);
  }
  throw ContractViolation("unknown classical method");
}

std::map<std::string, Tensor> ClassicQuantifier::parameters() const {
  std::map<std::string, Tensor> p{
      {"classifier.weights", classifier_.weights()},
      {"classifier.bias", classifier_.bias()},
      {"classifier.mean", classifier_.mean()},
      {"classifier.scale", classifier_.scale()},
  };
  switch (method_) {
    case ClassicMethod::Acc:
    case ClassicMethod::Pacc: p["confusion"] = confusion_.matrix; break;
    case ClassicMethod::Dmy: p["histograms"] = histograms_.class_histograms; break;
    case ClassicMethod::EmqPlatt:
      p["calibration"] = Tensor::vector(
          {calibration_.kind == Calibration::Kind::Platt ? 1.0 : 0.0, calibration_.a, calibration_.b, calibration_.t});
      [[fallthrough]];
    case ClassicMethod::Emq: p["train_priors"] = Tensor::vector(train_priors_); break;
    default: break;
  }
  return p;
}

ClassicQuantifier ClassicQuantifier::from_parameters(ClassicMethod method, const ClassicConfig& config,
                                                     std::uint64_t seed, const std::map<std::string, Tensor>& params) {
  ClassicQuantifier q;
  q.method_ = method;
  q.config_ = config;
  q.seed_ = seed;
  q.classifier_ = SoftClassifier(need(params, "classifier.weights"), need(params, "classifier.bias"),
                                 need(params, "classifier.mean"), need(params, "classifier.scale"));
  const std::size_t l = q.classifier_.class_count();
  auto check = [&](const Tensor& t, const Shape& s, const char* name) {
    if (t.shape() != s)
      throw ValidationError(fmt::format("parameter {} has shape {}, expected {}", name, shape_string(t.shape()),
                                        shape_string(s)));
    return t;
  };
  switch (method) {
    case ClassicMethod::Acc:
    case ClassicMethod::Pacc:
      q.confusion_ = {check(need(params, "confusion"), {l, l}, "confusion"), method == ClassicMethod::Pacc};
      break;
    case ClassicMethod::Dmy:
      q.histograms_ = {config.dmy_bins, l,
                       check(need(params, "histograms"), {l, l * config.dmy_bins}, "histograms")};
      break;
    case ClassicMethod::EmqPlatt: {
      const Tensor c = check(need(params, "calibration"), {4}, "calibration");
      q.calibration_.kind = c[0] == 1.0 ? Calibration::Kind::Platt : Calibration::Kind::Temperature;
      q.calibration_.a = c[1];
      q.calibration_.b = c[2];
      q.calibration_.t = c[3];
      [[fallthrough]];
    }
    case ClassicMethod::Emq:
      q.train_priors_ = check(need(params, "train_priors"), {l}, "train_priors").storage();
      break;
    default:
      break;
  }
  return q;
}

}  // namespace gmq
