#include "gmq/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>
#include <sstream>

#include "gmq/error.hpp"

namespace gmq {

namespace fs = std::filesystem;

PrevalenceVector::PrevalenceVector(std::vector<double> values, double tol) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("prevalence vector is empty");
  double s = 0.0;
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(fmt::format("prevalence value {} outside [0,1]", v));
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw ValidationError(fmt::format("prevalence sums to {}, not 1", s));
}

PrevalenceVector PrevalenceVector::renormalized(std::vector<double> values, double tol) {
  double s = 0.0;
  for (double v : values) s += v;
  if (values.empty() || std::abs(s - 1.0) > tol)
    throw ValidationError(fmt::format("prevalence sums to {}, not 1 (tolerance {})", s, tol));
  for (double& v : values) {
    if (v < 0.0) throw ValidationError(fmt::format("negative prevalence {}", v));
    v /= s;
  }
  return PrevalenceVector(std::move(values), 1e-12);
}

PrevalenceVector PrevalenceVector::uniform(std::size_t classes) {
  return PrevalenceVector(std::vector<double>(classes, 1.0 / static_cast<double>(classes)), 1e-12);
}

PrevalenceVector PrevalenceVector::one_hot(std::size_t classes, std::size_t k) {
  std::vector<double> v(classes, 0.0);
  v.at(k) = 1.0;
  return PrevalenceVector(std::move(v));
}

PrevalenceVector prevalence_from_labels(std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw ContractViolation("prevalence_from_labels: empty label list");
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw ContractViolation(fmt::format("prevalence_from_labels: label {} outside [0,{})", y, classes));
    ++counts[static_cast<std::size_t>(y)];
  }
  std::vector<double> v(classes);
  const auto m = static_cast<double>(labels.size());
  for (std::size_t k = 0; k < classes; ++k) v[k] = static_cast<double>(counts[k]) / m;
  return PrevalenceVector(std::move(v), 1e-12);
}

void validate_bag(const Bag& bag) {
  if (bag.size() == 0) throw ValidationError("bag has no examples");
  if (bag.labels && bag.labels->size() != bag.size())
    throw ValidationError(fmt::format("bag has {} examples but {} labels", bag.size(), bag.labels->size()));
  if (bag.labels && bag.prevalence) {
    const auto counted = prevalence_from_labels(*bag.labels, bag.prevalence->size());
    for (std::size_t k = 0; k < counted.size(); ++k)
      if (std::abs(counted[k] - (*bag.prevalence)[k]) > 1e-9)
        throw ValidationError(fmt::format("bag prevalence {} for class {} disagrees with label share {}",
                                          (*bag.prevalence)[k], k, counted[k]));
  }
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_number(std::string_view cell, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty())
    throw ParseError(fmt::format("{}: non-numeric cell '{}'", path.string(), cell), line);
  return v;
}

int parse_label(std::string_view cell, const fs::path& path, std::size_t line) {
  int v = 0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty() || v < 0)
    throw ParseError(fmt::format("{}: invalid class label '{}'", path.string(), cell), line);
  return v;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;  // filled when the last column is `label`
  bool has_label = false;
};

// Reads a numeric CSV with a header row. When `label_column` is true and the
// last header cell is `label`, that column is parsed as integers.
Table read_table(const fs::path& path, bool label_column) {
  auto in = open_in(path);
  Table t;
  std::string line;
  if (!next_line(in, line)) throw ParseError(path.string() + ": missing header", 1);
  for (auto cell : split(line)) t.header.emplace_back(cell);
  t.has_label = label_column && !t.header.empty() && t.header.back() == "label";
  const std::size_t width = t.header.size();
  const std::size_t numeric = t.has_label ? width - 1 : width;
  std::size_t lineno = 1;
  while (next_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != width)
      throw ParseError(fmt::format("{}: expected {} cells, found {}", path.string(), width, cells.size()), lineno);
    std::vector<double> row(numeric);
    for (std::size_t c = 0; c < numeric; ++c) row[c] = parse_number(cells[c], path, lineno);
    if (t.has_label) t.labels.push_back(parse_label(cells.back(), path, lineno));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Tensor to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  Tensor m({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

void write_features_header(std::ostream& out, std::size_t d, bool label) {
  for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << 'f' << c;
  if (label) out << ",label";
  out << '\n';
}

void write_row(std::ostream& out, std::span<const double> row) {
  for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
}

fs::path bag_path(const fs::path& dir, std::size_t i) { return dir / fmt::format("bag_{}.csv", i); }

}  // namespace

ExampleSet load_examples_csv(const fs::path& path, std::optional<std::size_t> declared_classes) {
  Table t = read_table(path, true);
  const std::size_t d = t.has_label ? t.header.size() - 1 : t.header.size();
  ExampleSet set;
  set.features = to_matrix(t.rows, d);
  if (t.has_label) {
    int max_label = -1;
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
      if (declared_classes && static_cast<std::size_t>(t.labels[i]) >= *declared_classes)
        throw ParseError(fmt::format("{}: label {} not below declared class count {}", path.string(), t.labels[i],
                                     *declared_classes),
                         i + 2);
      max_label = std::max(max_label, t.labels[i]);
    }
    set.class_count = declared_classes.value_or(static_cast<std::size_t>(max_label + 1));
    set.labels = std::move(t.labels);
  } else {
    set.class_count = declared_classes.value_or(0);
  }
  return set;
}

void save_examples_csv(const fs::path& path, const ExampleSet& examples) {
  auto out = open_out(path);
  write_features_header(out, examples.dim(), examples.labeled());
  for (std::size_t r = 0; r < examples.size(); ++r) {
    write_row(out, examples.features.row(r));
    if (examples.labeled()) out << ',' << (*examples.labels)[r];
    out << '\n';
  }
}

std::vector<Bag> load_bags(const fs::path& dir, std::optional<std::size_t> declared_classes) {
  const fs::path prev_path = dir / "prevalences.csv";
  Table prev = read_table(prev_path, false);
  if (prev.header.size() < 2 || prev.header.front() != "bag_id")
    throw ParseError(prev_path.string() + ": header must be bag_id,p0,...", 1);
  const std::size_t classes = prev.header.size() - 1;
  if (declared_classes && *declared_classes != classes)
    throw ValidationError(fmt::format("{}: {} prevalence columns but {} classes declared", prev_path.string(),
                                      classes, *declared_classes));
  std::map<std::size_t, PrevalenceVector> by_id;
  for (std::size_t r = 0; r < prev.rows.size(); ++r) {
    const double raw_id = prev.rows[r][0];
    if (raw_id < 0 || raw_id != std::floor(raw_id))
      throw ParseError(fmt::format("{}: invalid bag id {}", prev_path.string(), raw_id), r + 2);
    const auto id = static_cast<std::size_t>(raw_id);
    std::vector<double> p(prev.rows[r].begin() + 1, prev.rows[r].end());
    try {
      if (!by_id.emplace(id, PrevalenceVector::renormalized(std::move(p), 1e-6)).second)
        throw ParseError(fmt::format("{}: duplicate bag id {}", prev_path.string(), id), r + 2);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{} line {}: {}", prev_path.string(), r + 2, e.what()));
    }
  }
  std::vector<Bag> bags;
  bags.reserve(by_id.size());
  std::size_t expected = 0, dim = 0;
  for (auto& [id, p] : by_id) {
    if (id != expected++) throw ValidationError(fmt::format("{}: bag ids are not dense 0..n-1", prev_path.string()));
    const fs::path path = bag_path(dir, id);
    if (!fs::exists(path)) throw ValidationError("missing bag file " + path.string());
    Table t = read_table(path, false);
    if (t.rows.empty()) throw ValidationError(path.string() + ": bag has no examples");
    if (bags.empty()) dim = t.header.size();
    if (t.header.size() != dim)
      throw ValidationError(fmt::format("{}: {} features, other bags have {}", path.string(), t.header.size(), dim));
    bags.push_back(Bag{to_matrix(t.rows, dim), std::move(p), std::nullopt});
  }
  return bags;
}

void save_bags(const fs::path& dir, std::span<const Bag> bags) {
  fs::create_directories(dir);
  if (bags.empty()) throw ContractViolation("save_bags: no bags");
  const std::size_t classes = bags.front().prevalence ? bags.front().prevalence->size() : 0;
  auto prev = open_out(dir / "prevalences.csv");
  prev << "bag_id";
  for (std::size_t k = 0; k < classes; ++k) prev << ",p" << k;
  prev << '\n';
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const Bag& b = bags[i];
    if (!b.prevalence || b.prevalence->size() != classes)
      throw ContractViolation(fmt::format("save_bags: bag {} lacks a {}-class prevalence", i, classes));
    prev << i << ',';
    write_row(prev, b.prevalence->values());
    prev << '\n';
    auto out = open_out(bag_path(dir, i));
    write_features_header(out, b.dim(), false);
    for (std::size_t r = 0; r < b.size(); ++r) {
      write_row(out, b.features.row(r));
      out << '\n';
    }
  }
}

Manifest load_manifest(const fs::path& path) {
  auto in = open_in(path);
  nlohmann::json j;
  try {
    in >> j;
    Manifest m;
    m.classes = j.at("classes").get<std::size_t>();
    m.features = j.at("features").get<std::size_t>();
    m.examples = j.value("examples", std::size_t{0});
    m.bags = j.value("bags", std::size_t{0});
    m.test_bags = j.value("test_bags", std::size_t{0});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_manifest(const fs::path& path, const Manifest& m) {
  nlohmann::ordered_json j;
  j["classes"] = m.classes;
  j["features"] = m.features;
  j["examples"] = m.examples;
  j["bags"] = m.bags;
  j["test_bags"] = m.test_bags;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = load_manifest(dir / "meta.json");
  const std::size_t l = ds.manifest.classes;
  if (fs::exists(dir / "examples.csv")) ds.examples = load_examples_csv(dir / "examples.csv", l);
  if (ds.examples.size() && ds.examples.dim() != ds.manifest.features)
    throw ValidationError(fmt::format("examples.csv has {} features, manifest says {}", ds.examples.dim(),
                                      ds.manifest.features));
  if (fs::exists(dir / "bags" / "prevalences.csv")) ds.bags = load_bags(dir / "bags", l);
  if (fs::exists(dir / "test_bags" / "prevalences.csv")) ds.test_bags = load_bags(dir / "test_bags", l);
  for (const auto* group : {&ds.bags, &ds.test_bags})
    for (const Bag& b : *group)
      if (b.dim() != ds.manifest.features)
        throw ValidationError(fmt::format("bag has {} features, manifest says {}", b.dim(), ds.manifest.features));
  return ds;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  Manifest m = ds.manifest;
  m.examples = ds.examples.size();
  m.bags = ds.bags.size();
  m.test_bags = ds.test_bags.size();
  save_manifest(dir / "meta.json", m);
  if (ds.examples.size()) save_examples_csv(dir / "examples.csv", ds.examples);
  if (!ds.bags.empty()) save_bags(dir / "bags", ds.bags);
  if (!ds.test_bags.empty()) save_bags(dir / "test_bags", ds.test_bags);
}

}  // namespace gmq
