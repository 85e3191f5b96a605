#include "gmq/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "gmq/error.hpp"
#include "gmq/kernels.hpp"

namespace gmq {

namespace {

std::atomic<bool> g_check_finite{true};

[[noreturn]] void shape_error(std::string_view what, const Tensor& a, const Tensor& b) {
  throw ContractViolation(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
}

[[noreturn]] void shape_error(std::string_view what, const Tensor& a) {
  throw ContractViolation(std::string(what) + ": unsupported shape " + shape_string(a.shape()));
}

// Reduction geometry: `groups` outputs, each over `count` inputs spaced by
// `stride`, group g starting at offset(g).
struct Reduction {
  Shape out_shape;
  std::size_t groups = 1, count = 0, stride = 1, group_step = 0;
  std::size_t offset(std::size_t g) const { return g * group_step; }
};

Reduction reduction_for(const Tensor& x, int axis, std::string_view what) {
  Reduction r;
  if (axis == kAll || (x.rank() == 1 && axis == 0)) {
    r.out_shape = {};
    r.count = x.size();
    r.group_step = 0;
    return r;
  }
  if (x.rank() != 2 || (axis != 0 && axis != 1)) shape_error(what, x);
  if (axis == 0) {  // over rows, one output per column
    r.out_shape = {x.cols()};
    r.groups = x.cols();
    r.count = x.rows();
    r.stride = x.cols();
    r.group_step = 1;
  } else {  // over columns, one output per row
    r.out_shape = {x.rows()};
    r.groups = x.rows();
    r.count = x.cols();
    r.stride = 1;
    r.group_step = x.cols();
  }
  return r;
}

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

void check_binary(std::string_view what, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() && !is_scalar(b)) shape_error(what, a, b);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor transpose_of(const Tensor& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

// Rank-2 view of a tri_solve right-hand side.
std::size_t rhs_cols(const Tensor& b) { return b.rank() == 1 ? 1 : b.cols(); }

}  // namespace

std::string_view op_name(Op op) noexcept {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Variable: return "variable";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::AddRow: return "add_row";
    case Op::Transpose: return "transpose";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Softmax: return "softmax";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::AddScalar: return "add_scalar";
    case Op::MulScalar: return "mul_scalar";
    case Op::PowScalar: return "pow_scalar";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Abs: return "abs";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Max: return "max";
    case Op::Median: return "median";
    case Op::Concat: return "concat";
    case Op::Dropout: return "dropout";
    case Op::FrobeniusNorm: return "frobenius_norm";
    case Op::QuadForm: return "quad_form";
    case Op::TriSolve: return "tri_solve";
    case Op::CholFactor: return "chol_factor";
    case Op::GaussianLogPdf: return "gaussian_logpdf";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

void Graph::set_check_finite(bool on) noexcept { g_check_finite.store(on, std::memory_order_relaxed); }
bool Graph::check_finite() noexcept { return g_check_finite.load(std::memory_order_relaxed); }

NodeId Graph::push(Node node) {
  const NodeId id = nodes_.size();
  for (NodeId in : node.inputs)
    if (in >= id) throw ContractViolation("node input " + std::to_string(in) + " does not exist");
  nodes_.push_back(std::move(node));
  evaluate(nodes_.back());
  return id;
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::variable(Tensor value) {
  Node n;
  n.op = Op::Variable;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::param(Parameter& p) {
  Node n;
  n.op = Op::Param;
  n.value = p.value;
  n.param = &p;
  if (p.grad.shape() != p.value.shape()) p.zero_grad();
  return push(std::move(n));
}

std::vector<NodeId> Graph::trainable_nodes() const {
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].op == Op::Param || nodes_[i].op == Op::Variable) ids.push_back(i);
  return ids;
}

void Graph::set_value(NodeId leaf, Tensor value) {
  Node& n = nodes_.at(leaf);
  if (n.op != Op::Constant && n.op != Op::Variable && n.op != Op::Param)
    throw ContractViolation("set_value on non-leaf node " + std::to_string(leaf));
  if (n.value.shape() != value.shape()) shape_error("set_value", n.value, value);
  n.value = std::move(value);
}

#define GMQ_UNARY(name, tag)            \
  NodeId Graph::name(NodeId a) {        \
    Node n;                             \
    n.op = Op::tag;                     \
    n.inputs = {a};                     \
    return push(std::move(n));          \
  }
GMQ_UNARY(transpose, Transpose)
GMQ_UNARY(sigmoid, Sigmoid)
GMQ_UNARY(relu, Relu)
GMQ_UNARY(softmax, Softmax)
GMQ_UNARY(exp, Exp)
GMQ_UNARY(log, Log)
GMQ_UNARY(sqrt, Sqrt)
GMQ_UNARY(abs, Abs)
GMQ_UNARY(frobenius_norm, FrobeniusNorm)
GMQ_UNARY(chol_factor, CholFactor)
#undef GMQ_UNARY

#define GMQ_BINARY(name, tag)               \
  NodeId Graph::name(NodeId a, NodeId b) {  \
    Node n;                                 \
    n.op = Op::tag;                         \
    n.inputs = {a, b};                      \
    return push(std::move(n));              \
  }
GMQ_BINARY(matmul, MatMul)
GMQ_BINARY(add_row, AddRow)
GMQ_BINARY(add, Add)
GMQ_BINARY(sub, Sub)
GMQ_BINARY(mul, Mul)
GMQ_BINARY(div, Div)
GMQ_BINARY(quad_form, QuadForm)
GMQ_BINARY(tri_solve, TriSolve)
#undef GMQ_BINARY

#define GMQ_SCALAR(name, tag)                 \
  NodeId Graph::name(NodeId a, double c) {    \
    Node n;                                   \
    n.op = Op::tag;                           \
    n.inputs = {a};                           \
    n.scalar = c;                             \
    return push(std::move(n));                \
  }
GMQ_SCALAR(add_scalar, AddScalar)
GMQ_SCALAR(mul_scalar, MulScalar)
GMQ_SCALAR(pow_scalar, PowScalar)
#undef GMQ_SCALAR

#define GMQ_REDUCE(name, tag)               \
  NodeId Graph::name(NodeId a, int axis) {  \
    Node n;                                 \
    n.op = Op::tag;                         \
    n.inputs = {a};                         \
    n.axis = axis;                          \
    return push(std::move(n));              \
  }
GMQ_REDUCE(sum, Sum)
GMQ_REDUCE(mean, Mean)
GMQ_REDUCE(max, Max)
GMQ_REDUCE(median, Median)
#undef GMQ_REDUCE

NodeId Graph::gaussian_logpdf(NodeId z, NodeId means, NodeId factors) {
  Node n;
  n.op = Op::GaussianLogPdf;
  n.inputs = {z, means, factors};
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, Shape shape) {
  Node n;
  n.op = Op::Reshape;
  n.inputs = {a};
  n.target = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts, int axis) {
  if (parts.empty()) throw ContractViolation("concat: no inputs");
  Node n;
  n.op = Op::Concat;
  n.inputs = parts;
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::dropout(NodeId a, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ContractViolation("dropout: rate must be in [0,1)");
  Node n;
  n.op = Op::Dropout;
  n.inputs = {a};
  n.scalar = rate;
  const Tensor& x = nodes_.at(a).value;
  n.aux = Tensor(x.shape(), 1.0);
  if (training_ && rate > 0.0) {
    if (!rng_) throw ContractViolation("dropout: training graph has no rng");
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < n.aux.size(); ++i) n.aux[i] = rng_->uniform() < keep ? 1.0 / keep : 0.0;
  }
  return push(std::move(n));
}

void Graph::evaluate(Node& node) {
  switch (node.op) {
    case Op::Constant:
    case Op::Variable:
    case Op::Param:
      return;  // leaves are not checked; inputs may legitimately be anything finite or not yet used
    case Op::MatMul: {
      const Tensor& a = in(node, 0);
      const Tensor& b = in(node, 1);
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
      node.value = kernels::active::matmul(a, b);
      break;
    }
    case Op::AddRow: {
      const Tensor& x = in(node, 0);
      const Tensor& b = in(node, 1);
      if (x.rank() != 2 || b.rank() != 1 || b.size() != x.cols()) shape_error("add_row", x, b);
      node.value = x;
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) node.value(r, c) += b[c];
      break;
    }
    case Op::Transpose: {
      const Tensor& a = in(node, 0);
      if (a.rank() != 2) shape_error("transpose", a);
      node.value = transpose_of(a);
      break;
    }
    case Op::Sigmoid: {
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      break;
    }
    case Op::Relu: {
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v = v > 0.0 ? v : 0.0;
      break;
    }
    case Op::Softmax: {
      const Tensor& x = in(node, 0);
      if (x.rank() != 1 && x.rank() != 2) shape_error("softmax", x);
      node.value = x;
      const std::size_t width = x.rank() == 1 ? x.size() : x.cols();
      const std::size_t rows = width ? x.size() / width : 0;
      for (std::size_t r = 0; r < rows; ++r) {
        double* row = node.value.data().data() + r * width;
        const double mx = *std::max_element(row, row + width);
        double s = 0.0;
        for (std::size_t c = 0; c < width; ++c) s += (row[c] = std::exp(row[c] - mx));
        for (std::size_t c = 0; c < width; ++c) row[c] /= s;
      }
      break;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const Tensor& a = in(node, 0);
      const Tensor& b = in(node, 1);
      check_binary(op_name(node.op), a, b);
      node.value = a;
      const bool bs = is_scalar(b) && a.shape() != b.shape();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double bv = bs ? b[0] : b[i];
        double& v = node.value[i];
        switch (node.op) {
          case Op::Add: v += bv; break;
          case Op::Sub: v -= bv; break;
          case Op::Mul: v *= bv; break;
          default: v /= bv; break;
        }
      }
      break;
    }
    case Op::AddScalar:
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v += node.scalar;
      break;
    case Op::MulScalar:
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v *= node.scalar;
      break;
    case Op::PowScalar:
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v = std::pow(v, node.scalar);
      break;
    case Op::Exp:
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v = std::exp(v);
      break;
    case Op::Log:
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v = std::log(v);
      break;
    case Op::Sqrt:
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v = std::sqrt(v);
      break;
    case Op::Abs:
      node.value = in(node, 0);
      for (double& v : node.value.storage()) v = std::abs(v);
      break;
    case Op::Sum:
    case Op::Mean: {
      const Tensor& x = in(node, 0);
      const Reduction r = reduction_for(x, node.axis, op_name(node.op));
      node.value = Tensor(r.out_shape);
      for (std::size_t g = 0; g < r.groups; ++g) {
        double s = 0.0;
        for (std::size_t j = 0; j < r.count; ++j) s += x[r.offset(g) + j * r.stride];
        node.value[g] = node.op == Op::Mean ? s / static_cast<double>(r.count) : s;
      }
      break;
    }
    case Op::Max:
    case Op::Median: {
      const Tensor& x = in(node, 0);
      const Reduction r = reduction_for(x, node.axis, op_name(node.op));
      if (r.count == 0) throw ContractViolation(std::string(op_name(node.op)) + ": empty reduction");
      node.value = Tensor(r.out_shape);
      node.selected.assign(r.groups, 0);
      std::vector<std::size_t> order(r.count);
      for (std::size_t g = 0; g < r.groups; ++g) {
        std::size_t pick = 0;
        if (node.op == Op::Max) {
          for (std::size_t j = 1; j < r.count; ++j)
            if (x[r.offset(g) + j * r.stride] > x[r.offset(g) + pick * r.stride]) pick = j;
        } else {
          std::iota(order.begin(), order.end(), std::size_t{0});
          std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            return x[r.offset(g) + i * r.stride] < x[r.offset(g) + j * r.stride];
          });
          // Among elements equal to the median value, the lowest index wins.
          const double med = x[r.offset(g) + order[(r.count - 1) / 2] * r.stride];
          pick = 0;
          while (x[r.offset(g) + pick * r.stride] != med) ++pick;
        }
        node.selected[g] = r.offset(g) + pick * r.stride;
        node.value[g] = x[node.selected[g]];
      }
      break;
    }
    case Op::Concat: {
      const Tensor& first = in(node, 0);
      if (first.rank() == 1 || (first.rank() == 0 && node.axis <= 0)) {
        std::vector<double> data;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const Tensor& p = in(node, k);
          if (p.rank() > 1) shape_error("concat", first, p);
          data.insert(data.end(), p.storage().begin(), p.storage().end());
        }
        node.value = Tensor::vector(std::move(data));
      } else if (first.rank() == 2 && (node.axis == 0 || node.axis == 1)) {
        std::size_t rows = first.rows(), cols = first.cols();
        for (std::size_t k = 1; k < node.inputs.size(); ++k) {
          const Tensor& p = in(node, k);
          if (p.rank() != 2) shape_error("concat", first, p);
          if (node.axis == 0) {
            if (p.cols() != cols) shape_error("concat", first, p);
            rows += p.rows();
          } else {
            if (p.rows() != rows) shape_error("concat", first, p);
            cols += p.cols();
          }
        }
        node.value = Tensor({rows, cols});
        std::size_t off = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const Tensor& p = in(node, k);
          for (std::size_t r = 0; r < p.rows(); ++r)
            for (std::size_t c = 0; c < p.cols(); ++c) {
              if (node.axis == 0)
                node.value(off + r, c) = p(r, c);
              else
                node.value(r, off + c) = p(r, c);
            }
          off += node.axis == 0 ? p.rows() : p.cols();
        }
      } else {
        shape_error("concat", first);
      }
      break;
    }
    case Op::Dropout:
      node.value = in(node, 0);
      for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] *= node.aux[i];
      break;
    case Op::FrobeniusNorm: {
      const Tensor& x = in(node, 0);
      double s = 0.0;
      for (double v : x.storage()) s += v * v;
      node.value = Tensor::scalar(std::sqrt(s));
      break;
    }
    case Op::QuadForm: {
      const Tensor& u = in(node, 0);
      const Tensor& m = in(node, 1);
      if (u.rank() != 2 || m.rank() != 2 || m.rows() != u.cols() || m.cols() != u.cols())
        shape_error("quad_form", u, m);
      const std::size_t d = u.cols();
      node.value = Tensor({u.rows()});
      for (std::size_t i = 0; i < u.rows(); ++i) {
        double s = 0.0;
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) s += u(i, a) * m(a, b) * u(i, b);
        node.value[i] = s;
      }
      break;
    }
    case Op::TriSolve: {
      const Tensor& l = in(node, 0);
      const Tensor& b = in(node, 1);
      if (l.rank() != 2 || l.rows() != l.cols() || (b.rank() != 1 && b.rank() != 2) || b.dim(0) != l.rows())
        shape_error("tri_solve", l, b);
      const std::size_t d = l.rows(), k = rhs_cols(b);
      node.value = Tensor(b.shape());
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t r = 0; r < d; ++r) {
          double acc = b[r * k + j];
          for (std::size_t c = 0; c < r; ++c) acc -= l(r, c) * node.value[c * k + j];
          node.value[r * k + j] = acc / l(r, r);
        }
      break;
    }
    case Op::CholFactor: {
      const Tensor& raw = in(node, 0);
      if ((raw.rank() != 2 && raw.rank() != 3) || raw.dim(raw.rank() - 1) != raw.dim(raw.rank() - 2))
        shape_error("chol_factor", raw);
      const std::size_t d = raw.dim(raw.rank() - 1);
      node.value = Tensor(raw.shape());
      for (std::size_t base = 0; base < raw.size(); base += d * d)
        for (std::size_t r = 0; r < d; ++r) {
          for (std::size_t c = 0; c < r; ++c) node.value[base + r * d + c] = raw[base + r * d + c];
          node.value[base + r * d + r] = std::exp(raw[base + r * d + r]);
        }
      break;
    }
    case Op::Reshape: {
      const Tensor& a = in(node, 0);
      if (shape_size(node.target) != a.size())
        throw ContractViolation("reshape: shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(node.target));
      node.value = a.reshaped(node.target);
      break;
    }
    case Op::GaussianLogPdf: {
      auto fwd = kernels::active::gaussian_logpdf(in(node, 0), in(node, 1), in(node, 2));
      node.value = std::move(fwd.logp);
      node.aux = std::move(fwd.solved);
      if (check_finite())
        for (std::size_t i = 0; i < node.value.size(); ++i)
          if (!std::isfinite(node.value[i]))
            throw NumericError("gaussian_logpdf: non-finite log-likelihood for Gaussian " +
                               std::to_string(i % node.value.cols()));
      break;
    }
  }
  if (check_finite() && !node.value.all_finite()) {
    const auto id = static_cast<std::size_t>(&node - nodes_.data());
    throw NumericError("non-finite value produced by " + std::string(op_name(node.op)) + " at node " +
                       std::to_string(id));
  }
}

const Tensor& Graph::forward() {
  if (nodes_.empty()) throw ContractViolation("forward on empty graph");
  for (auto& n : nodes_) {
    if (n.op == Op::Param && n.param) n.value = n.param->value;
    evaluate(n);
  }
  return nodes_.back().value;
}

void Graph::backward(NodeId root) {
  if (root >= nodes_.size()) throw ContractViolation("backward: unknown root node");
  if (nodes_[root].value.size() != 1)
    throw ContractViolation("backward: root must be scalar, got shape " +
                            shape_string(nodes_[root].value.shape()));
  for (NodeId i = 0; i <= root; ++i) nodes_[i].grad = Tensor(nodes_[i].value.shape());
  nodes_[root].grad[0] = 1.0;
  for (NodeId i = root + 1; i-- > 0;) propagate(nodes_[i]);
  for (NodeId i = 0; i <= root; ++i)
    if (nodes_[i].op == Op::Param && nodes_[i].param) add_into(nodes_[i].param->grad, nodes_[i].grad);
}

void Graph::propagate(Node& node) {
  const Tensor& g = node.grad;
  switch (node.op) {
    case Op::Constant:
    case Op::Variable:
    case Op::Param:
      return;
    case Op::MatMul: {
      add_into(in_grad(node, 0), kernels::active::matmul_nt(g, in(node, 1)));
      add_into(in_grad(node, 1), kernels::active::matmul_tn(in(node, 0), g));
      break;
    }
    case Op::AddRow: {
      add_into(in_grad(node, 0), g);
      Tensor& gb = in_grad(node, 1);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      break;
    }
    case Op::Transpose:
      add_into(in_grad(node, 0), transpose_of(g));
      break;
    case Op::Sigmoid: {
      Tensor& gx = in_grad(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node.value[i] * (1.0 - node.value[i]);
      break;
    }
    case Op::Relu: {
      Tensor& gx = in_grad(node, 0);
      const Tensor& x = in(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x[i] > 0.0 ? g[i] : 0.0;
      break;
    }
    case Op::Softmax: {
      Tensor& gx = in_grad(node, 0);
      const Tensor& y = node.value;
      const std::size_t width = y.rank() == 1 ? y.size() : y.cols();
      const std::size_t rows = width ? y.size() / width : 0;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * width;
        double dot = 0.0;
        for (std::size_t c = 0; c < width; ++c) dot += g[o + c] * y[o + c];
        for (std::size_t c = 0; c < width; ++c) gx[o + c] += y[o + c] * (g[o + c] - dot);
      }
      break;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const Tensor& a = in(node, 0);
      const Tensor& b = in(node, 1);
      const bool bs = is_scalar(b) && a.shape() != b.shape();
      Tensor& ga = in_grad(node, 0);
      Tensor& gb = in_grad(node, 1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double bv = bs ? b[0] : b[i];
        double& gbi = bs ? gb[0] : gb[i];
        switch (node.op) {
          case Op::Add: ga[i] += g[i]; gbi += g[i]; break;
          case Op::Sub: ga[i] += g[i]; gbi -= g[i]; break;
          case Op::Mul: ga[i] += g[i] * bv; gbi += g[i] * a[i]; break;
          default: ga[i] += g[i] / bv; gbi -= g[i] * a[i] / (bv * bv); break;
        }
      }
      break;
    }
    case Op::AddScalar:
      add_into(in_grad(node, 0), g);
      break;
    case Op::MulScalar: {
      Tensor& gx = in_grad(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node.scalar;
      break;
    }
    case Op::PowScalar: {
      Tensor& gx = in_grad(node, 0);
      const Tensor& x = in(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * node.scalar * std::pow(x[i], node.scalar - 1.0);
      break;
    }
    case Op::Exp: {
      Tensor& gx = in_grad(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node.value[i];
      break;
    }
    case Op::Log: {
      Tensor& gx = in_grad(node, 0);
      const Tensor& x = in(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x[i];
      break;
    }
    case Op::Sqrt: {
      Tensor& gx = in_grad(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * 0.5 / node.value[i];
      break;
    }
    case Op::Abs: {
      Tensor& gx = in_grad(node, 0);
      const Tensor& x = in(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& x = in(node, 0);
      Tensor& gx = in_grad(node, 0);
      const Reduction r = reduction_for(x, node.axis, op_name(node.op));
      const double scale = node.op == Op::Mean ? 1.0 / static_cast<double>(r.count) : 1.0;
      for (std::size_t gi = 0; gi < r.groups; ++gi)
        for (std::size_t j = 0; j < r.count; ++j) gx[r.offset(gi) + j * r.stride] += g[gi] * scale;
      break;
    }
    case Op::Max:
    case Op::Median: {
      Tensor& gx = in_grad(node, 0);
      for (std::size_t gi = 0; gi < node.selected.size(); ++gi) gx[node.selected[gi]] += g[gi];
      break;
    }
    case Op::Concat: {
      if (node.value.rank() == 1) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          Tensor& gp = in_grad(node, k);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
          off += gp.size();
        }
      } else {
        std::size_t off = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          Tensor& gp = in_grad(node, k);
          for (std::size_t r = 0; r < gp.rows(); ++r)
            for (std::size_t c = 0; c < gp.cols(); ++c)
              gp(r, c) += node.axis == 0 ? g(off + r, c) : g(r, off + c);
          off += node.axis == 0 ? gp.rows() : gp.cols();
        }
      }
      break;
    }
    case Op::Dropout: {
      Tensor& gx = in_grad(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node.aux[i];
      break;
    }
    case Op::FrobeniusNorm: {
      const double norm = node.value[0];
      if (norm == 0.0) break;
      Tensor& gx = in_grad(node, 0);
      const Tensor& x = in(node, 0);
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0] * x[i] / norm;
      break;
    }
    case Op::QuadForm: {
      const Tensor& u = in(node, 0);
      const Tensor& m = in(node, 1);
      Tensor& gu = in_grad(node, 0);
      Tensor& gm = in_grad(node, 1);
      const std::size_t d = u.cols();
      for (std::size_t i = 0; i < u.rows(); ++i)
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) {
            gu(i, a) += g[i] * (m(a, b) + m(b, a)) * u(i, b);
            gm(a, b) += g[i] * u(i, a) * u(i, b);
          }
      break;
    }
    case Op::TriSolve: {
      // X = L^{-1} B:  dB = L^{-T} G,  dL = -tril(dB X^T).
      const Tensor& l = in(node, 0);
      const Tensor& x = node.value;
      const std::size_t d = l.rows(), k = rhs_cols(x);
      Tensor db(x.shape());
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t r = d; r-- > 0;) {
          double acc = g[r * k + j];
          for (std::size_t c = r + 1; c < d; ++c) acc -= l(c, r) * db[c * k + j];
          db[r * k + j] = acc / l(r, r);
        }
      add_into(in_grad(node, 1), db);
      Tensor& gl = in_grad(node, 0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c <= r; ++c) {
          double s = 0.0;
          for (std::size_t j = 0; j < k; ++j) s += db[r * k + j] * x[c * k + j];
          gl(r, c) -= s;
        }
      break;
    }
    case Op::CholFactor: {
      Tensor& graw = in_grad(node, 0);
      const std::size_t d = node.value.dim(node.value.rank() - 1);
      for (std::size_t base = 0; base < g.size(); base += d * d)
        for (std::size_t r = 0; r < d; ++r) {
          for (std::size_t c = 0; c < r; ++c) graw[base + r * d + c] += g[base + r * d + c];
          graw[base + r * d + r] += g[base + r * d + r] * node.value[base + r * d + r];
        }
      break;
    }
    case Op::Reshape: {
      Tensor& ga = in_grad(node, 0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }
    case Op::GaussianLogPdf: {
      auto grads = kernels::active::gaussian_logpdf_backward(g, in(node, 0), in(node, 1), in(node, 2), node.aux);
      add_into(in_grad(node, 0), grads.d_z);
      add_into(in_grad(node, 1), grads.d_means);
      add_into(in_grad(node, 2), grads.d_chol);
      break;
    }
  }
}

}  // namespace gmq
