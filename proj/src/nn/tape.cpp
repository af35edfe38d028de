#include "ufm/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "ufm/error.hpp"

namespace ufm::nn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMajor>;
using MMap = Eigen::Map<RowMajor>;

CMap cmap(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
MMap mmap(std::vector<double>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ValidationError(std::string(op) + ": " + what);
}

std::string dims(const Var& v) {
  return "(" + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + ")";
}

void same_shape(const char* op, Var a, Var b) {
  require(a.tape == b.tape, op, "operands live on different tapes");
  require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          "shape mismatch " + dims(a) + " vs " + dims(b));
}

// Elementwise unary op whose derivative is expressed through the output y.
template <class F, class DF>
Var unary(Var a, const char* op, F f, DF dfdy) {
  Tape& t = *a.tape;
  const auto& x = t.node(a.id).value;
  std::vector<double> y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), f);
  const int ai = a.id;
  Var out = t.push(a.rows(), a.cols(), std::move(y), op);
  const int oi = out.id;
  if (t.records_gradients()) t.node(oi).backward = [ai, oi, dfdy](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    const auto& yv = tp.node(oi).value;
    const auto& xv = tp.node(ai).value;
    auto& ga = tp.grad_of(ai);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * dfdy(xv[i], yv[i]);
  };
  return out;
}

}  // namespace

std::size_t Var::rows() const { return tape->node(id).rows; }
std::size_t Var::cols() const { return tape->node(id).cols; }
std::span<const double> Var::value() const { return tape->node(id).value; }
std::span<const double> Var::grad() const { return tape->node(id).grad; }
double Var::item() const {
  if (rows() != 1 || cols() != 1) throw ValidationError("item() on non-scalar node " + std::to_string(id));
  return value()[0];
}

Tape::Tape(ParamStore& store) : store_(&store), mutable_store_(&store) {}
Tape::Tape(const ParamStore& store) : store_(&store), mutable_store_(nullptr) {}

std::vector<double>& Tape::grad_of(int id) {
  auto& n = node(id);
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Var Tape::push(std::size_t rows, std::size_t cols, std::vector<double> value, const char* op,
               std::function<void(Tape&)> backward) {
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite value produced by ") + op);
    }
  }
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  if (records_gradients()) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return {this, it->second};
  const Tensor& t = store_->at(name);
  Var v = push(t.rows(), t.cols(), std::vector<double>(t.data().begin(), t.data().end()), "param");
  node(v.id).param_name = name;
  param_ids_.emplace(name, v.id);
  return v;
}

Var Tape::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols) {
    throw ValidationError("constant: " + std::to_string(values.size()) + " values for shape (" +
                          std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  return push(rows, cols, std::move(values), "constant");
}

void Tape::backward(Var out) {
  if (!records_gradients()) throw ValidationError("backward() on a forward-only tape");
  if (out.tape != this || out.rows() != 1 || out.cols() != 1) {
    throw ValidationError("backward() needs a 1x1 node from this tape");
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_of(out.id)[0] = 1.0;
  for (int i = out.id; i >= 0; --i) {
    auto& n = node(i);
    if (n.grad.empty()) continue;
    for (double g : n.grad) {
      if (!std::isfinite(g)) {
        std::ostringstream os;
        os << "non-finite gradient at tape node " << i;
        if (!n.param_name.empty()) os << " (parameter " << n.param_name << ")";
        throw NumericalError(os.str());
      }
    }
    if (n.backward) n.backward(*this);
  }
  for (const auto& [name, id] : param_ids_) {
    const auto& n = node(id);
    Tensor& t = mutable_store_->at(name);
    if (!t.has_grad() || t.grad().size() != t.size()) t.zero_grad();
    if (n.grad.empty()) continue;
    auto g = t.grad();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
  }
}

Var matmul(Var a, Var b) {
  require(a.tape == b.tape, "matmul", "operands live on different tapes");
  require(a.cols() == b.rows(), "matmul", "inner dimension mismatch " + dims(a) + " x " + dims(b));
  Tape& t = *a.tape;
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(n * m);
  mmap(out, n, m).noalias() = cmap(t.node(a.id).value, n, k) * cmap(t.node(b.id).value, k, m);
  const int ai = a.id, bi = b.id;
  Var o = t.push(n, m, std::move(out), "matmul");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto go = cmap(tp.node(oi).grad, n, m);
    mmap(tp.grad_of(ai), n, k).noalias() += go * cmap(tp.node(bi).value, k, m).transpose();
    mmap(tp.grad_of(bi), k, m).noalias() += cmap(tp.node(ai).value, n, k).transpose() * go;
  };
  return o;
}

Var add_bias(Var a, Var bias) {
  require(a.tape == bias.tape, "add_bias", "operands live on different tapes");
  require(bias.rows() == 1 && bias.cols() == a.cols(), "add_bias",
          "bias " + dims(bias) + " does not broadcast over " + dims(a));
  Tape& t = *a.tape;
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(t.node(a.id).value);
  const auto& b = t.node(bias.id).value;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += b[j];
  }
  const int ai = a.id, bi = bias.id;
  Var o = t.push(n, m, std::move(out), "add_bias");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    auto& ga = tp.grad_of(ai);
    auto& gb = tp.grad_of(bi);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        ga[i * m + j] += go[i * m + j];
        gb[j] += go[i * m + j];
      }
    }
  };
  return o;
}

Var add(Var a, Var b) {
  same_shape("add", a, b);
  Tape& t = *a.tape;
  std::vector<double> out(t.node(a.id).value);
  const auto& bv = t.node(b.id).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ai = a.id, bi = b.id;
  Var o = t.push(a.rows(), a.cols(), std::move(out), "add");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    auto& ga = tp.grad_of(ai);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    auto& gb = tp.grad_of(bi);
    for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
  };
  return o;
}

Var sub(Var a, Var b) {
  same_shape("sub", a, b);
  Tape& t = *a.tape;
  std::vector<double> out(t.node(a.id).value);
  const auto& bv = t.node(b.id).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ai = a.id, bi = b.id;
  Var o = t.push(a.rows(), a.cols(), std::move(out), "sub");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    auto& ga = tp.grad_of(ai);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    auto& gb = tp.grad_of(bi);
    for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
  };
  return o;
}

Var mul(Var a, Var b) {
  same_shape("mul", a, b);
  Tape& t = *a.tape;
  std::vector<double> out(t.node(a.id).value);
  const auto& bv = t.node(b.id).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ai = a.id, bi = b.id;
  Var o = t.push(a.rows(), a.cols(), std::move(out), "mul");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    {
      auto& ga = tp.grad_of(ai);
      const auto& bv2 = tp.node(bi).value;
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
    }
    {
      auto& gb = tp.grad_of(bi);
      const auto& av = tp.node(ai).value;
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
    }
  };
  return o;
}

Var affine(Var a, double scale, double shift) {
  Tape& t = *a.tape;
  std::vector<double> out(t.node(a.id).value);
  for (double& v : out) v = scale * v + shift;
  const int ai = a.id;
  Var o = t.push(a.rows(), a.cols(), std::move(out), "affine");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    auto& ga = tp.grad_of(ai);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += scale * go[i];
  };
  return o;
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var silu(Var a) {
  return unary(
      a, "silu", [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.tape == &t, "concat_cols", "operands live on different tapes");
    require(p.rows() == n, "concat_cols", "row mismatch " + dims(parts[0]) + " vs " + dims(p));
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const auto& v = t.node(p.id).value;
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + off));
    }
    ids.push_back(p.id);
    widths.push_back(w);
    off += w;
  }
  Var o = t.push(n, total, std::move(out), "concat_cols");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      auto& g = tp.grad_of(ids[p]);
      const std::size_t w = widths[p];
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) g[i * w + j] += go[i * total + offset + j];
      }
      offset += w;
    }
  };
  return o;
}

Var gather_rows(Var table, std::span<const int> rows) {
  Tape& t = *table.tape;
  const std::size_t r = table.rows(), w = table.cols();
  std::vector<double> out(rows.size() * w);
  const auto& tv = t.node(table.id).value;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && static_cast<std::size_t>(rows[i]) < r, "gather_rows",
            "row index " + std::to_string(rows[i]) + " outside table of " + std::to_string(r) +
                " rows");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(rows[i] * static_cast<int>(w)), w,
                out.begin() + static_cast<std::ptrdiff_t>(i * w));
  }
  const int ti = table.id;
  std::vector<int> idx(rows.begin(), rows.end());
  Var o = t.push(rows.size(), w, std::move(out), "gather_rows");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    auto& g = tp.grad_of(ti);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t base = static_cast<std::size_t>(idx[i]) * w;
      for (std::size_t j = 0; j < w; ++j) g[base + j] += go[i * w + j];
    }
  };
  return o;
}

Var scale_rows(Var a, std::span<const double> row_scale) {
  require(row_scale.size() == a.rows(), "scale_rows",
          std::to_string(row_scale.size()) + " scales for " + dims(a));
  Tape& t = *a.tape;
  const std::size_t n = a.rows(), m = a.cols();
  std::vector<double> out(t.node(a.id).value);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] *= row_scale[i];
  }
  const int ai = a.id;
  std::vector<double> s(row_scale.begin(), row_scale.end());
  Var o = t.push(n, m, std::move(out), "scale_rows");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const auto& go = tp.node(oi).grad;
    auto& ga = tp.grad_of(ai);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += go[i * m + j] * s[i];
    }
  };
  return o;
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double v : t.node(a.id).value) s += v;
  const int ai = a.id;
  Var o = t.push(1, 1, {s}, "sum");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const double go = tp.node(oi).grad[0];
    for (double& g : tp.grad_of(ai)) g += go;
  };
  return o;
}

Var mean_squared_error(Var a, std::span<const double> target) {
  Tape& t = *a.tape;
  const auto& av = t.node(a.id).value;
  require(target.size() == av.size() && !av.empty(), "mean_squared_error",
          std::to_string(target.size()) + " targets for " + dims(a));
  const double n = static_cast<double>(av.size());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - target[i];
    s += d * d;
  }
  const int ai = a.id;
  std::vector<double> tgt(target.begin(), target.end());
  Var o = t.push(1, 1, {s / n}, "mean_squared_error");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=](Tape& tp) {
    const double go = tp.node(oi).grad[0];
    const auto& x = tp.node(ai).value;
    auto& ga = tp.grad_of(ai);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += go * 2.0 * (x[i] - tgt[i]) / n;
  };
  return o;
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = *logits.tape;
  const std::size_t n = logits.rows(), m = logits.cols();
  require(labels.size() == n && n > 0, "cross_entropy",
          std::to_string(labels.size()) + " labels for " + dims(logits));
  const auto& z = t.node(logits.id).value;
  std::vector<double> probs(n * m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < m, "cross_entropy",
            "label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(m) + ")");
    const double* row = z.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double se = 0.0;
    for (std::size_t j = 0; j < m; ++j) se += std::exp(row[j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < m; ++j) probs[i * m + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  const int li = logits.id;
  std::vector<int> lab(labels.begin(), labels.end());
  Var o = t.push(1, 1, {total / static_cast<double>(n)}, "cross_entropy");
  const int oi = o.id;
  if (t.records_gradients()) t.node(oi).backward = [=, probs = std::move(probs)](Tape& tp) {
    const double go = tp.node(oi).grad[0] / static_cast<double>(n);
    auto& g = tp.grad_of(li);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double target = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
        g[i * m + j] += go * (probs[i * m + j] - target);
      }
    }
  };
  return o;
}

}  // namespace ufm::nn
