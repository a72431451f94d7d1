#include "suprim/diffcore.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "suprim/errors.hpp"

namespace suprim::dc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

MapC cm(const Array2& a) { return MapC(a.data.data(), static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols)); }
MapM mm(Array2& a) { return MapM(a.data.data(), static_cast<Eigen::Index>(a.rows), static_cast<Eigen::Index>(a.cols)); }

std::string shape(const Array2& a) { return std::to_string(a.rows) + "x" + std::to_string(a.cols); }

void require(bool ok, const char* op, const Array2& a, const Array2& b) {
  if (!ok) throw ShapeMismatch(std::string(op) + ": incompatible shapes " + shape(a) + " and " + shape(b));
}

}  // namespace

Array2::Array2(std::size_t r, std::size_t c, std::span<const double> values)
    : rows(r), cols(c), data(values.begin(), values.end()) {
  if (data.size() != r * c) throw ShapeMismatch("Array2: data length does not match shape");
}

Array2 Array2::row(std::span<const double> values) {
  return Array2(1, values.size(), values);
}

bool Array2::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

ParamId ParamStore::add(const std::string& name, Array2 init) {
  if (index_.count(name) != 0) throw InvalidArgument("duplicate parameter name '" + name + "'");
  const ParamId id = values_.size();
  names_.push_back(name);
  grads_.emplace_back(init.rows, init.cols, 0.0);
  values_.push_back(std::move(init));
  index_[name] = id;
  return id;
}

ParamId ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), 0.0);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!values_[i].same_shape(other.values_[i])) return false;
  }
  return true;
}

bool ParamStore::grads_finite() const {
  return std::all_of(grads_.begin(), grads_.end(), [](const Array2& g) { return g.all_finite(); });
}

bool ParamStore::values_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](const Array2& v) { return v.all_finite(); });
}

// ---------------------------------------------------------------------------

Var Tape::push(Array2 value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Array2& Tape::g(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) n.grad = Array2(n.value.rows, n.value.cols, 0.0);
  return n.grad;
}

const Array2& Tape::grad(Var v) { return g(v.id); }

bool Tape::any_grad(std::initializer_list<Var> vs) const {
  if (!record_) return false;
  return std::any_of(vs.begin(), vs.end(), [&](Var v) { return nodes_[v.id].requires_grad; });
}

Var Tape::constant(Array2 value) { return push(std::move(value), false); }

Var Tape::param(ParamStore& store, ParamId id) {
  const Var out = push(store.value(id), true);
  if (record_) {
    const std::size_t o = out.id;
    nodes_[o].backward = [this, o, &store, id] {
      const Array2& gr = nodes_[o].grad;
      if (!gr.all_finite()) throw NonFiniteDetected("non-finite gradient for parameter '" + store.name(id) + "'");
      mm(store.grad(id)) += cm(gr);
    };
  }
  return out;
}

Var Tape::matmul(Var a, Var b) {
  const Array2& A = value(a);
  const Array2& B = value(b);
  require(A.cols == B.rows, "matmul", A, B);
  Array2 C(A.rows, B.cols);
  mm(C).noalias() = cm(A) * cm(B);
  const Var out = push(std::move(C), any_grad({a, b}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, o = out.id] {
      const auto dC = cm(nodes_[o].grad);
      if (nodes_[a.id].requires_grad) mm(g(a.id)).noalias() += dC * cm(nodes_[b.id].value).transpose();
      if (nodes_[b.id].requires_grad) mm(g(b.id)).noalias() += cm(nodes_[a.id].value).transpose() * dC;
    };
  }
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  const Array2& A = value(a);
  const Array2& B = value(b);
  require(A.cols == B.cols, "matmul_nt", A, B);
  Array2 C(A.rows, B.rows);
  mm(C).noalias() = cm(A) * cm(B).transpose();
  const Var out = push(std::move(C), any_grad({a, b}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, o = out.id] {
      const auto dC = cm(nodes_[o].grad);
      if (nodes_[a.id].requires_grad) mm(g(a.id)).noalias() += dC * cm(nodes_[b.id].value);
      if (nodes_[b.id].requires_grad) mm(g(b.id)).noalias() += dC.transpose() * cm(nodes_[a.id].value);
    };
  }
  return out;
}

Var Tape::add(Var a, Var b) {
  const Array2& A = value(a);
  const Array2& B = value(b);
  require(A.same_shape(B), "add", A, B);
  Array2 C = A;
  mm(C) += cm(B);
  const Var out = push(std::move(C), any_grad({a, b}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, o = out.id] {
      const auto dC = cm(nodes_[o].grad);
      if (nodes_[a.id].requires_grad) mm(g(a.id)) += dC;
      if (nodes_[b.id].requires_grad) mm(g(b.id)) += dC;
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  const Array2& A = value(a);
  const Array2& B = value(b);
  require(A.same_shape(B), "sub", A, B);
  Array2 C = A;
  mm(C) -= cm(B);
  const Var out = push(std::move(C), any_grad({a, b}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, o = out.id] {
      const auto dC = cm(nodes_[o].grad);
      if (nodes_[a.id].requires_grad) mm(g(a.id)) += dC;
      if (nodes_[b.id].requires_grad) mm(g(b.id)) -= dC;
    };
  }
  return out;
}

Var Tape::mul(Var a, Var b) {
  const Array2& A = value(a);
  const Array2& B = value(b);
  require(A.same_shape(B), "mul", A, B);
  Array2 C(A.rows, A.cols);
  mm(C) = cm(A).cwiseProduct(cm(B));
  const Var out = push(std::move(C), any_grad({a, b}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, b, o = out.id] {
      const auto dC = cm(nodes_[o].grad);
      if (nodes_[a.id].requires_grad) mm(g(a.id)) += dC.cwiseProduct(cm(nodes_[b.id].value));
      if (nodes_[b.id].requires_grad) mm(g(b.id)) += dC.cwiseProduct(cm(nodes_[a.id].value));
    };
  }
  return out;
}

Var Tape::add_bias(Var a, Var bias) {
  const Array2& A = value(a);
  const Array2& B = value(bias);
  require(B.rows == 1 && B.cols == A.cols, "add_bias", A, B);
  Array2 C = A;
  mm(C).rowwise() += cm(B).row(0);
  const Var out = push(std::move(C), any_grad({a, bias}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, bias, o = out.id] {
      const auto dC = cm(nodes_[o].grad);
      if (nodes_[a.id].requires_grad) mm(g(a.id)) += dC;
      if (nodes_[bias.id].requires_grad) mm(g(bias.id)).row(0) += dC.colwise().sum();
    };
  }
  return out;
}

Var Tape::scale(Var a, double s) {
  Array2 C = value(a);
  mm(C) *= s;
  const Var out = push(std::move(C), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, s, o = out.id] { mm(g(a.id)) += s * cm(nodes_[o].grad); };
  }
  return out;
}

Var Tape::relu(Var a) {
  Array2 C = value(a);
  for (double& x : C.data) x = x > 0.0 ? x : 0.0;
  const Var out = push(std::move(C), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, o = out.id] {
      const Array2& dC = nodes_[o].grad;
      const Array2& X = nodes_[a.id].value;
      Array2& dA = g(a.id);
      for (std::size_t i = 0; i < dC.size(); ++i) {
        if (X.data[i] > 0.0) dA.data[i] += dC.data[i];
      }
    };
  }
  return out;
}

Var Tape::sigmoid(Var a) {
  Array2 C = value(a);
  for (double& x : C.data) x = 1.0 / (1.0 + std::exp(-x));
  const Var out = push(std::move(C), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, o = out.id] {
      const Array2& dC = nodes_[o].grad;
      const Array2& Y = nodes_[o].value;
      Array2& dA = g(a.id);
      for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += dC.data[i] * Y.data[i] * (1.0 - Y.data[i]);
    };
  }
  return out;
}

namespace {

void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    z += y[j];
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

}  // namespace

Var Tape::softmax_rows(Var a) {
  const Array2& A = value(a);
  Array2 C(A.rows, A.cols);
  for (std::size_t r = 0; r < A.rows; ++r) softmax_row(A.row_ptr(r), C.row_ptr(r), A.cols);
  const Var out = push(std::move(C), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, o = out.id] {
      const Array2& dY = nodes_[o].grad;
      const Array2& Y = nodes_[o].value;
      Array2& dA = g(a.id);
      for (std::size_t r = 0; r < Y.rows; ++r) {
        const double* y = Y.row_ptr(r);
        const double* dy = dY.row_ptr(r);
        double dot = 0.0;
        for (std::size_t j = 0; j < Y.cols; ++j) dot += dy[j] * y[j];
        double* dx = dA.row_ptr(r);
        for (std::size_t j = 0; j < Y.cols; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    };
  }
  return out;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Array2& X = value(x);
  const Array2& G = value(gamma);
  const Array2& B = value(beta);
  require(G.rows == 1 && G.cols == X.cols && B.same_shape(G), "layer_norm", X, G);
  const std::size_t n = X.cols;
  Array2 Y(X.rows, n);
  auto xhat = std::make_shared<Array2>(X.rows, n);
  auto inv_sigma = std::make_shared<std::vector<double>>(X.rows);
  for (std::size_t r = 0; r < X.rows; ++r) {
    const double* xr = X.row_ptr(r);
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    double* h = xhat->row_ptr(r);
    double* y = Y.row_ptr(r);
    for (std::size_t j = 0; j < n; ++j) {
      h[j] = (xr[j] - mu) * is;
      y[j] = h[j] * G.data[j] + B.data[j];
    }
  }
  const Var out = push(std::move(Y), any_grad({x, gamma, beta}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, x, gamma, beta, xhat, inv_sigma, o = out.id] {
      const Array2& dY = nodes_[o].grad;
      const Array2& G = nodes_[gamma.id].value;
      const std::size_t n = dY.cols;
      const bool need_x = nodes_[x.id].requires_grad;
      Array2* dX = need_x ? &g(x.id) : nullptr;
      Array2* dG = nodes_[gamma.id].requires_grad ? &g(gamma.id) : nullptr;
      Array2* dB = nodes_[beta.id].requires_grad ? &g(beta.id) : nullptr;
      std::vector<double> dh(n);
      for (std::size_t r = 0; r < dY.rows; ++r) {
        const double* dy = dY.row_ptr(r);
        const double* h = xhat->row_ptr(r);
        if (dG != nullptr) {
          for (std::size_t j = 0; j < n; ++j) dG->data[j] += dy[j] * h[j];
        }
        if (dB != nullptr) {
          for (std::size_t j = 0; j < n; ++j) dB->data[j] += dy[j];
        }
        if (!need_x) continue;
        double mean_dh = 0.0;
        double mean_dh_h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dh[j] = dy[j] * G.data[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * h[j];
        }
        mean_dh /= static_cast<double>(n);
        mean_dh_h /= static_cast<double>(n);
        double* dx = dX->row_ptr(r);
        const double is = (*inv_sigma)[r];
        for (std::size_t j = 0; j < n; ++j) dx[j] += is * (dh[j] - mean_dh - h[j] * mean_dh_h);
      }
    };
  }
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows;
  std::size_t cols = 0;
  bool rg = false;
  for (Var p : parts) {
    require(value(p).rows == rows, "concat_cols", value(parts[0]), value(p));
    cols += value(p).cols;
    rg = rg || (record_ && nodes_[p.id].requires_grad);
  }
  Array2 C(rows, cols);
  std::size_t c0 = 0;
  for (Var p : parts) {
    const Array2& P = value(p);
    mm(C).middleCols(static_cast<Eigen::Index>(c0), static_cast<Eigen::Index>(P.cols)) = cm(P);
    c0 += P.cols;
  }
  const Var out = push(std::move(C), rg);
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, parts, o = out.id] {
      const auto dC = cm(nodes_[o].grad);
      std::size_t c0 = 0;
      for (Var p : parts) {
        const auto w = static_cast<Eigen::Index>(nodes_[p.id].value.cols);
        if (nodes_[p.id].requires_grad) mm(g(p.id)) += dC.middleCols(static_cast<Eigen::Index>(c0), w);
        c0 += static_cast<std::size_t>(w);
      }
    };
  }
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols;
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    require(value(p).cols == cols, "concat_rows", value(parts[0]), value(p));
    rows += value(p).rows;
    rg = rg || (record_ && nodes_[p.id].requires_grad);
  }
  Array2 C(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    const Array2& P = value(p);
    std::copy(P.data.begin(), P.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += P.size();
  }
  const Var out = push(std::move(C), rg);
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, parts, o = out.id] {
      const Array2& dC = nodes_[o].grad;
      std::size_t off = 0;
      for (Var p : parts) {
        const std::size_t n = nodes_[p.id].value.size();
        if (nodes_[p.id].requires_grad) {
          Array2& dP = g(p.id);
          for (std::size_t i = 0; i < n; ++i) dP.data[i] += dC.data[off + i];
        }
        off += n;
      }
    };
  }
  return out;
}

Var Tape::transpose(Var a) {
  const Array2& A = value(a);
  Array2 C(A.cols, A.rows);
  mm(C) = cm(A).transpose();
  const Var out = push(std::move(C), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, o = out.id] { mm(g(a.id)) += cm(nodes_[o].grad).transpose(); };
  }
  return out;
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Array2& A = value(a);
  if (!(begin < end && end <= A.cols)) throw ShapeMismatch("slice_cols: bad column range");
  Array2 C(A.rows, end - begin);
  mm(C) = cm(A).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  const Var out = push(std::move(C), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, begin, end, o = out.id] {
      mm(g(a.id)).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) +=
          cm(nodes_[o].grad);
    };
  }
  return out;
}

Var Tape::gather_rows(Var a, const std::vector<std::size_t>& rows) {
  const Array2& A = value(a);
  Array2 C(rows.size(), A.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows) throw ShapeMismatch("gather_rows: row index out of range");
    std::copy(A.row_ptr(rows[i]), A.row_ptr(rows[i]) + A.cols, C.row_ptr(i));
  }
  const Var out = push(std::move(C), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, rows, o = out.id] {
      const Array2& dC = nodes_[o].grad;
      Array2& dA = g(a.id);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double* dst = dA.row_ptr(rows[i]);
        const double* src = dC.row_ptr(i);
        for (std::size_t j = 0; j < dC.cols; ++j) dst[j] += src[j];
      }
    };
  }
  return out;
}

Var Tape::sum(Var a) {
  const Array2& A = value(a);
  double s = 0.0;
  for (double v : A.data) s += v;
  const Var out = push(Array2(1, 1, s), any_grad({a}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, a, o = out.id] {
      const double d = nodes_[o].grad.data[0];
      for (double& v : g(a.id).data) v += d;
    };
  }
  return out;
}

Var Tape::mean(Var a) {
  const std::size_t n = value(a).size();
  if (n == 0) throw ShapeMismatch("mean of an empty array");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::attention(Var q, Var k, Var v, std::size_t heads) {
  const Array2& Q = value(q);
  const Array2& K = value(k);
  const Array2& V = value(v);
  require(Q.cols == K.cols && K.same_shape(V), "attention", Q, K);
  if (heads == 0 || Q.cols % heads != 0) throw ShapeMismatch("attention: width not divisible by head count");
  if (K.rows == 0) throw ShapeMismatch("attention: no keys");
  const auto n = static_cast<Eigen::Index>(Q.rows);
  const auto m = static_cast<Eigen::Index>(K.rows);
  const auto dh = static_cast<Eigen::Index>(Q.cols / heads);
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Array2 O(Q.rows, Q.cols);
  auto probs = std::make_shared<std::vector<RowMat>>(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * dh;
    RowMat& P = (*probs)[h];
    P.noalias() = sc * (cm(Q).middleCols(c0, dh) * cm(K).middleCols(c0, dh).transpose());
    for (Eigen::Index r = 0; r < n; ++r) softmax_row(P.row(r).data(), P.row(r).data(), static_cast<std::size_t>(m));
    mm(O).middleCols(c0, dh).noalias() = P * cm(V).middleCols(c0, dh);
  }
  const bool rg = any_grad({q, k, v});
  if (!rg) probs.reset();
  const Var out = push(std::move(O), rg);
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, q, k, v, heads, probs, sc, o = out.id] {
      const auto dO = cm(nodes_[o].grad);
      const auto Qm = cm(nodes_[q.id].value);
      const auto Km = cm(nodes_[k.id].value);
      const auto Vm = cm(nodes_[v.id].value);
      const auto dh = static_cast<Eigen::Index>(Qm.cols() / static_cast<Eigen::Index>(heads));
      const bool gq = nodes_[q.id].requires_grad;
      const bool gk = nodes_[k.id].requires_grad;
      const bool gv = nodes_[v.id].requires_grad;
      RowMat dP;
      for (std::size_t h = 0; h < heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h) * dh;
        const RowMat& P = (*probs)[h];
        if (gv) mm(g(v.id)).middleCols(c0, dh).noalias() += P.transpose() * dO.middleCols(c0, dh);
        if (!gq && !gk) continue;
        dP.noalias() = dO.middleCols(c0, dh) * Vm.middleCols(c0, dh).transpose();
        const Eigen::VectorXd rowdot = (dP.cwiseProduct(P)).rowwise().sum();
        dP = P.cwiseProduct(dP.colwise() - rowdot);
        if (gq) mm(g(q.id)).middleCols(c0, dh).noalias() += sc * (dP * Km.middleCols(c0, dh));
        if (gk) mm(g(k.id)).middleCols(c0, dh).noalias() += sc * (dP.transpose() * Qm.middleCols(c0, dh));
      }
    };
  }
  return out;
}

Var Tape::bce(Var pred, Var target, Reduction r) {
  const Array2& P = value(pred);
  const Array2& T = value(target);
  require(P.same_shape(T), "bce", P, T);
  if (P.size() == 0) throw ShapeMismatch("bce of an empty array");
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = std::clamp(P.data[i], kProbClamp, 1.0 - kProbClamp);
    const double t = T.data[i];
    loss -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
  }
  const double norm = r == Reduction::Mean ? 1.0 / static_cast<double>(P.size()) : 1.0;
  const Var out = push(Array2(1, 1, loss * norm), any_grad({pred, target}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, pred, target, norm, o = out.id] {
      const double d = nodes_[o].grad.data[0] * norm;
      const Array2& P = nodes_[pred.id].value;
      const Array2& T = nodes_[target.id].value;
      if (nodes_[pred.id].requires_grad) {
        Array2& dP = g(pred.id);
        for (std::size_t i = 0; i < P.size(); ++i) {
          const double p = P.data[i];
          if (p < kProbClamp || p > 1.0 - kProbClamp) continue;
          dP.data[i] += d * (p - T.data[i]) / (p * (1.0 - p));
        }
      }
      if (nodes_[target.id].requires_grad) {
        Array2& dT = g(target.id);
        for (std::size_t i = 0; i < P.size(); ++i) {
          const double p = std::clamp(P.data[i], kProbClamp, 1.0 - kProbClamp);
          dT.data[i] += d * (std::log1p(-p) - std::log(p));
        }
      }
    };
  }
  return out;
}

Var Tape::cross_entropy(Var logits, Var target) {
  const Array2& X = value(logits);
  const Array2& T = value(target);
  require(X.same_shape(T), "cross_entropy", X, T);
  auto soft = std::make_shared<Array2>(X.rows, X.cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < X.rows; ++r) {
    const double* x = X.row_ptr(r);
    double mx = x[0];
    for (std::size_t j = 1; j < X.cols; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < X.cols; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    const double* t = T.row_ptr(r);
    double* s = soft->row_ptr(r);
    for (std::size_t j = 0; j < X.cols; ++j) {
      const double logp = x[j] - lse;
      s[j] = std::exp(logp);
      if (t[j] != 0.0) loss -= t[j] * logp;
    }
  }
  const Var out = push(Array2(1, 1, loss), any_grad({logits, target}));
  if (nodes_[out.id].requires_grad) {
    nodes_[out.id].backward = [this, logits, target, soft, o = out.id] {
      const double d = nodes_[o].grad.data[0];
      const Array2& T = nodes_[target.id].value;
      const std::size_t cols = T.cols;
      if (nodes_[logits.id].requires_grad) {
        Array2& dX = g(logits.id);
        for (std::size_t r = 0; r < T.rows; ++r) {
          const double* t = T.row_ptr(r);
          double tsum = 0.0;
          for (std::size_t j = 0; j < cols; ++j) tsum += t[j];
          const double* s = soft->row_ptr(r);
          double* dx = dX.row_ptr(r);
          for (std::size_t j = 0; j < cols; ++j) dx[j] += d * (s[j] * tsum - t[j]);
        }
      }
      if (nodes_[target.id].requires_grad) {
        Array2& dT = g(target.id);
        const Array2& X = nodes_[logits.id].value;
        for (std::size_t r = 0; r < T.rows; ++r) {
          const double* x = X.row_ptr(r);
          double mx = x[0];
          for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
          double z = 0.0;
          for (std::size_t j = 0; j < cols; ++j) z += std::exp(x[j] - mx);
          const double lse = mx + std::log(z);
          for (std::size_t j = 0; j < cols; ++j) dT(r, j) -= d * (x[j] - lse);
        }
      }
    };
  }
  return out;
}

void Tape::backward(Var out) {
  if (!record_) throw InvalidArgument("backward on a tape that does not record");
  const Array2& v = value(out);
  if (v.rows != 1 || v.cols != 1) throw ShapeMismatch("backward needs a 1x1 output");
  if (!std::isfinite(v.data[0])) throw NonFiniteDetected("non-finite loss");
  for (auto& n : nodes_) {
    if (n.grad.size() != 0) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  }
  g(out.id).data[0] = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward();
  }
}

// ---------------------------------------------------------------------------

AdamState make_adam(const ParamStore& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (ParamId i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params.value(i).rows, params.value(i).cols, 0.0);
    s.v.emplace_back(params.value(i).rows, params.value(i).cols, 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeMismatch("adam state does not match the parameter store");
  }
  for (ParamId i = 0; i < params.size(); ++i) {
    if (!state.m[i].same_shape(params.value(i)) || !state.v[i].same_shape(params.value(i))) {
      throw ShapeMismatch("adam moment shape differs for '" + params.name(i) + "'");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (ParamId i = 0; i < params.size(); ++i) {
    Array2& w = params.value(i);
    const Array2& gr = params.grad(i);
    Array2& m = state.m[i];
    Array2& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = gr.data[j];
      m.data[j] = state.beta1 * m.data[j] + (1.0 - state.beta1) * gj;
      v.data[j] = state.beta2 * v.data[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = m.data[j] / c1;
      const double vhat = v.data[j] / c2;
      w.data[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void ema_update(ParamStore& teacher, const ParamStore& student, double m) {
  if (!teacher.same_layout(student)) throw StoreMismatch("teacher and student parameter layouts differ");
  if (!(m >= 0.0 && m <= 1.0)) throw InvalidArgument("EMA momentum must be in [0, 1]");
  for (ParamId i = 0; i < teacher.size(); ++i) {
    Array2& t = teacher.value(i);
    const Array2& s = student.value(i);
    for (std::size_t j = 0; j < t.size(); ++j) t.data[j] = m * t.data[j] + (1.0 - m) * s.data[j];
  }
}

}  // namespace suprim::dc
