#include "ovtal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ovtal/error.hpp"

namespace ovtal {

using detail::Node;

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto e : shape)
    if (e == 0) throw InvalidInput("tensor extents must be positive, got " + shape_str(shape));
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data())
    if (!std::isfinite(v)) throw InvalidInput(std::string(op) + ": non-finite operand");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (!t.defined() || t.rank() != r)
    throw InvalidInput(std::string(op) + ": expected rank " + std::to_string(r));
}

// Parent grad buffer, or nullptr when the parent does not track gradients.
double* grad_of(Node& n) {
  if (!n.requires_grad) return nullptr;
  n.ensure_grad();
  return n.grad.data();
}

}  // namespace

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  check_shape(shape);
  auto n = std::make_shared<Node>();
  n->value.assign(numel(shape), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != values.size())
    throw InvalidInput("Tensor::from: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node().shape; }
std::size_t Tensor::dim(std::size_t axis) const { return shape().at(axis); }
std::size_t Tensor::size() const { return node().value.size(); }
std::span<const double> Tensor::data() const { return node().value; }

std::span<double> Tensor::mutable_data() {
  if (!node().is_leaf) throw InvalidInput("mutable_data() on a non-leaf tensor");
  return node().value;
}

double Tensor::item() const {
  if (size() != 1) throw InvalidInput("item() on tensor of shape " + shape_str(shape()));
  return node().value[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node().is_leaf) throw InvalidInput("set_requires_grad() on a non-leaf tensor");
  node().requires_grad = on;
  if (!on) node().grad.clear();
}

std::span<const double> Tensor::grad() const { return node().grad; }

std::span<double> Tensor::mutable_grad() {
  node().ensure_grad();
  return node().grad;
}

void Tensor::zero_grad() {
  auto& g = node().grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Node& Tensor::node() const {
  if (!node_) throw InvalidInput("use of an undefined tensor");
  return *node_;
}

Tensor Tensor::clone() const {
  return from(shape(), std::vector<double>(data().begin(), data().end()), requires_grad());
}

Tensor Tensor::detach() const {
  return from(shape(), std::vector<double>(data().begin(), data().end()), false);
}

Tensor Tensor::record(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->is_leaf = false;
  for (double v : n->value)
    if (!std::isfinite(v)) throw InvalidInput("primitive produced a non-finite value");
  if (!g_grad_enabled) return Tensor(std::move(n));
  for (auto& p : parents) {
    if (!p.defined()) continue;
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.node_);
  }
  if (n->requires_grad) n->backward = std::move(backward);
  return Tensor(std::move(n));
}

void Tensor::backward() const {
  Node& root = node();
  if (root.value.size() != 1)
    throw InvalidInput("backward() requires a scalar, got " + shape_str(root.shape));
  if (!root.requires_grad) return;

  // Iterative post-order DFS; deep records would overflow a recursive walk.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  root.ensure_grad();
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!(*it)->is_leaf && (*it)->backward) (*it)->backward(**it);
}

// ---- element-wise -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  check_finite(a, "add");
  check_finite(b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tensor::record(a.shape(), std::move(out), {a, b}, [](Node& o) {
    for (auto& p : o.parents)
      if (double* g = grad_of(*p))
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  check_finite(a, "mul");
  check_finite(b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tensor::record(a.shape(), std::move(out), {a, b}, [](Node& o) {
    Node& a = *o.parents[0];
    Node& b = *o.parents[1];
    double* ga = grad_of(a);
    double* gb = grad_of(b);
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      if (ga) ga[i] += o.grad[i] * b.value[i];
      if (gb) gb[i] += o.grad[i] * a.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double k) {
  check_finite(a, "scale");
  if (!std::isfinite(k)) throw InvalidInput("scale: non-finite factor");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * k;
  return Tensor::record(a.shape(), std::move(out), {a}, [k](Node& o) {
    if (double* g = grad_of(*o.parents[0]))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += k * o.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  check_finite(x, "relu");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.at(i));
  return Tensor::record(x.shape(), std::move(out), {x}, [](Node& o) {
    if (double* g = grad_of(*o.parents[0]))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        if (o.value[i] > 0.0) g[i] += o.grad[i];
  });
}

namespace {

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  check_finite(x, "sigmoid");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x.at(i));
  return Tensor::record(x.shape(), std::move(out), {x}, [](Node& o) {
    if (double* g = grad_of(*o.parents[0]))
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        g[i] += o.grad[i] * o.value[i] * (1.0 - o.value[i]);
  });
}

// ---- linear maps --------------------------------------------------------

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "affine");
  require_rank(w, 2, "affine");
  const std::size_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
  if (w.dim(0) != k) throw InvalidInput("affine: inner dimensions disagree");
  if (b.defined() && b.shape() != Shape{m}) throw InvalidInput("affine: bias must be [M]");
  check_finite(x, "affine");
  check_finite(w, "affine");
  if (b.defined()) check_finite(b, "affine");

  std::vector<double> out(n * m, 0.0);
  auto xd = x.data(), wd = w.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &out[i * m];
    if (b.defined())
      for (std::size_t j = 0; j < m; ++j) row[j] = b.at(j);
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xd[i * k + p];
      const double* wr = &wd[p * m];
      for (std::size_t j = 0; j < m; ++j) row[j] += xv * wr[j];
    }
  }
  const bool has_bias = b.defined();
  return Tensor::record({n, m}, std::move(out), {x, w, b}, [n, k, m, has_bias](Node& o) {
    Node& x = *o.parents[0];
    Node& w = *o.parents[1];
    double* gx = grad_of(x);
    double* gw = grad_of(w);
    double* gb = has_bias ? grad_of(*o.parents[2]) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double* go = &o.grad[i * m];
      if (gb)
        for (std::size_t j = 0; j < m; ++j) gb[j] += go[j];
      for (std::size_t p = 0; p < k; ++p) {
        const double* wr = &w.value[p * m];
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += go[j] * wr[j];
        if (gx) gx[i * k + p] += acc;
        if (gw) {
          const double xv = x.value[i * k + p];
          double* gwr = &gw[p * m];
          for (std::size_t j = 0; j < m; ++j) gwr[j] += xv * go[j];
        }
      }
    }
  });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 2, "conv1d");
  require_rank(w, 3, "conv1d");
  if (stride == 0) throw InvalidInput("conv1d: stride must be positive");
  const std::size_t s = x.dim(0), cin = x.dim(1);
  const std::size_t cout = w.dim(0), kw = w.dim(2);
  if (w.dim(1) != cin)
    throw InvalidInput("conv1d: weight expects " + std::to_string(w.dim(1)) +
                       " input channels, got " + std::to_string(cin));
  if (b.defined() && b.shape() != Shape{cout}) throw InvalidInput("conv1d: bias must be [Cout]");
  if (s + 2 * padding < kw) throw InvalidInput("conv1d: kernel longer than padded input");
  check_finite(x, "conv1d");
  check_finite(w, "conv1d");
  if (b.defined()) check_finite(b, "conv1d");

  const std::size_t sout = (s + 2 * padding - kw) / stride + 1;
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  std::vector<double> out(sout * cout, 0.0);
  auto xd = x.data(), wd = w.data();
  for (std::size_t t = 0; t < sout; ++t) {
    double* row = &out[t * cout];
    if (b.defined())
      for (std::size_t co = 0; co < cout; ++co) row[co] = b.at(co);
    for (std::size_t k = 0; k < kw; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(s)) continue;
      const double* xr = &xd[static_cast<std::size_t>(src) * cin];
      for (std::size_t co = 0; co < cout; ++co) {
        const double* wr = &wd[(co * cin) * kw + k];
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci) acc += wr[ci * kw] * xr[ci];
        row[co] += acc;
      }
    }
  }
  const bool has_bias = b.defined();
  return Tensor::record(
      {sout, cout}, std::move(out), {x, w, b},
      [=](Node& o) {
        Node& x = *o.parents[0];
        Node& w = *o.parents[1];
        double* gx = grad_of(x);
        double* gw = grad_of(w);
        double* gb = has_bias ? grad_of(*o.parents[2]) : nullptr;
        for (std::size_t t = 0; t < sout; ++t) {
          const double* go = &o.grad[t * cout];
          if (gb)
            for (std::size_t co = 0; co < cout; ++co) gb[co] += go[co];
          for (std::size_t k = 0; k < kw; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(s)) continue;
            const std::size_t su = static_cast<std::size_t>(src);
            const double* xr = &x.value[su * cin];
            for (std::size_t co = 0; co < cout; ++co) {
              const double g = go[co];
              if (g == 0.0) continue;
              const std::size_t base = (co * cin) * kw + k;
              if (gx) {
                double* gxr = &gx[su * cin];
                for (std::size_t ci = 0; ci < cin; ++ci) gxr[ci] += g * w.value[base + ci * kw];
              }
              if (gw)
                for (std::size_t ci = 0; ci < cin; ++ci) gw[base + ci * kw] += g * xr[ci];
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw InvalidInput("layer_norm: gain/bias must be [C]");
  if (!(eps > 0.0)) throw InvalidInput("layer_norm: eps must be positive");
  check_finite(x, "layer_norm");
  check_finite(gamma, "layer_norm");
  check_finite(beta, "layer_norm");

  std::vector<double> xhat(n * c), inv_std(n), out(n * c);
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xd[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xd[i * c + j] - mu) * (xd[i * c + j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xd[i * c + j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gamma.at(j) + beta.at(j);
    }
  }
  return Tensor::record(
      {n, c}, std::move(out), {x, gamma, beta},
      [n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
        Node& gm = *o.parents[1];
        double* gx = grad_of(*o.parents[0]);
        double* gg = grad_of(gm);
        double* gbeta = grad_of(*o.parents[2]);
        const double cn = static_cast<double>(c);
        for (std::size_t i = 0; i < n; ++i) {
          const double* go = &o.grad[i * c];
          const double* xh = &xhat[i * c];
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            if (gg) gg[j] += go[j] * xh[j];
            if (gbeta) gbeta[j] += go[j];
            const double d = go[j] * gm.value[j];
            sum_d += d;
            sum_dx += d * xh[j];
          }
          if (!gx) continue;
          for (std::size_t j = 0; j < c; ++j) {
            const double d = go[j] * gm.value[j];
            gx[i * c + j] += inv_std[i] * (d - sum_d / cn - xh[j] * sum_dx / cn);
          }
        }
      });
}

// ---- reductions & reshaping ---------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis, double temperature) {
  if (axis >= x.rank()) throw InvalidInput("softmax: axis out of range");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidInput("softmax: temperature must be positive");
  check_finite(x, "softmax");
  const Shape& sh = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
  for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
  const std::size_t len = sh[axis];

  std::vector<double> out(x.size());
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xd[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xd[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp((xd[base + k * inner] - mx) / temperature);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  return Tensor::record(sh, std::move(out), {x}, [=](Node& o) {
    double* g = grad_of(*o.parents[0]);
    if (!g) return;
    for (std::size_t ou = 0; ou < outer; ++ou)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ou * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k)
          dot += o.grad[base + k * inner] * o.value[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          g[idx] += o.value[idx] * (o.grad[idx] - dot) / temperature;
        }
      }
  });
}

Tensor downsample_max2(const Tensor& x) {
  require_rank(x, 2, "downsample_max2");
  check_finite(x, "downsample_max2");
  const std::size_t s = x.dim(0), c = x.dim(1);
  const std::size_t so = (s + 1) / 2;
  std::vector<double> out(so * c);
  std::vector<std::size_t> src(so * c);
  auto xd = x.data();
  for (std::size_t i = 0; i < so; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t a = (2 * i) * c + j;
      std::size_t pick = a;
      if (2 * i + 1 < s && xd[a + c] > xd[a]) pick = a + c;
      out[i * c + j] = xd[pick];
      src[i * c + j] = pick;
    }
  return Tensor::record({so, c}, std::move(out), {x}, [src = std::move(src)](Node& o) {
    if (double* g = grad_of(*o.parents[0]))
      for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += o.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  check_finite(x, "sum");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::record({1}, {acc}, {x}, [](Node& o) {
    if (double* g = grad_of(*o.parents[0]))
      for (std::size_t i = 0; i < o.parents[0]->value.size(); ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw InvalidInput("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw InvalidInput("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& sh = p.shape();
    if (sh.size() != first.size()) throw InvalidInput("concat: rank mismatch");
    for (std::size_t i = 0; i < sh.size(); ++i)
      if (i != axis && sh[i] != first[i]) throw InvalidInput("concat: extent mismatch");
    out_shape[axis] += sh[axis];
    check_finite(p, "concat");
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  const std::size_t row = out_shape[axis] * inner;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t chunk = p.dim(axis) * inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + off));
    off += chunk;
  }
  return Tensor::record(out_shape, std::move(out), parts,
                        [outer, row, offsets = std::move(offsets)](Node& o) {
                          // Undefined parts were rejected above, so parents align with offsets.
                          for (std::size_t k = 0; k < o.parents.size(); ++k) {
                            double* g = grad_of(*o.parents[k]);
                            if (!g) continue;
                            const std::size_t chunk = o.parents[k]->value.size() / outer;
                            for (std::size_t ou = 0; ou < outer; ++ou)
                              for (std::size_t i = 0; i < chunk; ++i)
                                g[ou * chunk + i] += o.grad[ou * row + offsets[k] + i];
                          }
                        });
}

}  // namespace ovtal
