#include "mdsf/ops.hpp"

#include "mdsf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdsf {

namespace {

using Eigen::VectorXd;
using NodePtr = std::shared_ptr<detail::Node>;

Index normalize_axis(Index axis, Index rank) {
  const Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ConfigError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

// Splits a shape around `axis` into (outer, axis length, inner) extents.
struct AxisSplit {
  Index outer = 1;
  Index len = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& s, Index axis) {
  AxisSplit r;
  for (Index i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (Index i = axis + 1; i < static_cast<Index>(s.size()); ++i) r.inner *= s[i];
  return r;
}

struct Broadcast {
  Shape out;
  std::vector<Index> ia;  // empty: identity mapping
  std::vector<Index> ib;
};

std::vector<Index> broadcast_map(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  const std::size_t off = r - in.size();
  std::vector<Index> stride(r, 0);
  Index s = 1;
  for (std::size_t i = r; i-- > off;) {
    const Index d = in[i - off];
    stride[i] = d == 1 ? 0 : s;
    s *= d;
  }
  const Index n = numel(out);
  std::vector<Index> map(static_cast<std::size_t>(n));
  std::vector<Index> idx(r, 0);
  Index flat = 0;
  for (Index k = 0; k < n; ++k) {
    map[static_cast<std::size_t>(k)] = flat;
    for (std::size_t i = r; i-- > 0;) {
      ++idx[i];
      flat += stride[i];
      if (idx[i] < out[i]) break;
      flat -= stride[i] * idx[i];
      idx[i] = 0;
    }
  }
  return map;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Index da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const Index db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    }
    p.out[i] = std::max(da, db);
  }
  if (a != p.out) p.ia = broadcast_map(a, p.out);
  if (b != p.out) p.ib = broadcast_map(b, p.out);
  return p;
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA dfa, DB dfb) {
  Broadcast p = plan_broadcast(a.shape(), b.shape());
  const Index n = numel(p.out);
  const VectorXd& av = a.value();
  const VectorXd& bv = b.value();
  VectorXd out(n);
  if (p.ia.empty() && p.ib.empty()) {
    for (Index k = 0; k < n; ++k) out[k] = f(av[k], bv[k]);
  } else {
    for (Index k = 0; k < n; ++k) {
      const Index i = p.ia.empty() ? k : p.ia[static_cast<std::size_t>(k)];
      const Index j = p.ib.empty() ? k : p.ib[static_cast<std::size_t>(k)];
      out[k] = f(av[i], bv[j]);
    }
  }
  Shape shape = p.out;
  NodePtr an = a.node(), bn = b.node();
  return make_result(std::move(shape), std::move(out), op, {a, b},
                     [an, bn, p = std::move(p), dfa, dfb](const VectorXd& g) {
                       const VectorXd& x = an->value;
                       const VectorXd& y = bn->value;
                       const Index n = g.size();
                       VectorXd ga, gb;
                       if (an->requires_grad) ga = VectorXd::Zero(x.size());
                       if (bn->requires_grad) gb = VectorXd::Zero(y.size());
                       for (Index k = 0; k < n; ++k) {
                         const Index i = p.ia.empty() ? k : p.ia[static_cast<std::size_t>(k)];
                         const Index j = p.ib.empty() ? k : p.ib[static_cast<std::size_t>(k)];
                         if (an->requires_grad) ga[i] += g[k] * dfa(x[i], y[j]);
                         if (bn->requires_grad) gb[j] += g[k] * dfb(x[i], y[j]);
                       }
                       if (an->requires_grad) an->accumulate(ga);
                       if (bn->requires_grad) bn->accumulate(gb);
                     });
}

// df receives (input, output).
template <class F, class DF>
Tensor unary(const Tensor& x, const char* op, F f, DF df) {
  const VectorXd& xv = x.value();
  VectorXd out = xv.unaryExpr(f);
  NodePtr xn = x.node();
  VectorXd saved = out;
  return make_result(x.shape(), std::move(out), op, {x},
                     [xn, saved = std::move(saved), df](const VectorXd& g) {
                       const VectorXd& v = xn->value;
                       VectorXd gx(v.size());
                       for (Index k = 0; k < v.size(); ++k) gx[k] = g[k] * df(v[k], saved[k]);
                       xn->accumulate(gx);
                     });
}

// Shared gather kernel: out[k] = in[map[k]] (or 0 when map[k] < 0).
Tensor gather(const Tensor& x, Shape out_shape, std::vector<Index> map, const char* op) {
  const VectorXd& xv = x.value();
  VectorXd out(static_cast<Index>(map.size()));
  for (std::size_t k = 0; k < map.size(); ++k) out[static_cast<Index>(k)] = map[k] < 0 ? 0.0 : xv[map[k]];
  NodePtr xn = x.node();
  return make_result(std::move(out_shape), std::move(out), op, {x},
                     [xn, map = std::move(map)](const VectorXd& g) {
                       VectorXd gx = VectorXd::Zero(xn->value.size());
                       for (std::size_t k = 0; k < map.size(); ++k) {
                         if (map[k] >= 0) gx[map[k]] += g[static_cast<Index>(k)];
                       }
                       xn->accumulate(gx);
                     });
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double softplus_scalar(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

void require_rank(const Tensor& x, Index rank, const char* what) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         to_string(x.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// Ties send the whole gradient to the first operand.
Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor minimum(const Tensor& a, double b) { return minimum(a, Tensor::scalar(b)); }
Tensor maximum(const Tensor& a, double b) { return maximum(a, Tensor::scalar(b)); }

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

Tensor operator-(const Tensor& a) {
  return unary(
      a, "neg", [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor pow(const Tensor& x, double exponent) {
  return unary(
      x, "pow", [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v, double) { return exponent * std::pow(v, exponent - 1.0); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](double v) { return sigmoid_scalar(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus", [](double v) { return softplus_scalar(v); },
      [](double v, double) { return sigmoid_scalar(v); });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor atan(const Tensor& x) {
  return unary(
      x, "atan", [](double v) { return std::atan(v); }, [](double v, double) { return 1.0 / (1.0 + v * v); });
}

Tensor sum(const Tensor& x) {
  VectorXd out = VectorXd::Constant(1, x.value().sum());
  NodePtr xn = x.node();
  return make_result(Shape{1}, std::move(out), "sum", {x}, [xn](const VectorXd& g) {
    xn->accumulate(VectorXd::Constant(xn->value.size(), g[0]));
  });
}

Tensor mean(const Tensor& x) { return sum(x) * (1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor& x, Index axis, bool keepdim) {
  const Index ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  if (keepdim || shape.size() == 1) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + ax);
  }
  const VectorXd& xv = x.value();
  VectorXd out = VectorXd::Zero(s.outer * s.inner);
  for (Index o = 0; o < s.outer; ++o)
    for (Index a = 0; a < s.len; ++a)
      for (Index i = 0; i < s.inner; ++i) out[o * s.inner + i] += xv[(o * s.len + a) * s.inner + i];
  NodePtr xn = x.node();
  return make_result(std::move(shape), std::move(out), "sum_axis", {x}, [xn, s](const VectorXd& g) {
    VectorXd gx(xn->value.size());
    for (Index o = 0; o < s.outer; ++o)
      for (Index a = 0; a < s.len; ++a)
        for (Index i = 0; i < s.inner; ++i) gx[(o * s.len + a) * s.inner + i] = g[o * s.inner + i];
    xn->accumulate(gx);
  });
}

Tensor mean(const Tensor& x, Index axis, bool keepdim) {
  const Index len = x.size(axis);
  return sum(x, axis, keepdim) * (1.0 / static_cast<double>(len));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  NodePtr xn = x.node();
  return make_result(std::move(shape), x.value(), "reshape", {x},
                     [xn](const VectorXd& g) { xn->accumulate(g); });
}

Tensor permute(const Tensor& x, const std::vector<Index>& axes) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  if (axes.size() != r) throw ConfigError("permute axes do not match rank of " + to_string(in));
  std::vector<bool> seen(r, false);
  for (Index a : axes) {
    if (a < 0 || a >= static_cast<Index>(r) || seen[static_cast<std::size_t>(a)]) {
      throw ConfigError("permute axes are not a permutation");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
  std::vector<Index> in_stride(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
  Shape out(r);
  std::vector<Index> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[static_cast<std::size_t>(axes[i])];
    stride[i] = in_stride[static_cast<std::size_t>(axes[i])];
  }
  const Index n = x.numel();
  std::vector<Index> map(static_cast<std::size_t>(n));
  std::vector<Index> idx(r, 0);
  Index flat = 0;
  for (Index k = 0; k < n; ++k) {
    map[static_cast<std::size_t>(k)] = flat;
    for (std::size_t i = r; i-- > 0;) {
      ++idx[i];
      flat += stride[i];
      if (idx[i] < out[i]) break;
      flat -= stride[i] * idx[i];
      idx[i] = 0;
    }
  }
  return gather(x, std::move(out), std::move(map), "permute");
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  return permute(x, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts, Index axis) {
  if (parts.empty()) throw ConfigError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const Index ax = normalize_axis(axis, static_cast<Index>(first.size()));
  Shape shape = first;
  shape[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = static_cast<Index>(i) == ax || s[i] == first[i];
    if (!ok) throw DimensionError("concat shape mismatch: " + to_string(first) + " vs " + to_string(s));
    shape[ax] += s[ax];
  }
  const AxisSplit total = split_at(shape, ax);
  VectorXd out(numel(shape));
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Index len = p.shape()[ax];
    const VectorXd& v = p.value();
    for (Index o = 0; o < total.outer; ++o)
      out.segment((o * total.len + off) * total.inner, len * total.inner) =
          v.segment(o * len * total.inner, len * total.inner);
    off += len;
  }
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result(std::move(shape), std::move(out), "concat", parts,
                     [nodes, offsets, total, ax](const VectorXd& g) {
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                         if (!nodes[k]->requires_grad) continue;
                         const Index len = nodes[k]->shape[ax];
                         VectorXd gp(nodes[k]->value.size());
                         for (Index o = 0; o < total.outer; ++o)
                           gp.segment(o * len * total.inner, len * total.inner) =
                               g.segment((o * total.len + offsets[k]) * total.inner, len * total.inner);
                         nodes[k]->accumulate(gp);
                       }
                     });
}

Tensor narrow(const Tensor& x, Index axis, Index start, Index length) {
  const Index ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (start < 0 || length <= 0 || start + length > s.len) {
    throw ConfigError("narrow range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                      ") outside axis of length " + std::to_string(s.len));
  }
  Shape shape = x.shape();
  shape[ax] = length;
  std::vector<Index> map;
  map.reserve(static_cast<std::size_t>(s.outer * length * s.inner));
  for (Index o = 0; o < s.outer; ++o)
    for (Index a = 0; a < length; ++a)
      for (Index i = 0; i < s.inner; ++i) map.push_back((o * s.len + start + a) * s.inner + i);
  return gather(x, std::move(shape), std::move(map), "narrow");
}

std::vector<Tensor> split(const Tensor& x, Index axis, const std::vector<Index>& sizes) {
  const Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  if (total != x.size(axis)) {
    throw DimensionError("split sizes sum to " + std::to_string(total) + " but axis has length " +
                         std::to_string(x.size(axis)));
  }
  std::vector<Tensor> parts;
  Index start = 0;
  for (Index len : sizes) {
    parts.push_back(narrow(x, axis, start, len));
    start += len;
  }
  return parts;
}

Tensor index_select(const Tensor& x, Index axis, const std::vector<Index>& indices) {
  const Index ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (indices.empty()) throw ConfigError("index_select with no indices");
  for (Index v : indices) {
    if (v < 0 || v >= s.len) throw ConfigError("index " + std::to_string(v) + " out of range");
  }
  Shape shape = x.shape();
  const Index m = static_cast<Index>(indices.size());
  shape[ax] = m;
  std::vector<Index> map;
  map.reserve(static_cast<std::size_t>(s.outer * m * s.inner));
  for (Index o = 0; o < s.outer; ++o)
    for (Index v : indices)
      for (Index i = 0; i < s.inner; ++i) map.push_back((o * s.len + v) * s.inner + i);
  return gather(x, std::move(shape), std::move(map), "index_select");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul shape mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const Index m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  using CMap = Eigen::Map<const RowMatrix>;
  VectorXd out(m * n);
  Eigen::Map<RowMatrix>(out.data(), m, n).noalias() = CMap(a.value().data(), m, k) * CMap(b.value().data(), k, n);
  NodePtr an = a.node(), bn = b.node();
  return make_result(Shape{m, n}, std::move(out), "matmul", {a, b}, [an, bn, m, k, n](const VectorXd& g) {
    CMap gm(g.data(), m, n);
    if (an->requires_grad) {
      VectorXd ga(m * k);
      Eigen::Map<RowMatrix>(ga.data(), m, k).noalias() = gm * CMap(bn->value.data(), k, n).transpose();
      an->accumulate(ga);
    }
    if (bn->requires_grad) {
      VectorXd gb(k * n);
      Eigen::Map<RowMatrix>(gb.data(), k, n).noalias() = CMap(an->value.data(), m, k).transpose() * gm;
      bn->accumulate(gb);
    }
  });
}

Tensor softmax(const Tensor& x, Index axis) {
  const Index ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  const VectorXd& xv = x.value();
  VectorXd out(xv.size());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      double mx = xv[base];
      for (Index a = 1; a < s.len; ++a) mx = std::max(mx, xv[base + a * s.inner]);
      double z = 0;
      for (Index a = 0; a < s.len; ++a) {
        const double e = std::exp(xv[base + a * s.inner] - mx);
        out[base + a * s.inner] = e;
        z += e;
      }
      for (Index a = 0; a < s.len; ++a) out[base + a * s.inner] /= z;
    }
  }
  NodePtr xn = x.node();
  VectorXd y = out;
  return make_result(x.shape(), std::move(out), "softmax", {x}, [xn, y = std::move(y), s](const VectorXd& g) {
    VectorXd gx(y.size());
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.len * s.inner + i;
        double dot = 0;
        for (Index a = 0; a < s.len; ++a) dot += g[base + a * s.inner] * y[base + a * s.inner];
        for (Index a = 0; a < s.len; ++a) {
          const Index k = base + a * s.inner;
          gx[k] = y[k] * (g[k] - dot);
        }
      }
    }
    xn->accumulate(gx);
  });
}

Tensor layer_norm(const Tensor& x, Index axis, double eps) {
  const Index ax = normalize_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (s.len < 2) throw ConfigError("layer_norm axis must have length >= 2");
  const VectorXd& xv = x.value();
  VectorXd out(xv.size());
  VectorXd inv_std(s.outer * s.inner);
  const double n = static_cast<double>(s.len);
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      double mu = 0;
      for (Index a = 0; a < s.len; ++a) mu += xv[base + a * s.inner];
      mu /= n;
      double var = 0;
      for (Index a = 0; a < s.len; ++a) {
        const double d = xv[base + a * s.inner] - mu;
        var += d * d;
      }
      var /= n;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[o * s.inner + i] = inv;
      for (Index a = 0; a < s.len; ++a) out[base + a * s.inner] = (xv[base + a * s.inner] - mu) * inv;
    }
  }
  NodePtr xn = x.node();
  VectorXd y = out;
  return make_result(x.shape(), std::move(out), "layer_norm", {x},
                     [xn, y = std::move(y), inv_std = std::move(inv_std), s, n](const VectorXd& g) {
                       VectorXd gx(y.size());
                       for (Index o = 0; o < s.outer; ++o) {
                         for (Index i = 0; i < s.inner; ++i) {
                           const Index base = o * s.len * s.inner + i;
                           double mg = 0, mgy = 0;
                           for (Index a = 0; a < s.len; ++a) {
                             const Index k = base + a * s.inner;
                             mg += g[k];
                             mgy += g[k] * y[k];
                           }
                           mg /= n;
                           mgy /= n;
                           const double inv = inv_std[o * s.inner + i];
                           for (Index a = 0; a < s.len; ++a) {
                             const Index k = base + a * s.inner;
                             gx[k] = inv * (g[k] - mg - y[k] * mgy);
                           }
                         }
                       }
                       xn->accumulate(gx);
                     });
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernel, Index dilation, Index stride) {
  require_rank(x, 3, "depthwise_conv2d input");
  require_rank(kernel, 3, "depthwise_conv2d kernel");
  const Index c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const Index ks = kernel.shape()[1];
  if (kernel.shape()[0] != c || kernel.shape()[2] != ks) {
    throw DimensionError("depthwise kernel " + to_string(kernel.shape()) + " does not match input " +
                         to_string(x.shape()));
  }
  if (ks % 2 == 0) throw ConfigError("depthwise kernel size must be odd, got " + std::to_string(ks));
  if (dilation < 1 || stride < 1) throw ConfigError("dilation and stride must be >= 1");
  const Index r = ks / 2;
  const Index oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
  const VectorXd& xv = x.value();
  const VectorXd& kv = kernel.value();
  VectorXd out = VectorXd::Zero(c * oh * ow);
  for (Index ch = 0; ch < c; ++ch) {
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        double acc = 0;
        for (Index i = 0; i < ks; ++i) {
          const Index iy = oy * stride + (i - r) * dilation;
          if (iy < 0 || iy >= h) continue;
          for (Index j = 0; j < ks; ++j) {
            const Index ix = ox * stride + (j - r) * dilation;
            if (ix < 0 || ix >= w) continue;
            acc += kv[(ch * ks + i) * ks + j] * xv[(ch * h + iy) * w + ix];
          }
        }
        out[(ch * oh + oy) * ow + ox] = acc;
      }
    }
  }
  NodePtr xn = x.node(), kn = kernel.node();
  return make_result(Shape{c, oh, ow}, std::move(out), "depthwise_conv2d", {x, kernel},
                     [xn, kn, c, h, w, ks, r, oh, ow, dilation, stride](const VectorXd& g) {
                       const VectorXd& xv = xn->value;
                       const VectorXd& kv = kn->value;
                       VectorXd gx, gk;
                       if (xn->requires_grad) gx = VectorXd::Zero(xv.size());
                       if (kn->requires_grad) gk = VectorXd::Zero(kv.size());
                       for (Index ch = 0; ch < c; ++ch)
                         for (Index oy = 0; oy < oh; ++oy)
                           for (Index ox = 0; ox < ow; ++ox) {
                             const double go = g[(ch * oh + oy) * ow + ox];
                             for (Index i = 0; i < ks; ++i) {
                               const Index iy = oy * stride + (i - r) * dilation;
                               if (iy < 0 || iy >= h) continue;
                               for (Index j = 0; j < ks; ++j) {
                                 const Index ix = ox * stride + (j - r) * dilation;
                                 if (ix < 0 || ix >= w) continue;
                                 const Index xi = (ch * h + iy) * w + ix;
                                 const Index ki = (ch * ks + i) * ks + j;
                                 if (xn->requires_grad) gx[xi] += go * kv[ki];
                                 if (kn->requires_grad) gk[ki] += go * xv[xi];
                               }
                             }
                           }
                       if (xn->requires_grad) xn->accumulate(gx);
                       if (kn->requires_grad) kn->accumulate(gk);
                     });
}

Tensor unfold_neighborhood(const Tensor& x, Index dilation) {
  require_rank(x, 3, "unfold_neighborhood");
  if (dilation < 1) throw ConfigError("unfold dilation must be >= 1, got " + std::to_string(dilation));
  const Index c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  std::vector<Index> map;
  map.reserve(static_cast<std::size_t>(c * 9 * h * w));
  for (Index ch = 0; ch < c; ++ch)
    for (Index k = 0; k < 9; ++k) {
      const Index dy = (k / 3 - 1) * dilation, dx = (k % 3 - 1) * dilation;
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) {
          const Index sy = y + dy, sx = xx + dx;
          map.push_back(sy < 0 || sy >= h || sx < 0 || sx >= w ? -1 : (ch * h + sy) * w + sx);
        }
    }
  return gather(x, Shape{c, 9, h, w}, std::move(map), "unfold_neighborhood");
}

Tensor resize_bilinear(const Tensor& x, Index out_h, Index out_w) {
  require_rank(x, 3, "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ConfigError("resize target must be positive");
  const Index c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  struct Tap {
    Index i0, i1;
    double t;
  };
  auto taps = [](Index in, Index out) {
    std::vector<Tap> r(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const Index i0 = static_cast<Index>(std::floor(src));
      const Index i1 = std::min(i0 + 1, in - 1);
      r[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
    }
    return r;
  };
  const auto ty = taps(h, out_h), tx = taps(w, out_w);
  const VectorXd& xv = x.value();
  VectorXd out(c * out_h * out_w);
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < out_h; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (Index xx = 0; xx < out_w; ++xx) {
        const Tap& b = tx[static_cast<std::size_t>(xx)];
        const Index base = ch * h * w;
        out[(ch * out_h + y) * out_w + xx] = (1 - a.t) * ((1 - b.t) * xv[base + a.i0 * w + b.i0] + b.t * xv[base + a.i0 * w + b.i1]) +
                                            a.t * ((1 - b.t) * xv[base + a.i1 * w + b.i0] + b.t * xv[base + a.i1 * w + b.i1]);
      }
    }
  NodePtr xn = x.node();
  return make_result(Shape{c, out_h, out_w}, std::move(out), "resize_bilinear", {x},
                     [xn, ty, tx, c, h, w, out_h, out_w](const VectorXd& g) {
                       VectorXd gx = VectorXd::Zero(xn->value.size());
                       for (Index ch = 0; ch < c; ++ch)
                         for (Index y = 0; y < out_h; ++y) {
                           const Tap& a = ty[static_cast<std::size_t>(y)];
                           for (Index xx = 0; xx < out_w; ++xx) {
                             const Tap& b = tx[static_cast<std::size_t>(xx)];
                             const double go = g[(ch * out_h + y) * out_w + xx];
                             const Index base = ch * h * w;
                             gx[base + a.i0 * w + b.i0] += go * (1 - a.t) * (1 - b.t);
                             gx[base + a.i0 * w + b.i1] += go * (1 - a.t) * b.t;
                             gx[base + a.i1 * w + b.i0] += go * a.t * (1 - b.t);
                             gx[base + a.i1 * w + b.i1] += go * a.t * b.t;
                           }
                         }
                       xn->accumulate(gx);
                     });
}

}  // namespace mdsf
