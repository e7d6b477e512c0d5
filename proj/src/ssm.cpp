#include "mdsf/ssm.hpp"

#include "mdsf/errors.hpp"
#include "mdsf/ops.hpp"

#include <algorithm>
#include <cmath>

namespace mdsf {

namespace {

using Eigen::VectorXd;

void check_inputs(const Tensor& x, const SSMParams& p, const SelectiveInputs& in) {
  p.validate();
  const Index c = p.channels(), s = p.state_size();
  if (x.rank() != 2 || x.shape()[1] != c) {
    throw DimensionError("scan input " + to_string(x.shape()) + " does not match " + std::to_string(c) +
                         " channels");
  }
  const Index l = x.shape()[0];
  if (in.delta.shape() != Shape{l, c}) {
    throw DimensionError("delta " + to_string(in.delta.shape()) + " != " + to_string({l, c}));
  }
  if (in.B.shape() != Shape{l, s} || in.C.shape() != Shape{l, s}) {
    throw DimensionError("B/C shapes " + to_string(in.B.shape()) + "/" + to_string(in.C.shape()) + " != " +
                         to_string({l, s}));
  }
  if ((in.delta.value().array() <= 0.0).any()) throw DomainError("selective scan requires delta > 0");
}

}  // namespace

SSMParams SSMParams::init(Index channels, Index state_size, bool requires_grad) {
  Tensor a({channels, state_size}, requires_grad);
  for (Index c = 0; c < channels; ++c)
    for (Index s = 0; s < state_size; ++s) a.mutable_value()[c * state_size + s] = -static_cast<double>(s + 1);
  return {a, Tensor::full({channels}, 1.0, requires_grad)};
}

void SSMParams::validate() const {
  if (!A.defined() || !D.defined() || A.rank() != 2 || D.rank() != 1 || D.numel() != A.shape()[0]) {
    throw DimensionError("SSM parameters must be A[C,S] and D[C]");
  }
  if ((A.value().array() >= 0.0).any()) throw DomainError("SSM state matrix A must be strictly negative");
}

Tensor discretize(const SSMParams& params, const Tensor& delta) {
  params.validate();
  const Index c = params.channels(), s = params.state_size();
  if (delta.rank() != 2 || delta.shape()[1] != c) {
    throw DimensionError("delta " + to_string(delta.shape()) + " does not match " + std::to_string(c) + " channels");
  }
  if ((delta.value().array() <= 0.0).any()) throw DomainError("discretization requires delta > 0");
  const Index l = delta.shape()[0];
  const Tensor prod = mul(reshape(delta, {l, c, 1}), reshape(params.A, {1, c, s}));
  return exp(prod);
}

Tensor selective_scan(const Tensor& x, const SSMParams& params, const SelectiveInputs& inputs) {
  check_inputs(x, params, inputs);
  const Index l = x.shape()[0], nc = params.channels(), ns = params.state_size();
  const VectorXd& xv = x.value();
  const VectorXd& av = params.A.value();
  const VectorXd& dv = params.D.value();
  const VectorXd& delta = inputs.delta.value();
  const VectorXd& bv = inputs.B.value();
  const VectorXd& cv = inputs.C.value();

  const bool record = grad_enabled() && (x.requires_grad() || params.A.requires_grad() ||
                                         params.D.requires_grad() || inputs.delta.requires_grad() ||
                                         inputs.B.requires_grad() || inputs.C.requires_grad());
  VectorXd y(l * nc);
  VectorXd h = VectorXd::Zero(nc * ns);
  VectorXd states;
  if (record) states.resize(l * nc * ns);
  for (Index t = 0; t < l; ++t) {
    const double* bt = bv.data() + t * ns;
    const double* ct = cv.data() + t * ns;
    for (Index c = 0; c < nc; ++c) {
      const double dt = delta[t * nc + c];
      const double xt = xv[t * nc + c];
      const double* ac = av.data() + c * ns;
      double* hc = h.data() + c * ns;
      double acc = 0.0;
      for (Index s = 0; s < ns; ++s) {
        hc[s] = std::exp(dt * ac[s]) * hc[s] + dt * bt[s] * xt;
        acc += ct[s] * hc[s];
      }
      y[t * nc + c] = acc + dv[c] * xt;
    }
    if (record) states.segment(t * nc * ns, nc * ns) = h;
  }
  if (!record) return Tensor({l, nc}, std::move(y));

  auto xn = x.node(), an = params.A.node(), dn = params.D.node();
  auto deln = inputs.delta.node(), bn = inputs.B.node(), cn = inputs.C.node();
  return make_result(
      Shape{l, nc}, std::move(y), "selective_scan", {x, params.A, params.D, inputs.delta, inputs.B, inputs.C},
      [xn, an, dn, deln, bn, cn, states = std::move(states), l, nc, ns](const VectorXd& g) {
        const VectorXd& xv = xn->value;
        const VectorXd& av = an->value;
        const VectorXd& dv = dn->value;
        const VectorXd& delta = deln->value;
        const VectorXd& bv = bn->value;
        const VectorXd& cv = cn->value;
        VectorXd gx(l * nc), ga = VectorXd::Zero(nc * ns), gd = VectorXd::Zero(nc);
        VectorXd gdelta(l * nc), gb = VectorXd::Zero(l * ns), gc = VectorXd::Zero(l * ns);
        // gh holds dLoss/dh_t flowing back from step t+1 (already multiplied by A_bar_{t+1}).
        VectorXd gh = VectorXd::Zero(nc * ns);
        for (Index t = l - 1; t >= 0; --t) {
          const double* ht = states.data() + t * nc * ns;
          const double* hp = t > 0 ? states.data() + (t - 1) * nc * ns : nullptr;
          const double* bt = bv.data() + t * ns;
          const double* ct = cv.data() + t * ns;
          for (Index c = 0; c < nc; ++c) {
            const double gy = g[t * nc + c];
            const double dt = delta[t * nc + c];
            const double xt = xv[t * nc + c];
            double gxa = gy * dv[c];
            double gdel = 0.0;
            gd[c] += gy * xt;
            for (Index s = 0; s < ns; ++s) {
              const Index cs = c * ns + s;
              const double a = av[cs];
              const double abar = std::exp(dt * a);
              const double hprev = hp ? hp[cs] : 0.0;
              const double adj = gh[cs] + gy * ct[s];
              gc[t * ns + s] += gy * ht[cs];
              ga[cs] += adj * hprev * abar * dt;
              gdel += adj * (hprev * abar * a + bt[s] * xt);
              gb[t * ns + s] += adj * dt * xt;
              gxa += adj * dt * bt[s];
              gh[cs] = adj * abar;
            }
            gx[t * nc + c] = gxa;
            gdelta[t * nc + c] = gdel;
          }
        }
        if (xn->requires_grad) xn->accumulate(gx);
        if (an->requires_grad) an->accumulate(ga);
        if (dn->requires_grad) dn->accumulate(gd);
        if (deln->requires_grad) deln->accumulate(gdelta);
        if (bn->requires_grad) bn->accumulate(gb);
        if (cn->requires_grad) cn->accumulate(gc);
      });
}

std::string_view to_string(ScanDirection d) {
  switch (d) {
    case ScanDirection::LeftRight: return "LR";
    case ScanDirection::RightLeft: return "RL";
    case ScanDirection::TopBottom: return "TB";
    case ScanDirection::BottomTop: return "BT";
  }
  return "?";
}

std::vector<Index> scan_order(Index h, Index w, ScanDirection direction) {
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(h * w));
  const bool column_major = direction == ScanDirection::TopBottom || direction == ScanDirection::BottomTop;
  if (column_major) {
    for (Index x = 0; x < w; ++x)
      for (Index y = 0; y < h; ++y) order.push_back(y * w + x);
  } else {
    for (Index p = 0; p < h * w; ++p) order.push_back(p);
  }
  if (direction == ScanDirection::RightLeft || direction == ScanDirection::BottomTop) {
    std::reverse(order.begin(), order.end());
  }
  return order;
}

Tensor directional_scan_tokens(const Tensor& tokens, Index h, Index w, const SSMParams& params,
                               const SelectiveInputs& inputs, ScanDirection direction) {
  if (tokens.rank() != 2 || tokens.shape()[0] != h * w) {
    throw DimensionError("tokens " + to_string(tokens.shape()) + " do not cover a " + std::to_string(h) + "x" +
                         std::to_string(w) + " map");
  }
  if (direction == ScanDirection::LeftRight) return selective_scan(tokens, params, inputs);
  const std::vector<Index> order = scan_order(h, w, direction);
  std::vector<Index> inverse(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inverse[static_cast<std::size_t>(order[k])] = static_cast<Index>(k);
  const SelectiveInputs permuted{index_select(inputs.delta, 0, order), index_select(inputs.B, 0, order),
                                 index_select(inputs.C, 0, order)};
  const Tensor y = selective_scan(index_select(tokens, 0, order), params, permuted);
  return index_select(y, 0, inverse);
}

Tensor directional_scan_2d(const Tensor& x, const SSMParams& params, const SelectiveInputs& inputs,
                           ScanDirection direction) {
  if (x.rank() != 3) throw DimensionError("directional scan expects [C,H,W], got " + to_string(x.shape()));
  const Index h = x.shape()[1], w = x.shape()[2];
  return from_tokens(directional_scan_tokens(to_tokens(x), h, w, params, inputs, direction), h, w);
}

Tensor positive_step(const Tensor& raw) { return softplus(raw) + kDeltaFloor; }

MambaMixer MambaMixer::init(Index channels, Index state_size, Rng& rng, bool zero_out_proj) {
  const Index inner = channels;
  MambaMixer m;
  m.norm = ChannelNorm::init(channels);
  m.in_proj = Pointwise::init(channels, 2 * inner, rng);
  m.delta_proj = Pointwise::init(inner, inner, rng, 0.5);
  m.b_proj = Pointwise::init(inner, state_size, rng);
  m.c_proj = Pointwise::init(inner, state_size, rng);
  Eigen::VectorXd alog(inner * state_size);
  for (Index c = 0; c < inner; ++c)
    for (Index s = 0; s < state_size; ++s) alog[c * state_size + s] = std::log(static_cast<double>(s + 1));
  m.a_log = Tensor({inner, state_size}, std::move(alog), true);
  m.d = Tensor::full({inner}, 1.0, true);
  m.out_proj = zero_out_proj ? Pointwise::zeros(inner, channels) : Pointwise::init(inner, channels, rng, 0.5);
  return m;
}

SSMParams MambaMixer::ssm() const { return {-exp(a_log), d}; }

Tensor MambaMixer::operator()(const Tensor& x) const {
  if (x.rank() != 3 || x.shape()[0] != channels()) {
    throw DimensionError("mamba mixer expects [" + std::to_string(channels()) + ",H,W], got " + to_string(x.shape()));
  }
  const Index h = x.shape()[1], w = x.shape()[2];
  const Index n = inner();
  const Tensor tokens = to_tokens(norm(x));
  const Tensor proj = in_proj.apply_tokens(tokens);
  const Tensor xi = narrow(proj, 1, 0, n);
  const Tensor z = narrow(proj, 1, n, n);
  const SelectiveInputs sel{positive_step(delta_proj.apply_tokens(xi)), b_proj.apply_tokens(xi),
                            c_proj.apply_tokens(xi)};
  const Tensor y = directional_scan_tokens(xi, h, w, ssm(), sel, ScanDirection::LeftRight);
  const Tensor out = out_proj.apply_tokens(y * sigmoid(z));
  return x + from_tokens(out, h, w);
}

std::vector<Tensor> MambaMixer::parameters() const {
  std::vector<Tensor> p;
  append(p, norm.parameters());
  append(p, in_proj.parameters());
  append(p, delta_proj.parameters());
  append(p, b_proj.parameters());
  append(p, c_proj.parameters());
  p.push_back(a_log);
  p.push_back(d);
  append(p, out_proj.parameters());
  return p;
}

}  // namespace mdsf
