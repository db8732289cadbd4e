#include "hvp/graph.h"

#include <Eigen/Dense>
#include <cmath>

namespace hvp {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// ---- Tape ----

Value Tape::input(Tensor v, bool requires_grad) {
  live_bytes_ += static_cast<size_t>(v.size()) * sizeof(double);
  nodes_.push_back(Node{std::move(v), {}, nullptr, requires_grad});
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Value Tape::use(Param& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return Value(this, it->second);
  Value v = input(p.value, true);
  bound_.emplace(&p, v.id());
  return v;
}

Value Tape::make(Tensor out, std::vector<int> inputs, BackwardFn bw) {
  bool rg = false;
  for (int in : inputs) rg = rg || nodes_[static_cast<size_t>(in)].requires_grad;
  live_bytes_ += static_cast<size_t>(out.size()) * sizeof(double);
  nodes_.push_back(Node{std::move(out), std::move(inputs), rg ? std::move(bw) : nullptr, rg});
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

void BwCtx::add(Value in, Value g) {
  if (!tape.requires_grad(in.id())) return;
  int& slot = table->grad_of[static_cast<size_t>(in.id())];
  if (slot < 0)
    slot = g.id();
  else
    slot = hvp::add(Value(&tape, slot), g).id();
}

GradMap Tape::backward(Value root) {
  if (root.val().size() != 1) throw std::logic_error("backward: root must be scalar");
  const int n0 = static_cast<int>(nodes_.size());
  GradMap gm;
  gm.tape = this;
  gm.grad_of.assign(static_cast<size_t>(n0), -1);
  if (!nodes_[static_cast<size_t>(root.id())].requires_grad) return gm;

  std::vector<char> needed(static_cast<size_t>(n0), 0);
  needed[static_cast<size_t>(root.id())] = 1;
  for (int id = root.id(); id >= 0; --id) {
    if (!needed[static_cast<size_t>(id)]) continue;
    for (int in : nodes_[static_cast<size_t>(id)].inputs)
      if (nodes_[static_cast<size_t>(in)].requires_grad) needed[static_cast<size_t>(in)] = 1;
  }

  gm.grad_of[static_cast<size_t>(root.id())] = scalar_input(1.0).id();
  for (int id = root.id(); id >= 0; --id) {
    if (!needed[static_cast<size_t>(id)] || gm.grad_of[static_cast<size_t>(id)] < 0) continue;
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.backward) continue;
    BwCtx ctx{*this, Value(this, id), Value(this, gm.grad_of[static_cast<size_t>(id)]), &gm};
    n.backward(ctx);
  }
  return gm;
}

void Tape::accumulate_param_grads(const GradMap& gm, double scale) {
  for (auto& [param, id] : bound_) {
    if (id >= static_cast<int>(gm.grad_of.size()) || gm.grad_of[static_cast<size_t>(id)] < 0)
      continue;
    if (!param->grad.same_shape(param->value)) param->zero_grad();
    const Tensor& g = value(gm.grad_of[static_cast<size_t>(id)]);
    for (int64_t i = 0; i < g.size(); ++i) param->grad[i] += scale * g[i];
  }
}

void Tape::reset() {
  nodes_.clear();
  bound_.clear();
  live_bytes_ = 0;
}

// ---- helpers ----

namespace {

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (!a.val().same_shape(b.val()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.val().shape_str() +
                                " vs " + b.val().shape_str());
}

[[noreturn]] void no_second_order(const char* op) {
  throw std::logic_error(std::string(op) + ": second-order differentiation not supported");
}

}  // namespace

// ---- differentiable ops ----

Value add(Value a, Value b) {
  check_same_shape(a, b, "add");
  Tensor out(a.val().shape());
  const Tensor &ta = a.val(), &tb = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
  return a.tape()->make(std::move(out), {a.id(), b.id()}, [a, b](BwCtx& ctx) {
    ctx.add(a, ctx.out_grad);
    ctx.add(b, ctx.out_grad);
  });
}

Value sub(Value a, Value b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.val().shape());
  const Tensor &ta = a.val(), &tb = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
  return a.tape()->make(std::move(out), {a.id(), b.id()}, [a, b](BwCtx& ctx) {
    ctx.add(a, ctx.out_grad);
    ctx.add(b, neg(ctx.out_grad));
  });
}

Value mul(Value a, Value b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.val().shape());
  const Tensor &ta = a.val(), &tb = b.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
  return a.tape()->make(std::move(out), {a.id(), b.id()}, [a, b](BwCtx& ctx) {
    if (ctx.needs(a)) ctx.add(a, mul(ctx.out_grad, b));
    if (ctx.needs(b)) ctx.add(b, mul(ctx.out_grad, a));
  });
}

Value affine(Value a, double s, double c) {
  Tensor out(a.val().shape());
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = s * ta[i] + c;
  return a.tape()->make(std::move(out), {a.id()},
                        [a, s](BwCtx& ctx) { ctx.add(a, affine(ctx.out_grad, s, 0.0)); });
}

Value neg(Value a) { return affine(a, -1.0, 0.0); }

Value smul(Value s, Value a) {
  if (s.val().size() != 1) throw std::invalid_argument("smul: scale must be scalar");
  Tensor out(a.val().shape());
  const double sv = s.val()[0];
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = sv * ta[i];
  return a.tape()->make(std::move(out), {s.id(), a.id()}, [s, a](BwCtx& ctx) {
    if (ctx.needs(s)) ctx.add(s, dot(ctx.out_grad, a));
    if (ctx.needs(a)) ctx.add(a, smul(s, ctx.out_grad));
  });
}

Value recip(Value a) {
  Tensor out(a.val().shape());
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / ta[i];
  return a.tape()->make(std::move(out), {a.id()}, [a](BwCtx& ctx) {
    Value r = ctx.out;
    ctx.add(a, mul(ctx.out_grad, neg(mul(r, r))));
  });
}

Value sqrt_(Value a) {
  Tensor out(a.val().shape());
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(ta[i]);
  return a.tape()->make(std::move(out), {a.id()}, [a](BwCtx& ctx) {
    ctx.add(a, mul(ctx.out_grad, affine(recip(ctx.out), 0.5, 0.0)));
  });
}

Value sigmoid(Value a) {
  Tensor out(a.val().shape());
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-ta[i]));
  return a.tape()->make(std::move(out), {a.id()}, [a](BwCtx& ctx) {
    Value s = ctx.out;
    ctx.add(a, mul(ctx.out_grad, mul(s, affine(s, -1.0, 1.0))));
  });
}

Value tanh_(Value a) {
  Tensor out(a.val().shape());
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ta[i]);
  return a.tape()->make(std::move(out), {a.id()}, [a](BwCtx& ctx) {
    Value t = ctx.out;
    ctx.add(a, mul(ctx.out_grad, affine(mul(t, t), -1.0, 1.0)));
  });
}

Value leaky_relu(Value a, double slope) {
  Tensor out(a.val().shape());
  Tensor mask(a.val().shape());
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < out.size(); ++i) {
    bool pos = ta[i] > 0.0;
    out[i] = pos ? ta[i] : slope * ta[i];
    mask[i] = pos ? 1.0 : slope;
  }
  return a.tape()->make(std::move(out), {a.id()}, [a, mask = std::move(mask)](BwCtx& ctx) {
    Value m = ctx.tape.input(mask, false);
    ctx.add(a, mul(ctx.out_grad, m));
  });
}

Value concat(Value a, Value b) {
  const Tensor &ta = a.val(), &tb = b.val();
  Tensor out({static_cast<int>(ta.size() + tb.size())});
  for (int64_t i = 0; i < ta.size(); ++i) out[i] = ta[i];
  for (int64_t i = 0; i < tb.size(); ++i) out[ta.size() + i] = tb[i];
  int64_t na = ta.size(), nb = tb.size();
  return a.tape()->make(std::move(out), {a.id(), b.id()}, [a, b, na, nb](BwCtx& ctx) {
    if (ctx.needs(a)) ctx.add(a, reshape(slice(ctx.out_grad, 0, na), a.val().shape()));
    if (ctx.needs(b)) ctx.add(b, reshape(slice(ctx.out_grad, na, nb), b.val().shape()));
  });
}

Value slice(Value a, int64_t off, int64_t len) {
  const Tensor& ta = a.val();
  if (off < 0 || off + len > ta.size()) throw std::invalid_argument("slice: out of range");
  Tensor out({static_cast<int>(len)});
  for (int64_t i = 0; i < len; ++i) out[i] = ta[off + i];
  int64_t total = ta.size();
  return a.tape()->make(std::move(out), {a.id()}, [a, off, total](BwCtx& ctx) {
    ctx.add(a, reshape(pad1d(ctx.out_grad, off, total), a.val().shape()));
  });
}

Value pad1d(Value a, int64_t off, int64_t total) {
  const Tensor& ta = a.val();
  Tensor out({static_cast<int>(total)});
  for (int64_t i = 0; i < ta.size(); ++i) out[off + i] = ta[i];
  int64_t len = ta.size();
  return a.tape()->make(std::move(out), {a.id()}, [a, off, len](BwCtx& ctx) {
    ctx.add(a, reshape(slice(ctx.out_grad, off, len), a.val().shape()));
  });
}

Value sum(Value a) {
  double s = 0.0;
  const Tensor& ta = a.val();
  for (int64_t i = 0; i < ta.size(); ++i) s += ta[i];
  return a.tape()->make(Tensor::scalar(s), {a.id()}, [a](BwCtx& ctx) {
    Value g = ctx.out_grad;
    Tensor ones = Tensor::full(a.val().shape(), 1.0);
    ctx.add(a, smul(g, ctx.tape.input(std::move(ones), false)));
  });
}

Value mean(Value a) { return affine(sum(a), 1.0 / static_cast<double>(a.val().size()), 0.0); }

Value dot(Value a, Value b) {
  if (a.val().size() != b.val().size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  const Tensor &ta = a.val(), &tb = b.val();
  for (int64_t i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
  return a.tape()->make(Tensor::scalar(s), {a.id(), b.id()}, [a, b](BwCtx& ctx) {
    if (ctx.needs(a)) ctx.add(a, reshape(smul(ctx.out_grad, b), a.val().shape()));
    if (ctx.needs(b)) ctx.add(b, reshape(smul(ctx.out_grad, a), b.val().shape()));
  });
}

Value matvec(Value w, Value x) {
  const Tensor &tw = w.val(), &tx = x.val();
  if (tw.ndim() != 2 || tw.dim(1) != static_cast<int>(tx.size()))
    throw std::invalid_argument("matvec: shape mismatch");
  int M = tw.dim(0), N = tw.dim(1);
  Tensor out({M});
  ConstMatMap W(tw.data(), M, N);
  ConstVecMap X(tx.data(), N);
  VecMap(out.data(), M) = W * X;
  return w.tape()->make(std::move(out), {w.id(), x.id()}, [w, x](BwCtx& ctx) {
    if (ctx.needs(w)) ctx.add(w, outer(ctx.out_grad, x));
    if (ctx.needs(x)) ctx.add(x, matvec_t(w, ctx.out_grad));
  });
}

Value matvec_t(Value w, Value y) {
  const Tensor &tw = w.val(), &ty = y.val();
  if (tw.ndim() != 2 || tw.dim(0) != static_cast<int>(ty.size()))
    throw std::invalid_argument("matvec_t: shape mismatch");
  int M = tw.dim(0), N = tw.dim(1);
  Tensor out({N});
  ConstMatMap W(tw.data(), M, N);
  ConstVecMap Y(ty.data(), M);
  VecMap(out.data(), N) = W.transpose() * Y;
  return w.tape()->make(std::move(out), {w.id(), y.id()}, [w, y](BwCtx& ctx) {
    if (ctx.needs(w)) ctx.add(w, outer(y, ctx.out_grad));
    if (ctx.needs(y)) ctx.add(y, matvec(w, ctx.out_grad));
  });
}

Value outer(Value u, Value v) {
  const Tensor &tu = u.val(), &tv = v.val();
  int M = static_cast<int>(tu.size()), N = static_cast<int>(tv.size());
  Tensor out({M, N});
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) out[static_cast<int64_t>(i) * N + j] = tu[i] * tv[j];
  return u.tape()->make(std::move(out), {u.id(), v.id()}, [u, v](BwCtx& ctx) {
    if (ctx.needs(u)) ctx.add(u, matvec(ctx.out_grad, v));
    if (ctx.needs(v)) ctx.add(v, matvec_t(ctx.out_grad, u));
  });
}

Value reshape(Value a, std::vector<int> shape) {
  Tensor out = a.val().reshaped(std::move(shape));
  return a.tape()->make(std::move(out), {a.id()}, [a](BwCtx& ctx) {
    ctx.add(a, reshape(ctx.out_grad, a.val().shape()));
  });
}

Value mse(Value a, Value b) {
  Value d = sub(a, b);
  return mean(mul(d, d));
}

// ---- convolution ----

namespace {

struct ConvGeom {
  int C, H, W, O, K, stride, pad, Ho, Wo;
};

ConvGeom conv_geom(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.ndim() != 3 || w.ndim() != 4) throw std::invalid_argument("conv2d: bad ranks");
  ConvGeom g;
  g.C = x.dim(0);
  g.H = x.dim(1);
  g.W = x.dim(2);
  g.O = w.dim(0);
  g.K = w.dim(2);
  if (w.dim(1) != g.C || w.dim(3) != g.K) throw std::invalid_argument("conv2d: weight shape");
  g.stride = stride;
  g.pad = pad;
  g.Ho = (g.H + 2 * pad - g.K) / stride + 1;
  g.Wo = (g.W + 2 * pad - g.K) / stride + 1;
  if (g.Ho <= 0 || g.Wo <= 0) throw std::invalid_argument("conv2d: empty output");
  return g;
}

// cols is (C*K*K) x (Ho*Wo)
Tensor im2col(const Tensor& x, const ConvGeom& g) {
  Tensor cols({g.C * g.K * g.K, g.Ho * g.Wo});
  for (int c = 0; c < g.C; ++c)
    for (int ky = 0; ky < g.K; ++ky)
      for (int kx = 0; kx < g.K; ++kx) {
        int row = (c * g.K + ky) * g.K + kx;
        double* dst = cols.data() + static_cast<int64_t>(row) * g.Ho * g.Wo;
        for (int oy = 0; oy < g.Ho; ++oy) {
          int iy = oy * g.stride + ky - g.pad;
          for (int ox = 0; ox < g.Wo; ++ox) {
            int ix = ox * g.stride + kx - g.pad;
            bool in = iy >= 0 && iy < g.H && ix >= 0 && ix < g.W;
            dst[oy * g.Wo + ox] = in ? x.at(c, iy, ix) : 0.0;
          }
        }
      }
  return cols;
}

void col2im_add(const Tensor& cols, const ConvGeom& g, Tensor& x) {
  for (int c = 0; c < g.C; ++c)
    for (int ky = 0; ky < g.K; ++ky)
      for (int kx = 0; kx < g.K; ++kx) {
        int row = (c * g.K + ky) * g.K + kx;
        const double* src = cols.data() + static_cast<int64_t>(row) * g.Ho * g.Wo;
        for (int oy = 0; oy < g.Ho; ++oy) {
          int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.H) continue;
          for (int ox = 0; ox < g.Wo; ++ox) {
            int ix = ox * g.stride + kx - g.pad;
            if (ix < 0 || ix >= g.W) continue;
            x.at(c, iy, ix) += src[oy * g.Wo + ox];
          }
        }
      }
}

}  // namespace

Value conv2d(Value x, Value w, Value b, int stride, int pad) {
  ConvGeom g = conv_geom(x.val(), w.val(), stride, pad);
  Tensor cols = im2col(x.val(), g);
  Tensor out({g.O, g.Ho, g.Wo});
  {
    ConstMatMap W(w.val().data(), g.O, g.C * g.K * g.K);
    ConstMatMap P(cols.data(), g.C * g.K * g.K, g.Ho * g.Wo);
    MatMap Y(out.data(), g.O, g.Ho * g.Wo);
    Y = W * P;
    if (b.defined()) {
      ConstVecMap B(b.val().data(), g.O);
      Y.colwise() += B;
    }
  }
  std::vector<int> ins = {x.id(), w.id()};
  if (b.defined()) ins.push_back(b.id());
  return x.tape()->make(
      std::move(out), std::move(ins), [x, w, b, g, cols = std::move(cols)](BwCtx& ctx) {
        Value gy = ctx.out_grad;
        if (ctx.needs(x)) {
          // dX = col2im(W^T * gY)
          Tensor dx(x.val().shape());
          Tensor dcols({g.C * g.K * g.K, g.Ho * g.Wo});
          ConstMatMap W(w.val().data(), g.O, g.C * g.K * g.K);
          ConstMatMap GY(gy.val().data(), g.O, g.Ho * g.Wo);
          MatMap DC(dcols.data(), g.C * g.K * g.K, g.Ho * g.Wo);
          DC.noalias() = W.transpose() * GY;
          col2im_add(dcols, g, dx);
          ctx.add(x, ctx.tape.make(std::move(dx), {gy.id(), w.id()},
                                   [](BwCtx&) { no_second_order("conv2d_dx"); }));
        }
        if (ctx.needs(w)) {
          Tensor dw(w.val().shape());
          ConstMatMap GY(gy.val().data(), g.O, g.Ho * g.Wo);
          ConstMatMap P(cols.data(), g.C * g.K * g.K, g.Ho * g.Wo);
          MatMap DW(dw.data(), g.O, g.C * g.K * g.K);
          DW.noalias() = GY * P.transpose();
          ctx.add(w, ctx.tape.make(std::move(dw), {gy.id(), x.id()},
                                   [](BwCtx&) { no_second_order("conv2d_dw"); }));
        }
        if (b.defined() && ctx.needs(b)) {
          Tensor db({g.O});
          const Tensor& tg = gy.val();
          for (int o = 0; o < g.O; ++o) {
            double s = 0.0;
            for (int i = 0; i < g.Ho * g.Wo; ++i)
              s += tg[static_cast<int64_t>(o) * g.Ho * g.Wo + i];
            db[o] = s;
          }
          ctx.add(b, ctx.tape.make(std::move(db), {gy.id()},
                                   [](BwCtx&) { no_second_order("conv2d_db"); }));
        }
      });
}

Value upsample2(Value x) {
  const Tensor& tx = x.val();
  if (tx.ndim() != 3) throw std::invalid_argument("upsample2: expects CHW");
  int C = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
  Tensor out({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < 2 * H; ++y)
      for (int xx = 0; xx < 2 * W; ++xx) out.at(c, y, xx) = tx.at(c, y / 2, xx / 2);
  return x.tape()->make(std::move(out), {x.id()}, [x, C, H, W](BwCtx& ctx) {
    Tensor dx({C, H, W});
    const Tensor& g = ctx.out_grad.val();
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx) dx.at(c, y / 2, xx / 2) += g.at(c, y, xx);
    ctx.add(x, ctx.tape.make(std::move(dx), {ctx.out_grad.id()},
                             [](BwCtx&) { no_second_order("upsample2_dx"); }));
  });
}

Value cmul(Value x, Value m) {
  const Tensor &tx = x.val(), &tm = m.val();
  if (tx.ndim() != 3 || tm.ndim() != 3 || tm.dim(0) != 1 || tm.dim(1) != tx.dim(1) ||
      tm.dim(2) != tx.dim(2))
    throw std::invalid_argument("cmul: shape mismatch");
  int C = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
  Tensor out({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H * W; ++i)
      out[static_cast<int64_t>(c) * H * W + i] =
          tx[static_cast<int64_t>(c) * H * W + i] * tm[i];
  return x.tape()->make(std::move(out), {x.id(), m.id()}, [x, m, C, H, W](BwCtx& ctx) {
    const Tensor& g = ctx.out_grad.val();
    if (ctx.needs(x)) {
      Tensor dx({C, H, W});
      const Tensor& tm2 = m.val();
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H * W; ++i)
          dx[static_cast<int64_t>(c) * H * W + i] =
              g[static_cast<int64_t>(c) * H * W + i] * tm2[i];
      ctx.add(x, ctx.tape.make(std::move(dx), {ctx.out_grad.id(), m.id()},
                               [](BwCtx&) { no_second_order("cmul_dx"); }));
    }
    if (ctx.needs(m)) {
      Tensor dm({1, H, W});
      const Tensor& tx2 = x.val();
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H * W; ++i)
          dm[i] += g[static_cast<int64_t>(c) * H * W + i] *
                   tx2[static_cast<int64_t>(c) * H * W + i];
      ctx.add(m, ctx.tape.make(std::move(dm), {ctx.out_grad.id(), x.id()},
                               [](BwCtx&) { no_second_order("cmul_dm"); }));
    }
  });
}

}  // namespace hvp
