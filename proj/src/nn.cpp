#include "hvp/nn.h"

#include <cmath>

namespace hvp {

namespace init {

Tensor normal(std::vector<int> shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor glorot(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  return normal(std::move(shape), std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

Tensor he(std::vector<int> shape, int fan_in, Rng& rng) {
  return normal(std::move(shape), std::sqrt(2.0 / fan_in), rng);
}

}  // namespace init

Dense::Dense(const std::string& name, int in_dim, int out_dim, Rng& rng, bool relu_gain)
    : in(in_dim), out(out_dim) {
  Tensor wt = relu_gain ? init::he({out_dim, in_dim}, in_dim, rng)
                        : init::glorot({out_dim, in_dim}, in_dim, out_dim, rng);
  w = Param(name + ".w", std::move(wt));
  b = Param(name + ".b", init::zeros({out_dim}));
}

Value Dense::operator()(Tape& t, Value x) const {
  Value xf = x.val().ndim() == 1 ? x : reshape(x, {static_cast<int>(x.val().size())});
  return add(matvec(t.use(const_cast<Param&>(w)), xf), t.use(const_cast<Param&>(b)));
}

void Dense::params(ParamList& out_list) {
  out_list.push_back(&w);
  out_list.push_back(&b);
}

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel,
               int stride_, int pad_, Rng& rng, bool relu_gain)
    : in_ch(in_channels), out_ch(out_channels), k(kernel), stride(stride_), pad(pad_) {
  int fan_in = in_channels * kernel * kernel;
  Tensor wt = relu_gain
                  ? init::he({out_channels, in_channels, kernel, kernel}, fan_in, rng)
                  : init::glorot({out_channels, in_channels, kernel, kernel}, fan_in,
                                 out_channels * kernel * kernel, rng);
  w = Param(name + ".w", std::move(wt));
  b = Param(name + ".b", init::zeros({out_channels}));
}

Value Conv2d::operator()(Tape& t, Value x) const {
  return conv2d(x, t.use(const_cast<Param&>(w)), t.use(const_cast<Param&>(b)), stride, pad);
}

void Conv2d::params(ParamList& out_list) {
  out_list.push_back(&w);
  out_list.push_back(&b);
}

LSTMCell::LSTMCell(const std::string& name, int input_dim, int hidden_dim, Rng& rng)
    : input(input_dim), hidden(hidden_dim) {
  wx = Param(name + ".wx", init::glorot({4 * hidden_dim, input_dim}, input_dim,
                                        4 * hidden_dim, rng));
  wh = Param(name + ".wh", init::glorot({4 * hidden_dim, hidden_dim}, hidden_dim,
                                        4 * hidden_dim, rng));
  Tensor bias = init::zeros({4 * hidden_dim});
  for (int i = hidden_dim; i < 2 * hidden_dim; ++i) bias[i] = 1.0;  // forget gate
  b = Param(name + ".b", std::move(bias));
}

LSTMCell::State LSTMCell::step(Tape& t, Value x, State s) const {
  Value z = add(add(matvec(t.use(const_cast<Param&>(wx)), x),
                    matvec(t.use(const_cast<Param&>(wh)), s.h)),
                t.use(const_cast<Param&>(b)));
  Value i = sigmoid(slice(z, 0, hidden));
  Value f = sigmoid(slice(z, hidden, hidden));
  Value g = tanh_(slice(z, 2 * hidden, hidden));
  Value o = sigmoid(slice(z, 3 * hidden, hidden));
  Value c = add(mul(f, s.c), mul(i, g));
  Value h = mul(o, tanh_(c));
  return {h, c};
}

LSTMCell::State LSTMCell::zero_state(Tape& t) const {
  return {t.input(Tensor({hidden})), t.input(Tensor({hidden}))};
}

void LSTMCell::params(ParamList& out_list) {
  out_list.push_back(&wx);
  out_list.push_back(&wh);
  out_list.push_back(&b);
}

double global_grad_norm(const ParamList& ps) {
  double s = 0.0;
  for (const Param* p : ps)
    for (int64_t i = 0; i < p->grad.size(); ++i) s += p->grad[i] * p->grad[i];
  return std::sqrt(s);
}

void clip_global_norm(const ParamList& ps, double max_norm) {
  double n = global_grad_norm(ps);
  if (n <= max_norm || n == 0.0) return;
  double s = max_norm / n;
  for (Param* p : ps)
    for (int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= s;
}

void zero_grads(const ParamList& ps) {
  for (Param* p : ps) p->zero_grad();
}

void Adam::step(const ParamList& ps) {
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (Param* p : ps) {
    if (!p->adam_m.same_shape(p->value)) {
      p->adam_m = Tensor(p->value.shape());
      p->adam_v = Tensor(p->value.shape());
    }
    for (int64_t i = 0; i < p->value.size(); ++i) {
      double g = p->grad[i];
      p->adam_m[i] = beta1 * p->adam_m[i] + (1.0 - beta1) * g;
      p->adam_v[i] = beta2 * p->adam_v[i] + (1.0 - beta2) * g * g;
      double mhat = p->adam_m[i] / bc1;
      double vhat = p->adam_v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace hvp
