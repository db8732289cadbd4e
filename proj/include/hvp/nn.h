#pragma once

#include <string>
#include <vector>

#include "hvp/graph.h"
#include "hvp/rng.h"

namespace hvp {

using ParamList = std::vector<Param*>;

namespace init {
Tensor normal(std::vector<int> shape, double std, Rng& rng);
Tensor zeros(std::vector<int> shape);
// Glorot-style fan average, suits tanh/sigmoid/linear layers.
Tensor glorot(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);
// He-style, suits (leaky) relu layers.
Tensor he(std::vector<int> shape, int fan_in, Rng& rng);
}  // namespace init

struct Dense {
  Param w, b;
  int in = 0, out = 0;

  Dense() = default;
  Dense(const std::string& name, int in_dim, int out_dim, Rng& rng, bool relu_gain = false);

  Value operator()(Tape& t, Value x) const;
  void params(ParamList& out_list);
};

struct Conv2d {
  Param w, b;
  int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride_,
         int pad_, Rng& rng, bool relu_gain = true);

  Value operator()(Tape& t, Value x) const;
  void params(ParamList& out_list);
};

// Single LSTM cell; gate order [i, f, g, o], forget bias starts at 1.
struct LSTMCell {
  Param wx, wh, b;
  int input = 0, hidden = 0;

  LSTMCell() = default;
  LSTMCell(const std::string& name, int input_dim, int hidden_dim, Rng& rng);

  struct State {
    Value h, c;
  };
  State step(Tape& t, Value x, State s) const;
  State zero_state(Tape& t) const;
  void params(ParamList& out_list);
};

// Optimizer step support.
double global_grad_norm(const ParamList& ps);
void clip_global_norm(const ParamList& ps, double max_norm);
void zero_grads(const ParamList& ps);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;

  void step(const ParamList& ps);
};

}  // namespace hvp
