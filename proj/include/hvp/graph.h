#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "hvp/tensor.h"

namespace hvp {

class Tape;

// Handle to a node on a tape. Cheap to copy; invalidated by Tape::reset().
class Value {
public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  bool defined() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Tensor& val() const;
  double scalar() const { return val()[0]; }

private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Named trainable tensor with persistent gradient and Adam state.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m, adam_v;

  explicit Param(std::string n = "", Tensor v = Tensor())
      : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
    grad.fill(0.0);
  }
};

// Result of one backward pass: node id -> grad node id (-1 if none).
struct GradMap {
  std::vector<int> grad_of;
  Tape* tape = nullptr;

  bool has(Value v) const {
    return v.id() < static_cast<int>(grad_of.size()) && grad_of[v.id()] >= 0;
  }
  Value grad(Value v) const;
};

struct BwCtx;
using BackwardFn = std::function<void(BwCtx&)>;

// Reverse-mode tape with eager evaluation. Backward passes record their own
// operations on the tape, so gradients are Values and can be differentiated
// again (needed for the gradient-penalty term of the critic loss).
class Tape {
public:
  Value input(Tensor v, bool requires_grad = false);
  Value scalar_input(double v, bool requires_grad = false) {
    return input(Tensor::scalar(v), requires_grad);
  }

  // Binds a Param to this tape, once; repeated calls return the same node.
  Value use(Param& p);

  Value make(Tensor out, std::vector<int> inputs, BackwardFn bw);

  // Backward from a scalar root. May be called multiple times on one tape;
  // each call uses a fresh gradient table.
  GradMap backward(Value root);

  // Adds scale * d(root)/d(param) into Param::grad for every bound param.
  void accumulate_param_grads(const GradMap& gm, double scale = 1.0);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  size_t num_nodes() const { return nodes_.size(); }
  size_t live_bytes() const { return live_bytes_; }

  void reset();

private:
  friend struct BwCtx;
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<Param*, int> bound_;
  size_t live_bytes_ = 0;
};

// Passed to backward closures; accumulates into the active gradient table.
struct BwCtx {
  Tape& tape;
  Value out;       // node being differentiated
  Value out_grad;  // upstream gradient
  GradMap* table;

  bool needs(Value in) const { return tape.requires_grad(in.id()); }
  void add(Value in, Value g);
};

inline const Tensor& Value::val() const { return tape_->value(id_); }
inline Value GradMap::grad(Value v) const { return Value(tape, grad_of[v.id()]); }

// ---- Differentiable operations (all support repeated differentiation) ----

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);                  // elementwise
Value affine(Value a, double s, double c);    // s*a + c
Value neg(Value a);
Value smul(Value s, Value a);                 // scalar Value times tensor
Value recip(Value a);
Value sqrt_(Value a);
Value sigmoid(Value a);
Value tanh_(Value a);
Value leaky_relu(Value a, double slope = 0.1);
Value concat(Value a, Value b);               // flat concatenation
Value slice(Value a, int64_t off, int64_t len);
Value pad1d(Value a, int64_t off, int64_t total);
Value sum(Value a);                           // -> scalar
Value mean(Value a);                          // -> scalar
Value dot(Value a, Value b);                  // -> scalar
Value matvec(Value w, Value x);               // [M,N] x [N] -> [M]
Value matvec_t(Value w, Value y);             // [M,N]^T x [M] -> [N]
Value outer(Value u, Value v);                // [M] x [N] -> [M,N]
Value reshape(Value a, std::vector<int> shape);

// Mean squared error over all elements -> scalar.
Value mse(Value a, Value b);

// ---- First-order operations (second differentiation unsupported) ----

// x [C,H,W], w [O,C,K,K], b [O] (pass undefined Value for no bias).
Value conv2d(Value x, Value w, Value b, int stride, int pad);
Value upsample2(Value x);                     // nearest-neighbour x2
Value cmul(Value x, Value m);                 // [C,H,W] * [1,H,W], broadcast over C

}  // namespace hvp
