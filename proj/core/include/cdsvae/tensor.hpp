#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdsvae::ad {

using Dims = std::vector<int>;

std::size_t numel(const Dims& dims);
std::string to_string(const Dims& dims);

struct Node;

// Dense row-major float tensor. Copies share storage; use clone() for a deep
// copy. A tensor created while a Tape is active (and depending on something
// that requires grad) is recorded on that tape.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Dims dims);
  static Tensor full(Dims dims, float value);
  static Tensor from(Dims dims, std::vector<float> values);
  static Tensor scalar(float value);
  // Leaf that accumulates gradients.
  static Tensor parameter(Dims dims, std::vector<float> values);

  const Dims& dims() const;
  int dim(int axis) const;
  int rank() const;
  std::size_t size() const;

  std::span<const float> data() const;
  // Mutating the values of a recorded tensor invalidates its tape.
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  // Allocates a zero gradient buffer if absent, otherwise zero-fills it.
  void zero_grad();
  void clear_grad();

  // Position on the tape that produced it, if any.
  std::optional<std::size_t> node_id() const;
  const char* op_name() const;

  // Same values, no history, no grad requirement.
  Tensor detach() const;
  Tensor clone() const;

  bool defined() const { return node_ != nullptr; }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

// Ordered record of the operations of one forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const std::shared_ptr<Node>& node);
  // Populates grads of everything `loss` depends on. Consumes the tape.
  void backward(const Tensor& loss);
  bool consumed() const { return consumed_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<std::shared_ptr<Node>> records_;
  bool consumed_ = false;
};

// Makes a tape the active one for the current thread while in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Runs backward on `loss` and guarantees that every tensor in `params` ends
// with a gradient buffer (zeros when unreachable from the loss).
void backward(Tape& tape, const Tensor& loss, std::span<Tensor> params);

// Escape hatch for defining an op outside this library. `backward` receives
// the output gradient and must accumulate into the inputs' mutable_grad().
using BackwardFn = std::function<void(std::span<const float> out_grad)>;
Tensor make_op(const char* name, Dims dims, std::vector<float> values,
               std::vector<Tensor> inputs, BackwardFn backward);

// ---- elementwise and linear algebra ------------------------------------

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [M,K] * w [K,N] + b [N] as a single node.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
// LSTM cell update from pre-activation gates [B,4H] ordered (i, f, g, o) and
// the previous cell state [B,H]. Returns [B,2H] holding (h, c).
Tensor lstm_gates(const Tensor& gates, const Tensor& c_prev);
// Binary ops broadcast when one operand's dims are a trailing suffix of the
// other's (a rank-0 scalar is a suffix of everything).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float c);
Tensor add_scalar(const Tensor& x, float c);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, float lo, float hi);

// ---- reductions ----------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis);
// Numerically stable log(sum(exp(x))) along `axis`.
Tensor logsumexp(const Tensor& x, int axis);

// ---- shape ---------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int length);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Dims dims);
// Repeats `x` over leading dimensions so that it has `dims`.
Tensor broadcast_to(const Tensor& x, Dims dims);

}  // namespace cdsvae::ad
