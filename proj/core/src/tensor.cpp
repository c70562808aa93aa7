#include "cdsvae/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "cdsvae/error.hpp"

namespace cdsvae::ad {

// Vector-width alignment keeps Eigen's reduction order independent of where
// the allocator happens to place a buffer, so results are bitwise repeatable.
using Storage = std::vector<float, Eigen::aligned_allocator<float>>;

struct Node {
  Dims dims;
  Storage data;
  Storage grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<Tensor> inputs;
  BackwardFn backward;
  std::optional<std::size_t> id;
  const Tape* tape = nullptr;
};

namespace {

thread_local Tape* g_active_tape = nullptr;

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void check_dims(const Dims& dims) {
  for (int d : dims) {
    if (d <= 0) throw DimensionError("non-positive extent in dims " + to_string(dims));
  }
}

void check_finite(const char* op, std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError(std::string(op) + ": axis out of range for rank " +
                         std::to_string(rank));
  }
  return axis;
}

// Splits dims around `axis` into (outer, len, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Dims& dims, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(dims[i]);
  s.len = static_cast<std::size_t>(dims[axis]);
  for (std::size_t i = axis + 1; i < dims.size(); ++i) {
    s.inner *= static_cast<std::size_t>(dims[i]);
  }
  return s;
}

bool is_suffix(const Dims& small, const Dims& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename Fwd, typename Dfdx>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Dfdx dfdx) {
  const auto in = x.data();
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Tensor xx = x;
  // dfdx sees (input, output) so ops like exp/tanh can reuse the output.
  auto holder = std::make_shared<std::vector<float>>(out);
  return make_op(name, x.dims(), std::move(out), {x},
                 [xx, holder, dfdx](std::span<const float> g) mutable {
                   auto gx = xx.mutable_grad();
                   const auto xv = xx.data();
                   const auto& yv = *holder;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     gx[i] += g[i] * dfdx(xv[i], yv[i]);
                   }
                 });
}

enum class Broadcast { kSame, kBSmall, kASmall };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dims() == b.dims()) return Broadcast::kSame;
  if (is_suffix(b.dims(), a.dims())) return Broadcast::kBSmall;
  if (is_suffix(a.dims(), b.dims())) return Broadcast::kASmall;
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a.dims()) +
                       " and " + to_string(b.dims()));
}

// Visits (out, a, b) flat indices; the smaller operand repeats per row.
template <typename F>
void for_each_index(Broadcast kind, std::size_t n, std::size_t na, std::size_t nb, F f) {
  if (kind == Broadcast::kSame) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
  } else if (kind == Broadcast::kBSmall) {
    for (std::size_t r = 0; r < n; r += nb) {
      for (std::size_t j = 0; j < nb; ++j) f(r + j, r + j, j);
    }
  } else {
    for (std::size_t r = 0; r < n; r += na) {
      for (std::size_t j = 0; j < na; ++j) f(r + j, j, r + j);
    }
  }
}

// Elementwise binary op with trailing-suffix broadcasting. `fwd(a,b)`;
// `da(a,b)` and `db(a,b)` are the partial derivatives.
template <typename Fwd, typename Da, typename Db>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  const Broadcast kind = broadcast_kind(name, a, b);
  const Dims out_dims = kind == Broadcast::kASmall ? b.dims() : a.dims();
  const std::size_t n = numel(out_dims);
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const float* av = a.data().data();
  const float* bv = b.data().data();
  std::vector<float> out(n);
  float* ov = out.data();
  for_each_index(kind, n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    ov[i] = fwd(av[ia], bv[ib]);
  });
  Tensor aa = a;
  Tensor bb = b;
  return make_op(name, out_dims, std::move(out), {a, b},
                 [aa, bb, da, db, kind, n, na, nb](std::span<const float> g) mutable {
                   const float* av = aa.data().data();
                   const float* bv = bb.data().data();
                   const float* gv = g.data();
                   if (aa.requires_grad()) {
                     float* ga = aa.mutable_grad().data();
                     for_each_index(kind, n, na, nb,
                                    [&](std::size_t i, std::size_t ia, std::size_t ib) {
                                      ga[ia] += gv[i] * da(av[ia], bv[ib]);
                                    });
                   }
                   if (bb.requires_grad()) {
                     float* gb = bb.mutable_grad().data();
                     for_each_index(kind, n, na, nb,
                                    [&](std::size_t i, std::size_t ia, std::size_t ib) {
                                      gb[ib] += gv[i] * db(av[ia], bv[ib]);
                                    });
                   }
                 });
}

}  // namespace

std::size_t numel(const Dims& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() : Tensor(Tensor::scalar(0.0f)) {}

Tensor::Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Dims dims) { return full(std::move(dims), 0.0f); }

Tensor Tensor::full(Dims dims, float value) {
  check_dims(dims);
  const std::size_t n = numel(dims);
  return from(std::move(dims), std::vector<float>(n, value));
}

Tensor Tensor::from(Dims dims, std::vector<float> values) {
  check_dims(dims);
  if (values.size() != numel(dims)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match dims " + to_string(dims));
  }
  check_finite("from", values);
  auto node = std::make_shared<Node>();
  node->dims = std::move(dims);
  node->data.assign(values.begin(), values.end());
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value) { return from({}, {value}); }

Tensor Tensor::parameter(Dims dims, std::vector<float> values) {
  Tensor t = from(std::move(dims), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Dims& Tensor::dims() const { return node_->dims; }
int Tensor::dim(int axis) const {
  return node_->dims.at(static_cast<std::size_t>(normalize_axis(axis, rank(), "dim")));
}
int Tensor::rank() const { return static_cast<int>(node_->dims.size()); }
std::size_t Tensor::size() const { return node_->data.size(); }
std::span<const float> Tensor::data() const { return node_->data; }
std::span<float> Tensor::mutable_data() { return node_->data; }

float Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor with dims " + to_string(dims()));
  return node_->data[0];
}

float Tensor::at(std::size_t flat_index) const { return node_->data.at(flat_index); }

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const float> Tensor::grad() const { return node_->grad; }

std::span<float> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0f); }
void Tensor::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

std::optional<std::size_t> Tensor::node_id() const { return node_->id; }
const char* Tensor::op_name() const { return node_->op; }

Tensor Tensor::detach() const {
  return from(node_->dims, std::vector<float>(node_->data.begin(), node_->data.end()));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->requires_grad = node_->requires_grad;
  t.node_->grad = node_->grad;
  return t;
}

// ---- Tape ------------------------------------------------------------------

void Tape::record(const std::shared_ptr<Node>& node) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  node->id = records_.size();
  node->tape = this;
  records_.push_back(node);
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  if (loss.rank() != 0) {
    throw ContractError("backward() needs a scalar loss, got dims " + to_string(loss.dims()));
  }
  const auto& root = loss.node();
  if (root->tape != this || !root->id) {
    throw ContractError("loss was not recorded on this tape");
  }
  Tensor(root).mutable_grad()[0] += 1.0f;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    Node& n = **it;
    if (!n.grad.empty() && n.backward) n.backward(n.grad);
  }
  for (auto& n : records_) {
    n->backward = nullptr;
    n->inputs.clear();
  }
  records_.clear();
  consumed_ = true;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(Tape& tape, const Tensor& loss, std::span<Tensor> params) {
  tape.backward(loss);
  for (auto& p : params) p.mutable_grad();
}

namespace {

Tensor make_node(const char* name, Dims dims, Storage values, std::vector<Tensor> inputs,
                 BackwardFn backward) {
  if (values.size() != numel(dims)) {
    throw DimensionError(std::string(name) + ": produced " + std::to_string(values.size()) +
                         " values for dims " + to_string(dims));
  }
  check_finite(name, values);
  auto node = std::make_shared<Node>();
  node->dims = std::move(dims);
  node->data = std::move(values);
  node->op = name;
  Tape* tape = g_active_tape;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (tape != nullptr && needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor make_op(const char* name, Dims dims, std::vector<float> values,
               std::vector<Tensor> inputs, BackwardFn backward) {
  return make_node(name, std::move(dims), Storage(values.begin(), values.end()), std::move(inputs),
                   std::move(backward));
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.dims()) + " and " +
                         to_string(b.dims()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Storage out(static_cast<std::size_t>(m) * n);
  MapMat(out.data(), m, n).noalias() =
      ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  Tensor aa = a, bb = b;
  return make_node("matmul", {m, n}, std::move(out), {a, b},
                 [aa, bb, m, k, n](std::span<const float> g) mutable {
                   ConstMapMat gm(g.data(), m, n);
                   if (aa.requires_grad()) {
                     MapMat(aa.mutable_grad().data(), m, k).noalias() +=
                         gm * ConstMapMat(bb.data().data(), k, n).transpose();
                   }
                   if (bb.requires_grad()) {
                     MapMat(bb.mutable_grad().data(), k, n).noalias() +=
                         ConstMapMat(aa.data().data(), m, k).transpose() * gm;
                   }
                 });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) ||
      b.dim(0) != w.dim(1)) {
    throw DimensionError("affine: incompatible shapes " + to_string(x.dims()) + ", " +
                         to_string(w.dims()) + " and " + to_string(b.dims()));
  }
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  Storage out(static_cast<std::size_t>(m) * n);
  MapMat om(out.data(), m, n);
  om.noalias() = ConstMapMat(x.data().data(), m, k) * ConstMapMat(w.data().data(), k, n);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.data().data(), n);
  Tensor xx = x, ww = w, bb = b;
  return make_node("affine", {m, n}, std::move(out), {x, w, b},
                 [xx, ww, bb, m, k, n](std::span<const float> g) mutable {
                   ConstMapMat gm(g.data(), m, n);
                   if (xx.requires_grad()) {
                     MapMat(xx.mutable_grad().data(), m, k).noalias() +=
                         gm * ConstMapMat(ww.data().data(), k, n).transpose();
                   }
                   if (ww.requires_grad()) {
                     MapMat(ww.mutable_grad().data(), k, n).noalias() +=
                         ConstMapMat(xx.data().data(), m, k).transpose() * gm;
                   }
                   if (bb.requires_grad()) {
                     Eigen::Map<Eigen::RowVectorXf>(bb.mutable_grad().data(), n) +=
                         gm.colwise().sum();
                   }
                 });
}

Tensor lstm_gates(const Tensor& gates, const Tensor& c_prev) {
  if (gates.rank() != 2 || c_prev.rank() != 2 || gates.dim(0) != c_prev.dim(0) ||
      gates.dim(1) != 4 * c_prev.dim(1)) {
    throw DimensionError("lstm_gates: incompatible shapes " + to_string(gates.dims()) + " and " +
                         to_string(c_prev.dims()));
  }
  const std::size_t batch = static_cast<std::size_t>(c_prev.dim(0));
  const std::size_t h = static_cast<std::size_t>(c_prev.dim(1));
  // Activated gates (i, f, g, o) and tanh(c) are kept for the backward pass.
  auto act = std::make_shared<std::vector<float>>(batch * 4 * h);
  auto tc = std::make_shared<std::vector<float>>(batch * h);
  std::vector<float> out(batch * 2 * h);
  const auto gv = gates.data();
  const auto cv = c_prev.data();
  auto sig = [](float v) { return 1.0f / (1.0f + std::exp(-v)); };
  for (std::size_t r = 0; r < batch; ++r) {
    const float* gr = gv.data() + r * 4 * h;
    float* ar = act->data() + r * 4 * h;
    for (std::size_t j = 0; j < h; ++j) {
      const float i = sig(gr[j]);
      const float f = sig(gr[h + j]);
      const float gg = std::tanh(gr[2 * h + j]);
      const float o = sig(gr[3 * h + j]);
      const float c = f * cv[r * h + j] + i * gg;
      const float t = std::tanh(c);
      ar[j] = i;
      ar[h + j] = f;
      ar[2 * h + j] = gg;
      ar[3 * h + j] = o;
      (*tc)[r * h + j] = t;
      out[r * 2 * h + j] = o * t;
      out[r * 2 * h + h + j] = c;
    }
  }
  Tensor gg_in = gates, cc = c_prev;
  return make_op("lstm_gates", {static_cast<int>(batch), static_cast<int>(2 * h)}, std::move(out),
                 {gates, c_prev},
                 [gg_in, cc, act, tc, batch, h](std::span<const float> g) mutable {
                   const auto cv = cc.data();
                   float* dg = gg_in.requires_grad() ? gg_in.mutable_grad().data() : nullptr;
                   float* dc = cc.requires_grad() ? cc.mutable_grad().data() : nullptr;
                   for (std::size_t r = 0; r < batch; ++r) {
                     const float* ar = act->data() + r * 4 * h;
                     for (std::size_t j = 0; j < h; ++j) {
                       const float i = ar[j], f = ar[h + j], gg = ar[2 * h + j], o = ar[3 * h + j];
                       const float t = (*tc)[r * h + j];
                       const float gh = g[r * 2 * h + j];
                       // Total gradient reaching c through both h and c outputs.
                       const float gc = g[r * 2 * h + h + j] + gh * o * (1.0f - t * t);
                       if (dg) {
                         float* d = dg + r * 4 * h;
                         d[j] += gc * gg * i * (1.0f - i);
                         d[h + j] += gc * cv[r * h + j] * f * (1.0f - f);
                         d[2 * h + j] += gc * i * (1.0f - gg * gg);
                         d[3 * h + j] += gh * t * o * (1.0f - o);
                       }
                       if (dc) dc[r * h + j] += gc * f;
                     }
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
      [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
      [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](float x, float y) { return x * y; }, [](float, float y) { return y; },
      [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](float x, float y) { return x / y; },
      [](float, float y) { return 1.0f / y; }, [](float x, float y) { return -x / (y * y); });
}

Tensor scale(const Tensor& x, float c) {
  return unary(
      "scale", x, [c](float v) { return c * v; }, [c](float, float) { return c; });
}

Tensor add_scalar(const Tensor& x, float c) {
  return unary(
      "add_scalar", x, [c](float v) { return v + c; }, [](float, float) { return 1.0f; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0f); }

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](float v) { return std::sqrt(v); },
      [](float, float y) { return 0.5f / y; });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  return unary(
      "clamp", x, [lo, hi](float v) { return std::clamp(v, lo, hi); },
      [lo, hi](float v, float) { return (v > lo && v < hi) ? 1.0f : 0.0f; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor xx = x;
  return make_op("sum", {}, {static_cast<float>(acc)}, {x},
                 [xx](std::span<const float> g) mutable {
                   for (float& v : xx.mutable_grad()) v += g[0];
                 });
}

Tensor sum(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "sum");
  const AxisSplit s = split_at(x.dims(), axis);
  Dims out_dims = x.dims();
  out_dims.erase(out_dims.begin() + axis);
  std::vector<double> acc(s.outer * s.inner, 0.0);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const float* row = xv.data() + (o * s.len + l) * s.inner;
      double* dst = acc.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
    }
  }
  std::vector<float> out(acc.begin(), acc.end());
  Tensor xx = x;
  return make_op("sum_axis", std::move(out_dims), std::move(out), {x},
                 [xx, s](std::span<const float> g) mutable {
                   auto gx = xx.mutable_grad();
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     for (std::size_t l = 0; l < s.len; ++l) {
                       float* row = gx.data() + (o * s.len + l) * s.inner;
                       const float* src = g.data() + o * s.inner;
                       for (std::size_t i = 0; i < s.inner; ++i) row[i] += src[i];
                     }
                   }
                 });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0f / static_cast<float>(x.size())); }

Tensor mean(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "mean");
  return scale(sum(x, axis), 1.0f / static_cast<float>(x.dim(axis)));
}

Tensor logsumexp(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.rank(), "logsumexp");
  const AxisSplit s = split_at(x.dims(), axis);
  Dims out_dims = x.dims();
  out_dims.erase(out_dims.begin() + axis);
  const auto xv = x.data();
  std::vector<float> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      float m = -std::numeric_limits<float>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) m = std::max(m, xv[(o * s.len + l) * s.inner + i]);
      double acc = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        acc += std::exp(static_cast<double>(xv[(o * s.len + l) * s.inner + i]) - m);
      }
      out[o * s.inner + i] = m + static_cast<float>(std::log(acc));
    }
  }
  auto saved = std::make_shared<std::vector<float>>(out);
  Tensor xx = x;
  return make_op("logsumexp", std::move(out_dims), std::move(out), {x},
                 [xx, s, saved](std::span<const float> g) mutable {
                   auto gx = xx.mutable_grad();
                   const auto xv = xx.data();
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     for (std::size_t i = 0; i < s.inner; ++i) {
                       const float lse = (*saved)[o * s.inner + i];
                       const float go = g[o * s.inner + i];
                       for (std::size_t l = 0; l < s.len; ++l) {
                         const std::size_t idx = (o * s.len + l) * s.inner + i;
                         gx[idx] += go * std::exp(xv[idx] - lse);
                       }
                     }
                   }
                 });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Dims& first = parts.front().dims();
  axis = normalize_axis(axis, static_cast<int>(first.size()), "concat");
  Dims out_dims = first;
  out_dims[axis] = 0;
  for (const auto& p : parts) {
    Dims a = p.dims(), b = first;
    if (a.size() != b.size()) {
      throw DimensionError("concat: rank mismatch " + to_string(a) + " vs " + to_string(b));
    }
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw DimensionError("concat: shape mismatch " + to_string(p.dims()) + " vs " +
                           to_string(first));
    }
    out_dims[axis] += p.dim(axis);
  }
  const AxisSplit s = split_at(out_dims, axis);
  std::vector<float> out(numel(out_dims));
  std::size_t offset = 0;
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    chunk[k] = static_cast<std::size_t>(parts[k].dim(axis)) * s.inner;
    const auto pv = parts[k].data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * chunk[k], chunk[k], out.data() + o * s.len * s.inner + offset);
    }
    offset += chunk[k];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  auto captured = inputs;
  const std::size_t row = s.len * s.inner;
  return make_op("concat", std::move(out_dims), std::move(out), std::move(inputs),
                 [captured, chunk, s, row](std::span<const float> g) mutable {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < captured.size(); ++k) {
                     if (captured[k].requires_grad()) {
                       auto gp = captured[k].mutable_grad();
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         const float* src = g.data() + o * row + off;
                         float* dst = gp.data() + o * chunk[k];
                         for (std::size_t i = 0; i < chunk[k]; ++i) dst[i] += src[i];
                       }
                     }
                     off += chunk[k];
                   }
                 });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  axis = normalize_axis(axis, x.rank(), "slice");
  if (start < 0 || length <= 0 || start + length > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside axis of extent " +
                         std::to_string(x.dim(axis)));
  }
  const AxisSplit s = split_at(x.dims(), axis);
  Dims out_dims = x.dims();
  out_dims[axis] = length;
  const std::size_t chunk = static_cast<std::size_t>(length) * s.inner;
  const std::size_t row = s.len * s.inner;
  const std::size_t off = static_cast<std::size_t>(start) * s.inner;
  std::vector<float> out(s.outer * chunk);
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + o * row + off, chunk, out.data() + o * chunk);
  }
  Tensor xx = x;
  return make_op("slice", std::move(out_dims), std::move(out), {x},
                 [xx, s, chunk, row, off](std::span<const float> g) mutable {
                   auto gx = xx.mutable_grad();
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     float* dst = gx.data() + o * row + off;
                     const float* src = g.data() + o * chunk;
                     for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                   }
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: needs rank 2, got " + to_string(x.dims()));
  const int r = x.dim(0), c = x.dim(1);
  std::vector<float> out(x.size());
  MapMat(out.data(), c, r) = ConstMapMat(x.data().data(), r, c).transpose();
  Tensor xx = x;
  return make_op("transpose", {c, r}, std::move(out), {x},
                 [xx, r, c](std::span<const float> g) mutable {
                   MapMat(xx.mutable_grad().data(), r, c) += ConstMapMat(g.data(), c, r).transpose();
                 });
}

Tensor reshape(const Tensor& x, Dims dims) {
  check_dims(dims);
  if (numel(dims) != x.size()) {
    throw DimensionError("reshape: " + to_string(x.dims()) + " to " + to_string(dims));
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  Tensor xx = x;
  return make_op("reshape", std::move(dims), std::move(out), {x},
                 [xx](std::span<const float> g) mutable {
                   auto gx = xx.mutable_grad();
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                 });
}

Tensor broadcast_to(const Tensor& x, Dims dims) {
  check_dims(dims);
  if (!is_suffix(x.dims(), dims)) {
    throw DimensionError("broadcast_to: " + to_string(x.dims()) + " is not a trailing suffix of " +
                         to_string(dims));
  }
  const std::size_t n = numel(dims);
  const std::size_t nx = x.size();
  std::vector<float> out(n);
  const auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i % nx];
  Tensor xx = x;
  return make_op("broadcast", std::move(dims), std::move(out), {x},
                 [xx, nx](std::span<const float> g) mutable {
                   auto gx = xx.mutable_grad();
                   for (std::size_t i = 0; i < g.size(); ++i) gx[i % nx] += g[i];
                 });
}

}  // namespace cdsvae::ad
