#include "cdsvae/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cdsvae/error.hpp"

namespace cdsvae::ad {

namespace {

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

void note(GradCheckReport& r, double err, std::size_t index) {
  ++r.checked;
  if (err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst_index = index;
  }
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double tol, float step) {
  Tensor x = Tensor::parameter(point.dims(), {point.data().begin(), point.data().end()});
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(x);
    std::vector<Tensor> p{x};
    backward(tape, y, p);
  }
  const std::vector<float> analytic(x.grad().begin(), x.grad().end());

  GradCheckReport report;
  report.tol = tol;
  Tensor probe = point.detach();
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float orig = values[i];
    const float hi = orig + step, lo = orig - step;
    values[i] = hi;
    const double up = f(probe).item();
    values[i] = lo;
    const double down = f(probe).item();
    values[i] = orig;
    const double fd = (up - down) / (static_cast<double>(hi) - lo);
    note(report, rel_error(analytic[i], fd), i);
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check_params(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  double tol, float step, std::size_t stride) {
  if (stride == 0) throw ContractError("grad_check_params: stride must be positive");
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = loss();
    backward(tape, y, params);
  }
  GradCheckReport report;
  report.tol = tol;
  std::size_t flat = 0;
  for (auto& p : params) {
    const std::vector<float> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const float orig = values[i];
      const float hi = orig + step, lo = orig - step;
      values[i] = hi;
      const double up = loss().item();
      values[i] = lo;
      const double down = loss().item();
      values[i] = orig;
      const double fd = (up - down) / (static_cast<double>(hi) - lo);
      note(report, rel_error(analytic[i], fd), flat + i);
    }
    flat += values.size();
    p.zero_grad();
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace cdsvae::ad
