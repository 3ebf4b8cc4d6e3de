#include "vtdtsn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vtdtsn/errors.hpp"

namespace vtdtsn {
namespace {

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite function value during ") + what);
  return v;
}

void consider(GradCheckResult& r, double a, double n, double floor, const std::string& name, std::size_t idx) {
  const double e = relative_error(a, n, floor);
  ++r.coordinates;
  if (std::max(std::abs(a), std::abs(n)) >= floor) ++r.resolved;
  if (e > r.max_rel_error || r.coordinates == 1) {
    r.max_rel_error = e;
    r.worst_param = name;
    r.worst_index = idx;
    r.analytic = a;
    r.numeric = n;
  }
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point,
                           double eps, double floor) {
  Tape tape;
  Var x = tape.variable(point);
  Var y = f(tape, x);
  checked(y.value()[0], "gradient evaluation");
  tape.backward(y);
  const Tensor analytic = tape.grad_buffer(x);  // zeros when y ignores x

  auto eval = [&](const Tensor& p) {
    Tape t;
    return checked(f(t, t.constant(p)).value()[0], "finite differences");
  };

  GradCheckResult r;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const double up = eval(probe);
    probe[i] = point[i] - eps;
    const double down = eval(probe);
    probe[i] = point[i];
    consider(r, analytic[i], (up - down) / (2.0 * eps), floor, "", i);
  }
  return r;
}

GradCheckResult grad_check_params(ParamStore& params, const std::function<Var(Tape&)>& loss,
                                  double eps, double floor) {
  params.zero_grad();
  {
    Tape tape;
    Var y = loss(tape);
    checked(y.value()[0], "gradient evaluation");
    tape.backward(y);
  }
  auto eval = [&] {
    Tape t;
    return checked(loss(t).value()[0], "finite differences");
  };

  GradCheckResult r;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = eval();
      p.value[i] = orig - eps;
      const double down = eval();
      p.value[i] = orig;
      consider(r, p.grad[i], (up - down) / (2.0 * eps), floor, p.name, i);
    }
  }
  return r;
}

}  // namespace vtdtsn
