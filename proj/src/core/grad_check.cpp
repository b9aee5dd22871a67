#include "vimf/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vimf/errors.hpp"

namespace vimf {

namespace {

double eval_scalar(const std::function<Tensor()>& loss) {
  const Tensor v = loss();
  if (v.numel() != 1) throw DimensionError("grad_check: function is not scalar-valued");
  const double r = v.item();
  if (!std::isfinite(r)) throw DomainError("grad_check: non-finite function value");
  return r;
}

}  // namespace

GradCheckReport grad_check_tensors(const std::function<Tensor()>& loss, std::vector<Tensor> targets,
                                   GradCheckOptions opts) {
  std::vector<bool> restore_flag;
  for (auto& t : targets) {
    restore_flag.push_back(t.requires_grad());
    t.zero_grad();
    t.set_requires_grad(true);
  }

  {
    ComputationTape tape;
    TapeScope scope(tape);
    const Tensor l = loss();
    if (!std::isfinite(l.item())) throw DomainError("grad_check: non-finite function value");
    tape.backward(l);
  }

  GradCheckReport report;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    Tensor& t = targets[ti];
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    const std::size_t n = t.numel();
    const std::size_t stride = (opts.max_coords == 0 || opts.max_coords >= n) ? 1 : n / opts.max_coords;
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = data[i];
      data[i] = orig + opts.step;
      const double fp = eval_scalar(loss);
      data[i] = orig - opts.step;
      const double fm = eval_scalar(loss);
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double rel = abs_err / std::max({std::abs(numeric), std::abs(analytic[i]), opts.floor});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel > report.max_rel_err || report.checked == 0) {
        report.max_rel_err = std::max(report.max_rel_err, rel);
        report.worst = std::to_string(ti) + ":" + std::to_string(i);
      }
      ++report.checked;
    }
  }
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    targets[ti].zero_grad();
    targets[ti].set_requires_grad(restore_flag[ti]);
  }
  report.passed = report.max_rel_err <= opts.tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, GradCheckOptions opts) {
  Tensor probe = x.clone();
  return grad_check_tensors([&] { return f(probe); }, {probe}, opts);
}

}  // namespace vimf
