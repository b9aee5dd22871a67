#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vimf/tensor.hpp"

namespace vimf {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged by absolute error against this scale.
  double floor = 1e-6;
  // When nonzero, only this many coordinates per tensor are probed (evenly
  // strided, deterministic). Zero probes every coordinate.
  std::size_t max_coords = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor index>:<flat index>" of the worst coordinate
  bool passed = false;
};

// Central-difference check of the tape gradient of scalar f at x.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           GradCheckOptions opts = {});

// Same, but perturbs the given tensors in place (restoring them) while
// re-evaluating a closure; used for checking parameter gradients.
GradCheckReport grad_check_tensors(const std::function<Tensor()>& loss, std::vector<Tensor> targets,
                                   GradCheckOptions opts = {});

}  // namespace vimf
