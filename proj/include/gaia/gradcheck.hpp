#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gaia/tensor.hpp"

namespace gaia {

struct ParamGradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose finite-difference stencil crossed a relu kink.
  std::size_t skipped = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<ParamGradCheck> params;
  double max_rel_error = 0.0;
  std::size_t skipped = 0;
  bool pass = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor), so gradients at the
  // floating-point noise level are compared absolutely.
  double abs_floor = 1e-6;
};

// Compares reverse-mode gradients of a scalar closure against central finite
// differences, coordinate by coordinate. `f` must be deterministic and build
// its graph from `params` on every call. Parameter data is restored on exit.
GradCheckReport check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                const GradCheckOptions& options = {},
                                const std::vector<std::string>& names = {});

}  // namespace gaia
