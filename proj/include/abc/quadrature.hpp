#pragma once

#include <cmath>
#include <functional>

namespace abc {

struct QuadratureOptions {
  double abs_tol = 1e-10;
  int max_depth = 40;
  // Panels are always split this many times before the error test is trusted,
  // so integrands periodic on the coarse nodes are not accepted early.
  int min_depth = 5;
};

// Adaptive Simpson with Richardson correction on each accepted panel.
// The tolerance is split between the two halves at every refinement.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        QuadratureOptions opts = {});

}  // namespace abc
