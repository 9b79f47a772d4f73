#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stmre/layers.hpp"

namespace stmre {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    /// Coordinates where every tried step crossed a ReLU or max-pool kink.
    std::size_t skipped = 0;
    std::string worst;
};

/// Compares backprop gradients against central differences.
///
/// `loss_fn` must rebuild the scalar loss from the current values of `params`
/// deterministically on every call. The relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). When the +/- step
/// changes the activation pattern of the forward pass, the step is shrunk by
/// 10x (at most three times) before the coordinate is skipped.
template <typename T>
GradCheckResult grad_check(const std::function<Var<T>()>& loss_fn, const std::vector<NamedParam<T>>& params,
                           double eps = 1e-3);

}  // namespace stmre
