#pragma once

#include "webnn/tensor.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace webnn {

struct GradcheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_param = 0;      // index into the params list
    std::size_t worst_coordinate = 0; // flat index inside that parameter
    double analytic = 0.0;            // values at the worst coordinate
    double numeric = 0.0;
    std::size_t coordinates = 0;      // total coordinates checked
    std::size_t over_tolerance = 0;   // coordinates with relative error above `tolerance`
    double largest_over_tolerance = 0.0; // max(|a|, |n|) among those coordinates
};

/// Compares backward() gradients of `loss_fn` against central differences
/// (f(p+h) - f(p-h)) / 2h for every coordinate of every parameter.
///
/// Relative error is |a - n| / max(|a|, |n|, 1e-12). `loss_fn` must rebuild
/// the graph from the current parameter values on each call and return a
/// scalar. Parameters are restored exactly afterwards. `tolerance` only feeds
/// the over_tolerance counters.
GradcheckResult finite_difference_gradcheck(const std::function<Tensor<double>()>& loss_fn,
                                            std::vector<Tensor<double>> params, double h,
                                            double tolerance = 1e-4);

} // namespace webnn
