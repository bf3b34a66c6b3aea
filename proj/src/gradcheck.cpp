#include "webnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace webnn {

GradcheckResult finite_difference_gradcheck(const std::function<Tensor<double>()>& loss_fn,
                                            std::vector<Tensor<double>> params, double h,
                                            double tolerance) {
    if (h < 1e-7 || h > 1e-3) {
        throw ValidationError("gradcheck step must lie in [1e-7, 1e-3], got " + std::to_string(h));
    }
    for (auto& p : params) {
        p.zero_grad();
        p.set_requires_grad(true);
    }
    loss_fn().backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        if (p.has_grad()) {
            analytic.emplace_back(p.grad().begin(), p.grad().end());
        } else {
            analytic.emplace_back(p.numel(), 0.0);
        }
    }

    GradcheckResult result;
    NoGradGuard no_grad;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto values = params[pi].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + h;
            const double up = loss_fn().item();
            values[i] = original - h;
            const double down = loss_fn().item();
            values[i] = original;

            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            const double rel = std::abs(a - numeric) / denom;
            ++result.coordinates;
            if (rel > tolerance) {
                ++result.over_tolerance;
                result.largest_over_tolerance = std::max(result.largest_over_tolerance, denom);
            }
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_param = pi;
                result.worst_coordinate = i;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace webnn
