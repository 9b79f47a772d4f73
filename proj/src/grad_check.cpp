#include "stmre/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace stmre {

namespace {

template <typename T>
std::pair<double, std::uint64_t> evaluate(const std::function<Var<T>()>& loss_fn) {
    ActivationPattern pattern;
    PatternScope scope(pattern);
    NoGradGuard no_grad;
    auto loss = loss_fn();
    return {static_cast<double>(loss->value[0]), pattern.digest()};
}

}  // namespace

template <typename T>
GradCheckResult grad_check(const std::function<Var<T>()>& loss_fn, const std::vector<NamedParam<T>>& params,
                           double eps) {
    for (const auto& p : params) p.var->zero_grad();

    std::uint64_t base_pattern = 0;
    {
        ActivationPattern pattern;
        PatternScope scope(pattern);
        auto loss = loss_fn();
        backward(loss);
        base_pattern = pattern.digest();
    }

    GradCheckResult result;
    for (const auto& p : params) {
        if (!p.var->requires_grad) continue;
        const TensorT<T> analytic = p.var->grad;
        auto& value = p.var->value;
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const T original = value[i];
            bool done = false;
            double step = eps;
            for (int attempt = 0; attempt < 4 && !done; ++attempt, step /= 10.0) {
                value[i] = static_cast<T>(static_cast<double>(original) + step);
                const auto [plus, plus_pattern] = evaluate(loss_fn);
                value[i] = static_cast<T>(static_cast<double>(original) - step);
                const auto [minus, minus_pattern] = evaluate(loss_fn);
                value[i] = original;
                if (plus_pattern != base_pattern || minus_pattern != base_pattern) continue;

                const double numeric = (plus - minus) / (2.0 * step);
                const double a = static_cast<double>(analytic[i]);
                const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
                const double rel = std::abs(a - numeric) / denom;
                if (rel > result.max_relative_error) {
                    result.max_relative_error = rel;
                    result.worst = p.name + "[" + std::to_string(i) + "]";
                }
                ++result.checked;
                done = true;
            }
            if (!done) ++result.skipped;
        }
    }
    return result;
}

template GradCheckResult grad_check<float>(const std::function<Var<float>()>&, const std::vector<NamedParam<float>>&,
                                           double);
template GradCheckResult grad_check<double>(const std::function<Var<double>()>&,
                                            const std::vector<NamedParam<double>>&, double);

}  // namespace stmre
