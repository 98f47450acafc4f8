#pragma once

#include <functional>
#include <random>

#include "ganlink/tensor.hpp"

namespace ganlink {

struct FdReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t refined = 0;
    bool pass = false;
};

// Central-difference check of the gradient of a scalar-valued tensor function.
// f is evaluated inside a tape scope once for the analytic gradient and then
// forward-only for the perturbed values. When `max_coords` is smaller than the
// tensor, a random subset of coordinates is probed.
//
// Error metric: |analytic - numeric| / max(1, |analytic|, |numeric|), the
// usual mixed absolute/relative gradcheck ratio.
//
// A coarse step can straddle an activation kink (leaky-ReLU), where the
// central difference stops being a derivative estimate. With refine_step > 0 a
// coordinate that disagrees at the coarse step is re-measured at the finer
// step before it counts as a failure; a wrong analytic gradient still fails
// because the fine estimate converges to the true derivative.
template <typename T>
FdReport finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                           T step, double tol, std::size_t max_coords = 0,
                           std::mt19937_64* rng = nullptr, T refine_step = T(0)) {
    x.set_requires_grad(true);
    x.clear_grad();

    Tape<T> tape;
    {
        TapeScope<T> scope(tape);
        Tensor<T> loss = f(x);
        if (loss.size() != 1)
            throw UsageError("finite_diff_check: function must return a scalar");
        backward(loss, tape);
    }
    std::vector<T> analytic(x.grad().begin(), x.grad().end());

    std::vector<std::size_t> coords;
    if (max_coords == 0 || max_coords >= x.size()) {
        coords.resize(x.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
        if (!rng) throw UsageError("finite_diff_check: sampling coordinates requires an rng");
        std::vector<std::size_t> all(x.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        std::shuffle(all.begin(), all.end(), *rng);
        coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_coords));
    }

    auto central = [&](std::size_t idx, T h) {
        const T saved = x.values()[idx];
        x.values()[idx] = saved + h;
        const double f_plus = static_cast<double>(f(x).value());
        x.values()[idx] = saved - h;
        const double f_minus = static_cast<double>(f(x).value());
        x.values()[idx] = saved;
        return (f_plus - f_minus) / (2.0 * static_cast<double>(h));
    };
    auto rel_error = [](double a, double numeric) {
        return std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    };

    FdReport report;
    report.checked = coords.size();
    for (std::size_t idx : coords) {
        const double a = static_cast<double>(analytic[idx]);
        double rel = rel_error(a, central(idx, step));
        if (rel > tol && refine_step > T(0)) {
            rel = rel_error(a, central(idx, refine_step));
            report.refined += 1;
        }
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = idx;
        }
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

} // namespace ganlink
