#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "kenn/nn/param_store.hpp"
#include "kenn/nn/tape.hpp"

namespace kenn {

// Compares reverse-mode gradients against central finite differences.
// `build` wires the store's parameters into a fresh tape (leaf refs aligned
// with store order) and returns a scalar root. 64-bit only; the returned
// value is the max over parameters of
//   |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
inline double grad_check(
    ParamStore<double>& params,
    const std::function<Tape<double>::Ref(Tape<double>&, const std::vector<Tape<double>::Ref>&)>&
        build,
    double h = 1e-5) {
    auto eval = [&](bool with_grad, std::vector<Tensor<double>>* grads) {
        Tape<double> tape;
        std::vector<Tape<double>::Ref> refs;
        refs.reserve(static_cast<size_t>(params.size()));
        for (int i = 0; i < params.size(); ++i) refs.push_back(tape.input(params[i].value));
        const auto root = build(tape, refs);
        const double value = tape.val(root).data[0];
        if (with_grad) {
            tape.backward(root);
            grads->clear();
            for (auto r : refs) grads->push_back(tape.grad(r));
        }
        return value;
    };

    std::vector<Tensor<double>> analytic;
    eval(true, &analytic);

    double max_rel = 0.0;
    for (int i = 0; i < params.size(); ++i) {
        auto& value = params[i].value;
        for (size_t k = 0; k < value.data.size(); ++k) {
            const double orig = value.data[k];
            value.data[k] = orig + h;
            const double fp = eval(false, nullptr);
            value.data[k] = orig - h;
            const double fm = eval(false, nullptr);
            value.data[k] = orig;
            const double g_fd = (fp - fm) / (2.0 * h);
            const double g_ad = analytic[static_cast<size_t>(i)].data[k];
            const double rel =
                std::abs(g_ad - g_fd) / std::max(1e-8, std::abs(g_ad) + std::abs(g_fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace kenn
