#pragma once

#include <cmath>
#include <utility>

#include "ndo/ops.hpp"

namespace ndo {

struct GradCheckResult {
    double max_err = 0.0;     // max_i |analytic_i - central_i| / max(1, |analytic_i|)
    int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Compares the tape gradient of a scalar-valued graph against central finite
// differences, coordinate by coordinate, in double precision.  `build` must be
// a pure function (Tape<double>&, leaf id) -> scalar node id.
template <class F>
GradCheckResult grad_check(F&& build, const Tensor<double>& x0, double h = 1e-6) {
    Tape<double> tape;
    auto x = tape.leaf(x0, true);
    auto loss = build(tape, x);
    tape.backward(loss);
    Tensor<double> g = tape.grad(x);

    auto eval = [&](const Tensor<double>& xv) {
        Tape<double> t;
        auto leaf = t.leaf(xv, false);
        return t.val(build(t, leaf))[0];
    };

    GradCheckResult res;
    Tensor<double> xp = x0;
    for (int64_t i = 0; i < x0.numel(); ++i) {
        const double orig = xp[i];
        xp[i] = orig + h;
        const double fp = eval(xp);
        xp[i] = orig - h;
        const double fm = eval(xp);
        xp[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(g[i] - fd) / std::max(1.0, std::abs(g[i]));
        if (err > res.max_err || res.worst_index < 0) {
            res.max_err = err;
            res.worst_index = i;
            res.analytic_at_worst = g[i];
            res.numeric_at_worst = fd;
        }
    }
    return res;
}

}  // namespace ndo
