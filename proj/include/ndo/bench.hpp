#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ndo/geometry.hpp"
#include "ndo/heat.hpp"
#include "ndo/io.hpp"
#include "ndo/lbm.hpp"
#include "ndo/optimizer.hpp"

namespace ndo {

// Wall-clock micro-benchmarks comparing the surrogate pipeline against the
// converged reference solvers.  All times are seconds per call.

struct BenchTiming {
    double seconds = std::numeric_limits<double>::quiet_NaN();
    int reps = 0;
};

// Repeats `fn` until at least `min_seconds` have elapsed and `min_reps` calls
// were made, then reports the mean call time.  `warmup` runs one untimed call
// first; disable it for expensive callables that only need a single sample.
template <class F>
BenchTiming time_callable(F&& fn, double min_seconds = 0.2, int min_reps = 3, bool warmup = true) {
    if (warmup) fn();
    BenchTiming t;
    const auto start = std::chrono::steady_clock::now();
    double elapsed = 0.0;
    while (t.reps < min_reps || elapsed < min_seconds) {
        fn();
        ++t.reps;
        elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (t.reps >= (1 << 20)) break;
    }
    t.seconds = elapsed / t.reps;
    return t;
}

struct BenchReport {
    std::vector<int> batches;                // batch sizes for the forward rows
    std::vector<double> forward_seconds;     // simulation-net forward, per call
    std::vector<double> forward_per_sample;  // forward_seconds / batch
    double grad_step_seconds = std::numeric_limits<double>::quiet_NaN();  // one design-gradient evaluation
    double solver_seconds = std::numeric_limits<double>::quiet_NaN();     // one converged reference solve
    int solver_iterations = 0;
    double speedup = std::numeric_limits<double>::quiet_NaN();  // solver_seconds / forward_seconds[batch=1]
    std::string csv;
};

namespace detail {

inline Tensor<float> replicate_geometry(const GeometryGrid& g, int batch) {
    Tensor<float> out({batch, 1, g.h, g.w});
    const size_t n = g.cells.size();
    for (int b = 0; b < batch; ++b)
        for (size_t i = 0; i < n; ++i) out[static_cast<int64_t>(b) * static_cast<int64_t>(n) + static_cast<int64_t>(i)] = g.cells[i];
    return out;
}

}  // namespace detail

// Benchmarks, for one sampled design of the given objective:
//   * the simulation-net forward pass at several batch sizes,
//   * one full design-gradient evaluation through both networks (the
//     per-iteration cost of gradient optimization; all nine angles for the
//     airfoil objective),
//   * one converged reference solve of the same design.
inline BenchReport run_bench(const SurrogatePair& pair, DesignKind kind, uint64_t seed = 0,
                             double min_seconds = 0.2) {
    detail::check_pair(pair, kind);
    BenchReport rep;
    rep.batches = {1, 2, 4, 8, 16};

    Rng rng(Rng::mix(seed, 0xBE7Cu));
    const DesignVector dv = sample_design(kind, rng);
    const std::vector<double> constrained = dv.constrained();
    const GeometryGrid geom = kind == DesignKind::heat
                                  ? heat_sink_geometry(constrained)
                                  : rasterize_airfoil(AirfoilParams::from_design(constrained, 0.0));

    for (int batch : rep.batches) {
        const Tensor<float> in = detail::replicate_geometry(geom, batch);
        const BenchTiming t = time_callable([&] { (void)pair.snet.predict(in); }, min_seconds);
        rep.forward_seconds.push_back(t.seconds);
        rep.forward_per_sample.push_back(t.seconds / batch);
    }

    {
        OptimizerState st = make_optimizer_state(kind, seed);
        st.noise_sigma = 0.0;
        const BenchTiming t = time_callable(
            [&] {
                if (kind == DesignKind::heat)
                    (void)design_gradient(pair, st, kind);
                else
                    (void)multi_angle_gradient(pair, st);
            },
            min_seconds);
        rep.grad_step_seconds = t.seconds;
    }

    if (kind == DesignKind::heat) {
        HeatProblem prob;
        prob.geometry = geom;
        prob.source = heat_source_mask();
        HeatResult res;
        const BenchTiming t = time_callable([&] { res = solve_heat(prob); }, 0.0, 1, false);
        rep.solver_seconds = t.seconds;
        rep.solver_iterations = res.iterations;
    } else {
        FlowProblem prob;
        prob.geometry = geom;
        FlowResult res;
        const BenchTiming t = time_callable([&] { res = solve_lbm_steady(prob); }, 0.0, 1, false);
        rep.solver_seconds = t.seconds;
        rep.solver_iterations = res.iterations;
    }
    rep.speedup = rep.solver_seconds / rep.forward_seconds.front();

    std::string csv = "quantity";
    for (int b : rep.batches) csv += ",batch_" + std::to_string(b);
    csv += "\n";
    auto row = [&](const std::string& name, const std::vector<double>& vals) {
        csv += name;
        for (size_t i = 0; i < rep.batches.size(); ++i)
            csv += "," + (i < vals.size() ? fmt_g9(vals[i]) : std::string("n/a"));
        csv += "\n";
    };
    row("forward_seconds", rep.forward_seconds);
    row("forward_per_sample_seconds", rep.forward_per_sample);
    row("grad_step_seconds", {rep.grad_step_seconds});
    row("solver_seconds", {rep.solver_seconds});
    row("speedup_solver_over_forward", {rep.speedup});
    rep.csv = csv;
    return rep;
}

}  // namespace ndo
