#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ndo/errors.hpp"
#include "ndo/grid.hpp"
#include "ndo/tensor.hpp"

namespace ndo {

// Steady-state heat conduction on the solid cells of an occupancy grid.
//
// The temperature field solves a face-conductance balance per solid cell:
// solid-solid faces carry conductance `conductance` (the material conducts
// much better than it sheds heat to the ambient), solid-air faces carry unit
// conductance to the ambient at T = 0, and faces on the bottom domain edge
// are insulated (the sink is mounted on its base).  Heat q is injected into
// every source cell.  Jacobi iteration:
//   T[c] <- (conductance * sum_solid T[n] + q[c]) / (conductance * n_solid + n_air)
// Air cells stay pinned at exactly 0.
struct HeatProblem {
    GeometryGrid geometry;
    std::vector<uint8_t> source;  // h*w mask, 1 = inject q
    double q = 1.0;
    double conductance = 50.0;
    double tol = 1e-7;   // max absolute change per sweep
    int max_iters = 200000;
};

struct HeatResult {
    Tensor<float> field;          // [1,H,W], air cells exactly 0
    std::vector<double> field64;  // full-precision field for residual checks
    int iterations = 0;
    bool converged = false;
    double last_change = 0.0;
};

inline HeatResult solve_heat(const HeatProblem& prob) {
    const GeometryGrid& g = prob.geometry;
    const int h = g.h, w = g.w;
    if (h <= 0 || w <= 0) throw ShapeMismatch("heat solver: empty grid");
    if (prob.source.size() != static_cast<size_t>(h) * w)
        throw ShapeMismatch("heat solver: source mask size mismatch");

    // Index solid cells and build their face lists once.
    std::vector<int32_t> cell_of(static_cast<size_t>(h) * w, -1);
    std::vector<int32_t> cells;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (g.solid(r, c)) {
                cell_of[static_cast<size_t>(r) * w + c] = static_cast<int32_t>(cells.size());
                cells.push_back(r * w + c);
            }
    const int n = static_cast<int>(cells.size());
    if (n == 0) throw NoSolidCells("heat solver: geometry has no solid cells");

    bool any_source = false;
    std::vector<double> inject(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        if (prob.source[static_cast<size_t>(cells[static_cast<size_t>(i)])]) {
            inject[static_cast<size_t>(i)] = prob.q;
            any_source = true;
        }
    if (!any_source) throw EmptySource("heat solver: no solid cell receives the source flux");

    // CSR adjacency over solid cells + per-cell denominator.
    std::vector<int32_t> adj_start(static_cast<size_t>(n) + 1, 0);
    std::vector<int32_t> adj;
    std::vector<double> inv_denom(static_cast<size_t>(n), 0.0);
    const double k = prob.conductance;
    for (int i = 0; i < n; ++i) {
        const int r = cells[static_cast<size_t>(i)] / w;
        const int c = cells[static_cast<size_t>(i)] % w;
        int n_solid = 0, n_air = 0;
        const int dr[4] = {-1, 1, 0, 0};
        const int dc[4] = {0, 0, -1, 1};
        for (int f = 0; f < 4; ++f) {
            const int rr = r + dr[f], cc = c + dc[f];
            if (rr >= h) continue;  // bottom edge: insulated
            if (rr < 0 || cc < 0 || cc >= w) {
                ++n_air;  // top/side edges behave like ambient air
                continue;
            }
            const int32_t j = cell_of[static_cast<size_t>(rr) * w + cc];
            if (j >= 0) {
                adj.push_back(j);
                ++n_solid;
            } else {
                ++n_air;
            }
        }
        adj_start[static_cast<size_t>(i) + 1] = static_cast<int32_t>(adj.size());
        const double denom = k * n_solid + n_air;
        inv_denom[static_cast<size_t>(i)] = denom > 0.0 ? 1.0 / denom : 0.0;
    }

    std::vector<double> t_cur(static_cast<size_t>(n), 0.0), t_next(static_cast<size_t>(n), 0.0);
    HeatResult res;
    double max_change = 0.0;
    for (int it = 0; it < prob.max_iters; ++it) {
        max_change = 0.0;
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int32_t a = adj_start[static_cast<size_t>(i)]; a < adj_start[static_cast<size_t>(i) + 1]; ++a)
                acc += t_cur[static_cast<size_t>(adj[static_cast<size_t>(a)])];
            const double tn = (k * acc + inject[static_cast<size_t>(i)]) * inv_denom[static_cast<size_t>(i)];
            max_change = std::max(max_change, std::abs(tn - t_cur[static_cast<size_t>(i)]));
            t_next[static_cast<size_t>(i)] = tn;
        }
        t_cur.swap(t_next);
        res.iterations = it + 1;
        if (max_change < prob.tol) {
            res.converged = true;
            break;
        }
    }
    res.last_change = max_change;

    res.field = Tensor<float>({1, h, w});
    res.field64.assign(static_cast<size_t>(h) * w, 0.0);
    for (int i = 0; i < n; ++i) {
        res.field64[static_cast<size_t>(cells[static_cast<size_t>(i)])] = t_cur[static_cast<size_t>(i)];
        res.field.data[static_cast<size_t>(cells[static_cast<size_t>(i)])] =
            static_cast<float>(t_cur[static_cast<size_t>(i)]);
    }
    return res;
}

// Mean temperature over the source cells of a solved field.
inline double source_mean_temperature(const HeatResult& res, const std::vector<uint8_t>& source) {
    double acc = 0.0;
    int64_t cnt = 0;
    for (size_t i = 0; i < source.size(); ++i)
        if (source[i]) {
            acc += res.field64[i];
            ++cnt;
        }
    if (!cnt) throw EmptyMask("source mask is empty");
    return acc / static_cast<double>(cnt);
}

}  // namespace ndo
