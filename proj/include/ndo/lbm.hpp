#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ndo/errors.hpp"
#include "ndo/grid.hpp"
#include "ndo/tensor.hpp"

namespace ndo {

// Max-norm difference between two equally-shaped fields.
inline double check_convergence(const Tensor<float>& prev, const Tensor<float>& cur) {
    if (prev.shape != cur.shape)
        throw ShapeMismatch("check_convergence: " + shape_str(prev.shape) + " vs " + shape_str(cur.shape));
    double m = 0.0;
    for (int64_t i = 0; i < prev.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(prev[i]) - static_cast<double>(cur[i])));
    return m;
}

// Steady 2D channel flow, lattice Boltzmann D2Q9 with BGK collision.
//
// Production boundaries: equilibrium inflow (u0, 0) on the left column,
// zero-gradient outflow on the right column, specular (free-slip) top/bottom,
// halfway bounce-back on solid cells.  The y_walls / x_periodic / body_force
// fields select the verification modes (no-slip Poiseuille channel, fully
// periodic box) exercised by the test suite.
struct FlowProblem {
    GeometryGrid geometry;
    double u0 = 0.05;     // lattice inflow speed, 0 < u0 <= 0.1
    double tau = 0.56;    // BGK relaxation time, > 0.5
    double tol = 1e-6;    // max |u_t - u_{t-interval}|
    int check_interval = 100;
    int max_steps = 100000;

    enum class Walls { specular, noslip, periodic };
    Walls y_walls = Walls::specular;
    bool x_periodic = false;  // replaces inflow/outflow with wrap-around
    double body_force = 0.0;  // x-acceleration (test mode)
};

struct FlowResult {
    Tensor<float> field;  // [3,H,W]: vx, vy, p; solid cells exactly 0
    int iterations = 0;   // time steps taken
    bool converged = false;
    double residual = 0.0;
    double mass = 0.0;  // total density over fluid cells at exit
};

namespace lbm_detail {

constexpr int EX[9] = {0, 1, 0, -1, 0, 1, -1, -1, 1};
constexpr int EY[9] = {0, 0, 1, 0, -1, 1, 1, -1, -1};  // +y = down (row grows)
constexpr int OPP[9] = {0, 3, 4, 1, 2, 7, 8, 5, 6};
constexpr int MIRROR_Y[9] = {0, 1, 4, 3, 2, 8, 7, 6, 5};
constexpr double W[9] = {4.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 9, 1.0 / 36, 1.0 / 36, 1.0 / 36, 1.0 / 36};

inline void equilibrium(double rho, double ux, double uy, double* feq) {
    const double usq = 1.5 * (ux * ux + uy * uy);
    for (int i = 0; i < 9; ++i) {
        const double eu = 3.0 * (EX[i] * ux + EY[i] * uy);
        feq[i] = W[i] * rho * (1.0 + eu + 0.5 * eu * eu - usq);
    }
}

}  // namespace lbm_detail

inline FlowResult solve_lbm_steady(const FlowProblem& prob) {
    using namespace lbm_detail;
    const GeometryGrid& g = prob.geometry;
    const int h = g.h, w = g.w;
    if (h <= 0 || w <= 0) throw ShapeMismatch("lbm solver: empty grid");
    if (!(prob.u0 >= 0.0 && prob.u0 <= 0.1)) throw DomainError("lbm solver: u0 outside [0, 0.1]");
    if (!(prob.tau > 0.5)) throw DomainError("lbm solver: tau must exceed 0.5");

    std::vector<uint8_t> solid(static_cast<size_t>(h) * w, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) solid[static_cast<size_t>(r) * w + c] = g.solid(r, c);

    // Preconditions: open cross-section everywhere, clean inlet/outlet.
    for (int c = 0; c < w; ++c) {
        bool open = false;
        for (int r = 0; r < h; ++r) open = open || !solid[static_cast<size_t>(r) * w + c];
        if (!open) throw ChannelBlocked("lbm solver: column " + std::to_string(c) + " fully solid");
    }
    if (!prob.x_periodic)
        for (int r = 0; r < h; ++r)
            if (solid[static_cast<size_t>(r) * w] || solid[static_cast<size_t>(r) * w + w - 1])
                throw ChannelBlocked("lbm solver: solid cell on inlet/outlet column");

    const size_t cells = static_cast<size_t>(h) * w;
    std::vector<double> f(9 * cells), fb(9 * cells);
    auto idx = [w](int r, int c) { return static_cast<size_t>(r) * w + c; };

    {
        double feq[9];
        equilibrium(1.0, prob.u0, 0.0, feq);
        for (int i = 0; i < 9; ++i)
            std::fill(f.begin() + i * cells, f.begin() + (i + 1) * cells, feq[i]);
    }

    const double inv_tau = 1.0 / prob.tau;
    double inlet_feq[9];
    equilibrium(1.0, prob.u0, 0.0, inlet_feq);

    std::vector<float> u_prev(2 * cells, 0.0f), u_cur(2 * cells, 0.0f);
    auto compute_velocity = [&](std::vector<float>& out) {
        double max_speed = 0.0;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const size_t s = idx(r, c);
                if (solid[s]) {
                    out[2 * s] = 0.0f;
                    out[2 * s + 1] = 0.0f;
                    continue;
                }
                double rho = 0.0, ux = 0.0, uy = 0.0;
                for (int i = 0; i < 9; ++i) {
                    const double fi = f[i * cells + s];
                    rho += fi;
                    ux += fi * EX[i];
                    uy += fi * EY[i];
                }
                ux /= rho;
                uy /= rho;
                out[2 * s] = static_cast<float>(ux);
                out[2 * s + 1] = static_cast<float>(uy);
                max_speed = std::max(max_speed, std::max(std::abs(ux), std::abs(uy)));
            }
        return max_speed;
    };

    FlowResult res;
    double feq[9];
    for (int step = 1; step <= prob.max_steps; ++step) {
        // Collide in place (fluid cells only).
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const size_t s = idx(r, c);
                if (solid[s]) continue;
                double rho = 0.0, ux = 0.0, uy = 0.0;
                double fi[9];
                for (int i = 0; i < 9; ++i) {
                    fi[i] = f[i * cells + s];
                    rho += fi[i];
                    ux += fi[i] * EX[i];
                    uy += fi[i] * EY[i];
                }
                ux /= rho;
                uy /= rho;
                equilibrium(rho, ux, uy, feq);
                for (int i = 0; i < 9; ++i) {
                    double v = fi[i] + (feq[i] - fi[i]) * inv_tau;
                    if (prob.body_force != 0.0) v += 3.0 * W[i] * EX[i] * prob.body_force;
                    f[i * cells + s] = v;
                }
            }

        // Stream (pull) with boundary handling.
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const size_t s = idx(r, c);
                if (solid[s]) {
                    for (int i = 0; i < 9; ++i) fb[i * cells + s] = f[i * cells + s];
                    continue;
                }
                for (int i = 0; i < 9; ++i) {
                    int sr = r - EY[i], sc = c - EX[i];
                    int dir = i;
                    bool from_self = false;
                    if (sr < 0 || sr >= h) {
                        switch (prob.y_walls) {
                            case FlowProblem::Walls::periodic:
                                sr = (sr + h) % h;
                                break;
                            case FlowProblem::Walls::noslip:
                                dir = OPP[i];
                                from_self = true;
                                break;
                            case FlowProblem::Walls::specular:
                                dir = MIRROR_Y[i];
                                sr = r;  // reflected particle starts on the wall row
                                break;
                        }
                    }
                    if (!from_self) {
                        if (sc < 0 || sc >= w) {
                            if (prob.x_periodic)
                                sc = (sc + w) % w;
                            else
                                sc = std::clamp(sc, 0, w - 1);  // column is rewritten below
                        }
                        if (solid[idx(sr, sc)]) {
                            dir = OPP[i];
                            from_self = true;
                        }
                    }
                    fb[i * cells + s] =
                        from_self ? f[dir * cells + s] : f[dir * cells + idx(sr, sc)];
                }
            }

        if (!prob.x_periodic) {
            // Inlet: fixed equilibrium at (u0, 0).  Outlet: zero-gradient copy.
            for (int r = 0; r < h; ++r)
                for (int i = 0; i < 9; ++i) {
                    fb[i * cells + idx(r, 0)] = inlet_feq[i];
                    fb[i * cells + idx(r, w - 1)] = fb[i * cells + idx(r, w - 2)];
                }
        }
        f.swap(fb);
        res.iterations = step;

        if (step % prob.check_interval == 0) {
            const double max_speed = compute_velocity(u_cur);
            if (max_speed > 0.3)
                throw NumericBlowup("lbm solver: |u| = " + std::to_string(max_speed) + " at step " +
                                    std::to_string(step));
            double diff = 0.0;
            for (size_t i = 0; i < u_cur.size(); ++i)
                diff = std::max(diff, std::abs(static_cast<double>(u_cur[i]) - static_cast<double>(u_prev[i])));
            res.residual = diff;
            u_prev = u_cur;
            if (diff < prob.tol) {
                res.converged = true;
                break;
            }
        }
    }

    // Output field: vx, vy, p = (rho - mean rho)/3 over fluid; solids 0.
    compute_velocity(u_cur);
    std::vector<double> rho_field(cells, 0.0);
    double rho_sum = 0.0;
    int64_t fluid_count = 0;
    for (size_t s = 0; s < cells; ++s) {
        if (solid[s]) continue;
        double rho = 0.0;
        for (int i = 0; i < 9; ++i) rho += f[i * cells + s];
        rho_field[s] = rho;
        rho_sum += rho;
        ++fluid_count;
    }
    const double rho_mean = rho_sum / static_cast<double>(fluid_count);
    res.mass = rho_sum;
    res.field = Tensor<float>({3, h, w});
    for (size_t s = 0; s < cells; ++s) {
        if (solid[s]) continue;
        res.field.data[s] = u_cur[2 * s];
        res.field.data[cells + s] = u_cur[2 * s + 1];
        res.field.data[2 * cells + s] = static_cast<float>((rho_field[s] - rho_mean) / 3.0);
    }
    return res;
}

}  // namespace ndo
