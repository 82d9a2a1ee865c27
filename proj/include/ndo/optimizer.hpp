#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ndo/checkpoint.hpp"
#include "ndo/fitness.hpp"
#include "ndo/geometry.hpp"
#include "ndo/heat.hpp"
#include "ndo/io.hpp"
#include "ndo/lbm.hpp"
#include "ndo/nn.hpp"
#include "ndo/ops.hpp"
#include "ndo/rng.hpp"

namespace ndo {

// The nine equally spaced evaluation angles (degrees) covering the airfoil's
// operating range; gradients and reported ratios average over all of them.
inline constexpr std::array<double, 9> kSweepAnglesDeg = {-5.0,   -2.1875, 0.625,   3.4375, 6.25,
                                                          9.0625, 11.875,  14.6875, 17.5};

inline double deg_to_rad(double deg) { return deg * 3.14159265358979323846 / 180.0; }

// ---------------------------------------------------------------------------
// Trained surrogate pair
// ---------------------------------------------------------------------------

struct SurrogatePair {
    GeomNet<float> pnet;
    FieldNet<float> snet;
};

inline SurrogatePair load_surrogates(const std::string& pnet_path, const std::string& snet_path) {
    return SurrogatePair{load_geom_net(pnet_path), load_field_net(snet_path)};
}

namespace detail {

inline void check_pair(const SurrogatePair& pair, DesignKind kind) {
    if (pair.pnet.config().param_dim != design_dim(kind))
        throw ShapeMismatch("surrogate pair: parameterization net expects " +
                            std::to_string(pair.pnet.config().param_dim) + " parameters, objective has " +
                            std::to_string(design_dim(kind)));
    if (pair.pnet.config().grid_h != pair.snet.config().grid_h ||
        pair.pnet.config().grid_w != pair.snet.config().grid_w)
        throw ShapeMismatch("surrogate pair: grid sizes disagree");
    const int want = kind == DesignKind::heat ? 1 : 3;
    if (pair.snet.config().out_channels != want)
        throw ShapeMismatch("surrogate pair: simulation net emits " +
                            std::to_string(pair.snet.config().out_channels) + " channels, objective needs " +
                            std::to_string(want));
}

// Every valid rasterized design leaves the outer margin empty; clamping the
// (soft, rotated) predicted occupancy to that invariant keeps the surface
// integral's stencil inside the grid.
template <class T>
Tensor<T> margin_mask(int h, int w, int margin) {
    Tensor<T> m({1, 1, h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            m.at4(0, 0, r, c) =
                (r < margin || r >= h - margin || c < margin || c >= w - margin) ? T(0) : T(1);
    return m;
}

// Shared tail of the airfoil objective: rotate the zero-angle occupancy about
// the quarter-chord pivot, apply the margin invariant, predict the flow field
// and integrate pressure into L/D.
inline Tape<float>::Id airfoil_ld_head(Tape<float>& tape, const SurrogatePair& pair,
                                       Tape<float>::Id geom, double angle_rad) {
    const auto g0 = tape.val(geom);
    const int h = g0.dim(2), w = g0.dim(3);
    const auto rot = rotate_bilinear(tape, geom, angle_rad, AirfoilRasterSpec::pivot_row,
                                     AirfoilRasterSpec::pivot_col);
    const auto mask = tape.leaf(margin_mask<float>(h, w, AirfoilRasterSpec::margin), false);
    const auto gm = mul(tape, rot, mask);
    const auto sbind = pair.snet.bind(tape, false);
    const auto field = pair.snet.forward(tape, sbind, gm);
    const auto p = slice_channels(tape, field, 2, 3);
    return lift_drag_ratio_id(tape, force_from_pressure_ids(tape, gm, p));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gradient ascent on the raw design vector
// ---------------------------------------------------------------------------

struct OptimizerState {
    std::vector<double> raw;       // unconstrained design vector
    std::vector<double> velocity;  // momentum buffer, same length
    int64_t iter = 0;
    Rng rng;
    double lr = 0.05;
    double momentum = 0.9;
    double noise_sigma = 0.01;
    double lambda = 1.0;  // out-of-box penalty weight
};

inline double default_design_lr(DesignKind kind) { return kind == DesignKind::heat ? 0.05 : 0.001; }

inline OptimizerState make_optimizer_state(DesignKind kind, uint64_t seed, bool random_init = false) {
    OptimizerState s;
    s.rng = Rng(seed);
    s.raw.assign(static_cast<size_t>(design_dim(kind)), 0.0);
    s.velocity.assign(s.raw.size(), 0.0);
    s.lr = default_design_lr(kind);
    if (random_init) s.raw = sample_design(kind, s.rng).raw;
    return s;
}

struct GradientResult {
    std::vector<double> gradient;  // d(fitness - penalty)/d(raw)
    double fitness = 0.0;          // un-penalized objective value
    double penalty = 0.0;          // weighted out-of-box penalty
    double total = 0.0;            // the differentiated scalar
};

// One tape evaluation with an explicit noise vector: raw + eps -> hard
// sigmoid -> parameterization net -> simulation net -> fitness, minus
// lambda * sum(max(0, |raw_i| - 0.5)^2) on the un-noised raw vector.
inline GradientResult design_gradient_with_noise(const SurrogatePair& pair, const OptimizerState& st,
                                                 DesignKind kind, double angle_rad,
                                                 const std::vector<double>& eps) {
    detail::check_pair(pair, kind);
    const int dim = design_dim(kind);
    if (st.raw.size() != static_cast<size_t>(dim) || eps.size() != st.raw.size())
        throw ShapeMismatch("design_gradient: state has " + std::to_string(st.raw.size()) +
                            " parameters, objective needs " + std::to_string(dim));

    Tape<float> tape;
    Tensor<float> r0({1, dim});
    Tensor<float> e0({1, dim});
    for (int i = 0; i < dim; ++i) {
        r0.data[static_cast<size_t>(i)] = static_cast<float>(st.raw[static_cast<size_t>(i)]);
        e0.data[static_cast<size_t>(i)] = static_cast<float>(eps[static_cast<size_t>(i)]);
    }
    const auto raw = tape.leaf(std::move(r0), true);
    const auto design = hard_sigmoid(tape, add(tape, raw, tape.leaf(std::move(e0), false)));

    const auto pbind = pair.pnet.bind(tape, false);
    const auto geom = pair.pnet.forward(tape, pbind, design);

    Tape<float>::Id fit;
    if (kind == DesignKind::heat) {
        const auto sbind = pair.snet.bind(tape, false);
        const auto field = pair.snet.forward(tape, sbind, geom);
        fit = neg(tape, source_temperature_id(tape, field, heat_source_mask()));
    } else {
        fit = detail::airfoil_ld_head(tape, pair, geom, angle_rad);
    }

    // Penalty on the un-noised raw vector; at most one of the two hinge terms
    // is active per coordinate, so their sum squares to the hinge square.
    const auto over = add(tape, relu(tape, add_const(tape, raw, -0.5)),
                          relu(tape, add_const(tape, neg(tape, raw), -0.5)));
    const auto pen = scale(tape, sum_all(tape, mul(tape, over, over)), st.lambda);
    const auto total = sub(tape, fit, pen);

    GradientResult res;
    res.fitness = static_cast<double>(tape.val(fit)[0]);
    res.penalty = static_cast<double>(tape.val(pen)[0]);
    res.total = static_cast<double>(tape.val(total)[0]);
    tape.backward(total);
    const Tensor<float>& g = tape.grad(raw);
    res.gradient.resize(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) res.gradient[static_cast<size_t>(i)] = g[i];
    return res;
}

inline std::vector<double> draw_noise(OptimizerState& st) {
    std::vector<double> eps(st.raw.size(), 0.0);
    if (st.noise_sigma > 0.0)
        for (auto& e : eps) e = st.rng.normal(0.0, st.noise_sigma);
    return eps;
}

inline GradientResult design_gradient(const SurrogatePair& pair, OptimizerState& st, DesignKind kind,
                                      double angle_rad = 0.0) {
    return design_gradient_with_noise(pair, st, kind, angle_rad, draw_noise(st));
}

struct MultiAngleResult {
    std::vector<double> gradient;    // arithmetic mean over the 9 angles
    std::array<double, 9> fitness{};  // per-angle un-penalized fitness
    double mean_fitness = 0.0;
    double penalty = 0.0;
};

// Mean gradient over the nine sweep angles; one noise draw shared by all.
inline MultiAngleResult multi_angle_gradient(const SurrogatePair& pair, OptimizerState& st) {
    const auto eps = draw_noise(st);
    MultiAngleResult out;
    out.gradient.assign(st.raw.size(), 0.0);
    for (size_t a = 0; a < kSweepAnglesDeg.size(); ++a) {
        auto g = design_gradient_with_noise(pair, st, DesignKind::airfoil,
                                            deg_to_rad(kSweepAnglesDeg[a]), eps);
        out.fitness[a] = g.fitness;
        out.penalty = g.penalty;
        out.mean_fitness += g.fitness;
        for (size_t i = 0; i < g.gradient.size(); ++i) out.gradient[i] += g.gradient[i];
    }
    const double inv = 1.0 / static_cast<double>(kSweepAnglesDeg.size());
    out.mean_fitness *= inv;
    for (auto& v : out.gradient) v *= inv;
    return out;
}

// Momentum ascent step: v <- momentum*v + g; raw <- raw + lr*v.
inline void gd_step(OptimizerState& st, const std::vector<double>& gradient) {
    if (gradient.size() != st.raw.size())
        throw ShapeMismatch("gd_step: gradient length " + std::to_string(gradient.size()) +
                            " vs state " + std::to_string(st.raw.size()));
    for (size_t i = 0; i < st.raw.size(); ++i) {
        st.velocity[i] = st.momentum * st.velocity[i] + gradient[i];
        st.raw[i] += st.lr * st.velocity[i];
    }
    ++st.iter;
}

// ---------------------------------------------------------------------------
// Plain (noise-free) surrogate and solver evaluations of a constrained design
// ---------------------------------------------------------------------------

inline double surrogate_heat_fitness(const SurrogatePair& pair, const std::vector<double>& constrained) {
    detail::check_pair(pair, DesignKind::heat);
    Tensor<float> in({1, design_dim(DesignKind::heat)});
    for (size_t i = 0; i < constrained.size(); ++i) in.data[i] = static_cast<float>(constrained[i]);
    const auto field = pair.snet.predict(pair.pnet.predict(in));
    return -source_temperature(field, heat_source_mask());
}

inline std::array<double, 9> surrogate_airfoil_lds(const SurrogatePair& pair,
                                                   const std::vector<double>& constrained) {
    detail::check_pair(pair, DesignKind::airfoil);
    std::array<double, 9> out{};
    for (size_t a = 0; a < kSweepAnglesDeg.size(); ++a) {
        Tape<float> tape;
        Tensor<float> in({1, design_dim(DesignKind::airfoil)});
        for (size_t i = 0; i < constrained.size(); ++i) in.data[i] = static_cast<float>(constrained[i]);
        const auto design = tape.leaf(std::move(in), false);
        const auto pbind = pair.pnet.bind(tape, false);
        const auto geom = pair.pnet.forward(tape, pbind, design);
        const auto ld = detail::airfoil_ld_head(tape, pair, geom, deg_to_rad(kSweepAnglesDeg[a]));
        out[a] = static_cast<double>(tape.val(ld)[0]);
    }
    return out;
}

inline double surrogate_mean_fitness(const SurrogatePair& pair, DesignKind kind,
                                     const std::vector<double>& constrained) {
    if (kind == DesignKind::heat) return surrogate_heat_fitness(pair, constrained);
    const auto lds = surrogate_airfoil_lds(pair, constrained);
    double m = 0.0;
    for (double v : lds) m += v;
    return m / static_cast<double>(lds.size());
}

// Solver-side fitness; failures (non-convergence, degenerate or out-of-frame
// geometry, blowup) count as -infinity.
inline double solver_heat_fitness(const std::vector<double>& constrained) {
    constexpr double kFail = -std::numeric_limits<double>::infinity();
    try {
        auto g = heat_sink_geometry(constrained);
        auto res = solve_heat(HeatProblem{g, heat_source_mask()});
        if (!res.converged) return kFail;
        return -source_mean_temperature(res, heat_source_mask());
    } catch (const DegenerateDesign&) {
        return kFail;
    } catch (const DomainError&) {
        return kFail;
    }
}

inline double solver_airfoil_ld(const std::vector<double>& constrained, double angle_rad) {
    constexpr double kFail = -std::numeric_limits<double>::infinity();
    try {
        auto g = rasterize_airfoil(AirfoilParams::from_design(constrained, angle_rad));
        auto res = solve_lbm_steady(FlowProblem{g});
        if (!res.converged) return kFail;
        Tensor<float> p({1, g.h, g.w});
        const size_t cell = static_cast<size_t>(g.h) * g.w;
        std::copy(res.field.data.begin() + 2 * cell, res.field.data.begin() + 3 * cell, p.data.begin());
        return lift_drag_ratio(force_from_pressure(g.tensor(), p));
    } catch (const DegenerateDesign&) {
        return kFail;
    } catch (const OutOfBounds&) {
        return kFail;
    } catch (const ChannelBlocked&) {
        return kFail;
    } catch (const NumericBlowup&) {
        return kFail;
    } catch (const DomainError&) {
        return kFail;
    }
}

inline std::array<double, 9> solver_airfoil_lds(const std::vector<double>& constrained) {
    std::array<double, 9> out{};
    for (size_t a = 0; a < kSweepAnglesDeg.size(); ++a)
        out[a] = solver_airfoil_ld(constrained, deg_to_rad(kSweepAnglesDeg[a]));
    return out;
}

inline double solver_mean_fitness(DesignKind kind, const std::vector<double>& constrained) {
    if (kind == DesignKind::heat) return solver_heat_fitness(constrained);
    const auto lds = solver_airfoil_lds(constrained);
    double m = 0.0;
    for (double v : lds) m += v;
    return m / static_cast<double>(lds.size());
}

// ---------------------------------------------------------------------------
// Full optimization loop
// ---------------------------------------------------------------------------

struct OptimizeConfig {
    DesignKind kind = DesignKind::heat;
    int iterations = 300;
    uint64_t seed = 0;
    bool random_init = false;
    double lr = 0.0;  // 0 -> objective default (0.05 heat, 0.001 airfoil)
    double momentum = 0.9;
    double noise_sigma = 0.01;
    double lambda = 1.0;
    bool solver_eval = true;  // re-evaluate the final design with the solver
};

struct OptimizeResult {
    std::string history_csv;
    OptimizerState state;             // final optimizer state
    std::vector<double> constrained;  // final constrained design
    GeometryGrid geometry;            // rendered final design (zero-angle raster); empty if degenerate
    double surrogate_fitness = std::numeric_limits<double>::quiet_NaN();
    double solver_fitness = std::numeric_limits<double>::quiet_NaN();
    std::array<double, 9> surrogate_angle_fitness{};  // airfoil only
    std::array<double, 9> solver_angle_fitness{};     // airfoil only
    bool solver_ok = false;
};

namespace detail {

inline double l2_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline std::string dump_state(const OptimizerState& st) {
    std::string s = "iter=" + std::to_string(st.iter) + " raw=[";
    for (size_t i = 0; i < st.raw.size(); ++i) s += (i ? "," : "") + fmt_g9(st.raw[i]);
    return s + "]";
}

inline void require_finite(const GradientResult& g, const OptimizerState& st) {
    bool ok = std::isfinite(g.total);
    for (double v : g.gradient) ok = ok && std::isfinite(v);
    if (!ok) throw NonFiniteFitness("non-finite objective or gradient at " + dump_state(st));
}

}  // namespace detail

inline OptimizeResult optimize_design(const SurrogatePair& pair, const OptimizeConfig& cfg,
                                      const std::function<void(const OptimizerState&)>& on_iter = nullptr) {
    detail::check_pair(pair, cfg.kind);
    OptimizerState st = make_optimizer_state(cfg.kind, cfg.seed, cfg.random_init);
    if (cfg.lr > 0.0) st.lr = cfg.lr;
    st.momentum = cfg.momentum;
    st.noise_sigma = cfg.noise_sigma;
    st.lambda = cfg.lambda;

    const bool airfoil = cfg.kind == DesignKind::airfoil;
    std::string csv = "iter,fitness";
    if (airfoil)
        for (size_t a = 0; a < kSweepAnglesDeg.size(); ++a) csv += ",fitness_angle_" + std::to_string(a);
    csv += ",raw_norm,penalty\n";

    for (int it = 0; it < cfg.iterations; ++it) {
        std::string row = std::to_string(st.iter) + ",";
        std::vector<double> grad;
        if (airfoil) {
            auto g = multi_angle_gradient(pair, st);
            row += fmt_g9(g.mean_fitness);
            for (double f : g.fitness) row += "," + fmt_g9(f);
            row += "," + fmt_g9(detail::l2_norm(st.raw)) + "," + fmt_g9(g.penalty);
            if (!std::isfinite(g.mean_fitness))
                throw NonFiniteFitness("non-finite objective at " + detail::dump_state(st));
            for (double v : g.gradient)
                if (!std::isfinite(v))
                    throw NonFiniteFitness("non-finite gradient at " + detail::dump_state(st));
            grad = std::move(g.gradient);
        } else {
            auto g = design_gradient(pair, st, cfg.kind);
            detail::require_finite(g, st);
            row += fmt_g9(g.fitness) + "," + fmt_g9(detail::l2_norm(st.raw)) + "," + fmt_g9(g.penalty);
            grad = std::move(g.gradient);
        }
        csv += row + "\n";
        gd_step(st, grad);
        if (on_iter) on_iter(st);
    }

    OptimizeResult res;
    res.history_csv = std::move(csv);
    res.constrained.resize(st.raw.size());
    for (size_t i = 0; i < st.raw.size(); ++i) res.constrained[i] = hard_sigmoid_value(st.raw[i]);

    if (airfoil) {
        res.surrogate_angle_fitness = surrogate_airfoil_lds(pair, res.constrained);
        double m = 0.0;
        for (double v : res.surrogate_angle_fitness) m += v;
        res.surrogate_fitness = m / 9.0;
    } else {
        res.surrogate_fitness = surrogate_heat_fitness(pair, res.constrained);
    }

    try {
        res.geometry = airfoil ? rasterize_airfoil(AirfoilParams::from_design(res.constrained, 0.0))
                               : heat_sink_geometry(res.constrained);
    } catch (const DegenerateDesign&) {
    } catch (const OutOfBounds&) {
    }

    if (cfg.solver_eval) {
        if (airfoil) {
            res.solver_angle_fitness = solver_airfoil_lds(res.constrained);
            double m = 0.0;
            bool ok = true;
            for (double v : res.solver_angle_fitness) {
                m += v;
                ok = ok && std::isfinite(v);
            }
            res.solver_fitness = m / 9.0;
            res.solver_ok = ok;
        } else {
            res.solver_fitness = solver_heat_fitness(res.constrained);
            res.solver_ok = std::isfinite(res.solver_fitness);
        }
    }
    res.state = std::move(st);
    return res;
}

// ---------------------------------------------------------------------------
// Simulated-annealing baseline (constrained space)
// ---------------------------------------------------------------------------

using FitnessFn = std::function<double(const std::vector<double>&)>;

struct AnnealConfig {
    double t0 = 0.1;
    double cooling = 0.995;
    double proposal_sigma = 0.05;
    int64_t steps = 5000;
    uint64_t seed = 0;
};

struct AnnealResult {
    std::string history_csv;  // step,temperature,fitness,best_fitness
    std::vector<double> best;
    double best_fitness = -std::numeric_limits<double>::infinity();
    std::vector<double> current;
    double current_fitness = -std::numeric_limits<double>::infinity();
    int64_t evaluations = 0;
};

// Metropolis accept/reject with multiplicative cooling; evaluator failures
// count as fitness -infinity and are therefore never accepted.
inline AnnealResult simulated_annealing(const FitnessFn& fitness, int dim, const AnnealConfig& cfg) {
    if (cfg.t0 <= 0.0) throw DomainError("simulated annealing: starting temperature must be positive");
    if (cfg.cooling <= 0.0 || cfg.cooling > 1.0)
        throw DomainError("simulated annealing: cooling factor must be in (0, 1]");
    if (dim < 1) throw DomainError("simulated annealing: dimension must be positive");

    AnnealResult res;
    Rng rng(cfg.seed);
    auto eval = [&](const std::vector<double>& x) -> double {
        ++res.evaluations;
        double f;
        try {
            f = fitness(x);
        } catch (const DegenerateDesign&) {
            return -std::numeric_limits<double>::infinity();
        } catch (const OutOfBounds&) {
            return -std::numeric_limits<double>::infinity();
        } catch (const ChannelBlocked&) {
            return -std::numeric_limits<double>::infinity();
        } catch (const NumericBlowup&) {
            return -std::numeric_limits<double>::infinity();
        }
        return std::isfinite(f) ? f : -std::numeric_limits<double>::infinity();
    };

    std::vector<double> x(static_cast<size_t>(dim), 0.5);
    double fx = eval(x);
    res.best = x;
    res.best_fitness = fx;
    double temp = cfg.t0;
    std::string csv = "step,temperature,fitness,best_fitness\n";

    std::vector<double> y(x.size());
    for (int64_t step = 0; step < cfg.steps; ++step) {
        // Component-wise Metropolis: perturb one uniformly chosen coordinate
        // by N(0, sigma^2) and clip to the box.
        y = x;
        const size_t j = static_cast<size_t>(rng.below(static_cast<uint64_t>(dim)));
        y[j] = std::clamp(x[j] + rng.normal(0.0, cfg.proposal_sigma), 0.0, 1.0);
        const double fy = eval(y);
        const double df = fy - fx;
        const bool accept = df >= 0.0 || rng.uniform() < std::exp(df / temp);
        if (accept) {
            x = y;
            fx = fy;
            if (fx > res.best_fitness) {
                res.best_fitness = fx;
                res.best = x;
            }
        }
        csv += std::to_string(step) + "," + fmt_g9(temp) + "," + fmt_g9(fx) + "," +
               fmt_g9(res.best_fitness) + "\n";
        temp *= cfg.cooling;
    }
    res.history_csv = std::move(csv);
    res.current = std::move(x);
    res.current_fitness = fx;
    return res;
}

// Ready-made evaluators for the two objectives.
inline FitnessFn make_solver_fitness(DesignKind kind) {
    return [kind](const std::vector<double>& c) { return solver_mean_fitness(kind, c); };
}

inline FitnessFn make_surrogate_fitness(const SurrogatePair& pair, DesignKind kind) {
    return [&pair, kind](const std::vector<double>& c) { return surrogate_mean_fitness(pair, kind, c); };
}

// ---------------------------------------------------------------------------
// Single-parameter fitness sweep (noise-free, deterministic)
// ---------------------------------------------------------------------------

inline std::string parameter_sweep(const SurrogatePair& pair, DesignKind kind,
                                   const std::vector<double>& base_constrained, int index, int points) {
    detail::check_pair(pair, kind);
    const int dim = design_dim(kind);
    if (base_constrained.size() != static_cast<size_t>(dim))
        throw ShapeMismatch("parameter_sweep: design length " + std::to_string(base_constrained.size()) +
                            " vs objective " + std::to_string(dim));
    if (index < 0 || index >= dim) throw DomainError("parameter_sweep: index out of range");
    if (points < 2) throw DomainError("parameter_sweep: need at least two sample points");

    std::string csv = "value";
    if (kind == DesignKind::airfoil) {
        for (size_t a = 0; a < kSweepAnglesDeg.size(); ++a) csv += ",fitness_angle_" + std::to_string(a);
        csv += ",mean_ld\n";
    } else {
        csv += ",fitness\n";
    }

    std::vector<double> c = base_constrained;
    for (int i = 0; i < points; ++i) {
        const double v = static_cast<double>(i) / static_cast<double>(points - 1);
        c[static_cast<size_t>(index)] = v;
        csv += fmt_g9(v);
        if (kind == DesignKind::airfoil) {
            const auto lds = surrogate_airfoil_lds(pair, c);
            double m = 0.0;
            for (double ld : lds) {
                csv += "," + fmt_g9(ld);
                m += ld;
            }
            csv += "," + fmt_g9(m / 9.0);
        } else {
            csv += "," + fmt_g9(surrogate_heat_fitness(pair, c));
        }
        csv += "\n";
    }
    return csv;
}

}  // namespace ndo
