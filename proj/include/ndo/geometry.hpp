#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ndo/errors.hpp"
#include "ndo/grid.hpp"
#include "ndo/rng.hpp"

namespace ndo {

// Scalar hard sigmoid and its inverse.  The inverse is exact on (0,1); the
// closed endpoints map just inside the linear region so a constrained value
// always has a usable unconstrained preimage.
inline double hard_sigmoid_value(double x) { return std::clamp(x + 0.5, 0.0, 1.0); }

inline double hard_sigmoid_inverse(double c) {
    if (c < 0.0 || c > 1.0) throw DomainError("hard_sigmoid_inverse: value outside [0,1]");
    if (c <= 0.0) return -0.499;
    if (c >= 1.0) return 0.499;
    return c - 0.5;
}

enum class DesignKind { heat, airfoil };

inline int design_dim(DesignKind k) { return k == DesignKind::heat ? 15 : 42; }

// Unconstrained design parameters; the solver/network-facing view is the
// elementwise hard sigmoid.
struct DesignVector {
    std::vector<double> raw;

    std::vector<double> constrained() const {
        std::vector<double> c(raw.size());
        for (size_t i = 0; i < raw.size(); ++i) c[i] = hard_sigmoid_value(raw[i]);
        return c;
    }

    static DesignVector from_constrained(const std::vector<double>& c) {
        DesignVector d;
        d.raw.resize(c.size());
        for (size_t i = 0; i < c.size(); ++i) d.raw[i] = hard_sigmoid_inverse(c[i]);
        return d;
    }
};

// Uniform(0,1) constrained draws, rounded through float32 so stored datasets
// regenerate their geometry bit-exactly from the file contents.
inline DesignVector sample_design(DesignKind kind, Rng& rng) {
    std::vector<double> c(static_cast<size_t>(design_dim(kind)));
    for (auto& v : c) v = static_cast<double>(static_cast<float>(rng.uniform()));
    return DesignVector::from_constrained(c);
}

// Angle of attack draw shared by flow datasets and the optimizer evaluation.
inline double sample_angle(Rng& rng) {
    constexpr double deg = 3.14159265358979323846 / 180.0;
    return rng.uniform(-5.0 * deg, 17.5 * deg);
}

// ---------------------------------------------------------------------------
// Heat sink: 15 fins on a base slab, constant total material
// ---------------------------------------------------------------------------

struct HeatSinkSpec {
    static constexpr int grid = 64;
    static constexpr int fin_count = 15;
    static constexpr int base_rows = 4;      // rows 60..63
    static constexpr int base_col0 = 8;
    static constexpr int base_col1 = 55;     // inclusive
    static constexpr int fin_pitch = 3;      // 2 px fin + 1 px gap
    static constexpr int total_fin_length = 240;
    static constexpr int max_fin_height = 48;
    static constexpr int source_col0 = 28;   // 8-column strip, centered on the base
    static constexpr int source_col1 = 35;
    static constexpr int fin_col(int i) { return base_col0 + fin_pitch * i; }
};

// Fin heights h_i = round(240 p_i / sum p), capped at 48, with one
// proportional redistribution pass of the capping shortfall among uncapped
// fins; any residual rounding shortfall is accepted.
inline std::vector<int> fin_heights(const std::vector<double>& p) {
    if (p.size() != HeatSinkSpec::fin_count) throw ShapeMismatch("fin_heights: expected 15 parameters");
    double sum = 0.0;
    for (double v : p) sum += v;
    if (sum <= 1e-6) throw DegenerateDesign("fin_heights: all parameters (near) zero");

    std::vector<int> h(p.size());
    std::vector<bool> capped(p.size(), false);
    int total = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        const long long r = std::llround(HeatSinkSpec::total_fin_length * p[i] / sum);
        h[i] = static_cast<int>(std::min<long long>(r, HeatSinkSpec::max_fin_height));
        capped[i] = r >= HeatSinkSpec::max_fin_height;
        total += h[i];
    }
    const int shortfall = HeatSinkSpec::total_fin_length - total;
    if (shortfall > 0) {
        double w_uncapped = 0.0;
        for (size_t i = 0; i < p.size(); ++i)
            if (!capped[i]) w_uncapped += p[i];
        if (w_uncapped > 1e-12)
            for (size_t i = 0; i < p.size(); ++i)
                if (!capped[i]) {
                    const long long add = std::llround(shortfall * p[i] / w_uncapped);
                    h[i] = static_cast<int>(
                        std::min<long long>(h[i] + add, HeatSinkSpec::max_fin_height));
                }
    }
    return h;
}

inline GeometryGrid heat_sink_geometry(const std::vector<double>& constrained) {
    const std::vector<int> h = fin_heights(constrained);
    constexpr int n = HeatSinkSpec::grid;
    GeometryGrid g(n, n);
    for (int r = n - HeatSinkSpec::base_rows; r < n; ++r)
        for (int c = HeatSinkSpec::base_col0; c <= HeatSinkSpec::base_col1; ++c) g.at(r, c) = 1.0f;
    const int base_top = n - HeatSinkSpec::base_rows;  // row 60
    for (int i = 0; i < HeatSinkSpec::fin_count; ++i)
        for (int r = base_top - h[static_cast<size_t>(i)]; r < base_top; ++r) {
            g.at(r, HeatSinkSpec::fin_col(i)) = 1.0f;
            g.at(r, HeatSinkSpec::fin_col(i) + 1) = 1.0f;
        }
    return g;
}

inline std::vector<uint8_t> heat_source_mask() {
    constexpr int n = HeatSinkSpec::grid;
    std::vector<uint8_t> m(static_cast<size_t>(n) * n, 0);
    for (int c = HeatSinkSpec::source_col0; c <= HeatSinkSpec::source_col1; ++c)
        m[static_cast<size_t>(n - 1) * n + c] = 1;
    return m;
}

// ---------------------------------------------------------------------------
// Airfoil: class/shape transformation with Bernstein shape polynomials
// ---------------------------------------------------------------------------

namespace detail {

// C(n, i) as exact doubles via the multiplicative recurrence.
inline double binomial(int n, int i) {
    double c = 1.0;
    for (int k = 1; k <= i; ++k) c = c * (n - k + 1) / k;
    return c;
}

inline double bernstein_sum(const double* a, int n, double x) {
    // sum_i a_i C(n,i) x^i (1-x)^(n-i)
    double acc = 0.0;
    for (int i = 0; i <= n; ++i)
        acc += a[i] * binomial(n, i) * std::pow(x, i) * std::pow(1.0 - x, n - i);
    return acc;
}

}  // namespace detail

// S(x) = x^0.5 (1-x) * sum_{i=0..20} A_i C(20,i) x^i (1-x)^(20-i)
inline double airfoil_surface_2d(const double* a21, double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("airfoil_surface_2d: x outside [0,1]");
    return std::sqrt(x) * (1.0 - x) * detail::bernstein_sum(a21, 20, x);
}

// 3D surface height at chordwise x, spanwise y for a sheared (s), tapered (l)
// planform: local chord coordinate phi = (x - s y) / ((l - 0.5) y + 0.5),
// height = phi^0.5 (1-phi) * [sum_i A_i C(12,i) phi^i (1-phi)^(12-i)]
//                          * [sum_j B_j C(12,j) y^j (1-y)^(12-j)].
inline double airfoil_surface_3d(const double* a13, const double* b13, double s, double l, double x, double y) {
    if (!(x >= 0.0 && x <= 1.0) || !(y >= 0.0 && y <= 1.0))
        throw DomainError("airfoil_surface_3d: x,y outside [0,1]");
    const double denom = (l - 0.5) * y + 0.5;
    if (denom <= 1e-9) throw DomainError("airfoil_surface_3d: degenerate planform denominator");
    const double phi = (x - s * y) / denom;
    if (!(phi >= 0.0 && phi <= 1.0)) throw DomainError("airfoil_surface_3d: phi outside [0,1]");
    return std::sqrt(phi) * (1.0 - phi) * detail::bernstein_sum(a13, 12, phi) * detail::bernstein_sum(b13, 12, y);
}

struct AirfoilParams {
    std::array<double, 21> upper{};  // >= 0
    std::array<double, 21> lower{};  // <= 0
    double theta = 0.0;              // radians, nose-up positive

    // 42 constrained values in [0,1]: coefficients scale to +-0.3.
    static AirfoilParams from_design(const std::vector<double>& c, double theta) {
        if (c.size() != 42) throw ShapeMismatch("airfoil design needs 42 parameters");
        AirfoilParams p;
        for (int i = 0; i < 21; ++i) {
            p.upper[static_cast<size_t>(i)] = 0.3 * c[static_cast<size_t>(i)];
            p.lower[static_cast<size_t>(i)] = -0.3 * c[static_cast<size_t>(i) + 21];
        }
        p.theta = theta;
        return p;
    }
};

struct AirfoilRasterSpec {
    static constexpr int grid_h = 96;
    static constexpr int grid_w = 192;
    static constexpr int chord_px = 64;
    static constexpr double pivot_row = 48.0;  // quarter-chord cell
    static constexpr double pivot_col = 64.0;
    static constexpr double le_col = 48.0;     // pivot_col - chord/4
    static constexpr int margin = 2;
};

// Rasterize at angle theta: a cell is solid iff its center, rotated by -theta
// about the quarter-chord pivot, lands between the chord-scaled surfaces.
// Row 0 is the top, so positive theta pitches the nose up.
inline GeometryGrid rasterize_airfoil(const AirfoilParams& p) {
    using S = AirfoilRasterSpec;
    // Surface sanity on a fine chordwise sampling.
    double max_thickness = 0.0;
    for (int k = 0; k <= 256; ++k) {
        const double x = k / 256.0;
        const double su = airfoil_surface_2d(p.upper.data(), x);
        const double sl = airfoil_surface_2d(p.lower.data(), x);
        if (su < sl) throw DegenerateDesign("rasterize_airfoil: surfaces cross");
        max_thickness = std::max(max_thickness, su - sl);
    }
    if (max_thickness * S::chord_px < 2.0)
        throw DegenerateDesign("rasterize_airfoil: maximum thickness below 2 cells");

    GeometryGrid g(S::grid_h, S::grid_w);
    const double ct = std::cos(p.theta), st = std::sin(p.theta);
    int64_t solid_count = 0;
    for (int r = 0; r < S::grid_h; ++r)
        for (int c = 0; c < S::grid_w; ++c) {
            const double dx = c - S::pivot_col;
            const double dy = r - S::pivot_row;
            const double qx = S::pivot_col + ct * dx + st * dy;
            const double qy = S::pivot_row - st * dx + ct * dy;
            const double t = (qx - S::le_col) / S::chord_px;
            if (t < 0.0 || t > 1.0) continue;
            const double su = airfoil_surface_2d(p.upper.data(), t);
            const double sl = airfoil_surface_2d(p.lower.data(), t);
            const double off = qy - S::pivot_row;
            if (off >= -S::chord_px * su && off <= -S::chord_px * sl) {
                g.at(r, c) = 1.0f;
                ++solid_count;
                if (r < S::margin || r >= S::grid_h - S::margin || c < S::margin || c >= S::grid_w - S::margin)
                    throw OutOfBounds("rasterize_airfoil: foil touches the 2-cell margin");
            }
        }
    if (!solid_count) throw DegenerateDesign("rasterize_airfoil: no solid cells");
    return g;
}

}  // namespace ndo
