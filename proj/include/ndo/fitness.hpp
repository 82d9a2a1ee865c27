#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ndo/errors.hpp"
#include "ndo/ops.hpp"
#include "ndo/tape.hpp"
#include "ndo/tensor.hpp"

namespace ndo {

constexpr int kBoundaryMargin = 2;
constexpr double kDragGuard = 1e-4;

namespace detail {

// Fixed central-difference kernels packed for the transpose convolution:
// applying them yields n = -grad(g), the outward normal field of an
// occupancy grid.  Layout [C=1, F=2, 3, 3]; channel 0 -> n_x, 1 -> n_y.
template <class T>
Tensor<T> normal_kernels() {
    Tensor<T> k({1, 2, 3, 3});
    auto at = [&](int f, int dy, int dx) -> T& {
        return k.data[static_cast<size_t>(f) * 9 + static_cast<size_t>(dy) * 3 + dx];
    };
    at(0, 1, 0) = T(-0.5);  // Kx middle row [-0.5, 0, 0.5]
    at(0, 1, 2) = T(0.5);
    at(1, 0, 1) = T(-0.5);  // Ky middle column
    at(1, 2, 1) = T(0.5);
    return k;
}

}  // namespace detail

// n = -grad(g) via fixed 3x3 central-difference kernels applied with the
// transpose convolution, stride 1, zero padding.  [1,1,H,W] -> [1,2,H,W].
template <class T>
typename Tape<T>::Id boundary_normals(Tape<T>& tape, typename Tape<T>::Id g) {
    const Tensor<T>& x = tape.val(g);
    require_rank(x.shape, 4, "boundary_normals input");
    if (x.dim(1) != 1) throw ShapeMismatch("boundary_normals: expected a single occupancy channel");
    const auto k = tape.leaf(detail::normal_kernels<T>(), false);
    return conv2d_transpose(tape, g, k, 1);
}

// Throws if any occupancy above 0.5 sits within `margin` cells of the edge;
// the surface integral needs the full stencil inside the grid.
template <class V>
void require_interior(const Tensor<V>& g, int margin = kBoundaryMargin) {
    require_rank(g.shape, 4, "require_interior input");
    const int h = g.dim(2), w = g.dim(3);
    for (int n = 0; n < g.dim(0); ++n)
        for (int c = 0; c < g.dim(1); ++c)
            for (int r = 0; r < h; ++r)
                for (int q = 0; q < w; ++q) {
                    const bool edge = r < margin || r >= h - margin || q < margin || q >= w - margin;
                    if (edge && g.at4(n, c, r, q) > V(0.5))
                        throw GeometryTouchesBoundary("geometry occupies the " +
                                                      std::to_string(margin) + "-cell margin");
                }
}

template <class T>
struct ForceIds {
    typename Tape<T>::Id fx;  // drag direction, +x downstream
    typename Tape<T>::Id fy;  // lift direction, up (against the row axis)
};

// F = -sum(p * n) with outward normals; fx is the +x component of the force
// on the body, fy its upward component (rows grow downward, hence the sign).
template <class T>
ForceIds<T> force_from_pressure_ids(Tape<T>& tape, typename Tape<T>::Id g, typename Tape<T>::Id p) {
    const Tensor<T>& gv = tape.val(g);
    const Tensor<T>& pv = tape.val(p);
    require_rank(gv.shape, 4, "force_from_pressure geometry");
    require_rank(pv.shape, 4, "force_from_pressure pressure");
    if (gv.shape != pv.shape)
        throw ShapeMismatch("force_from_pressure: geometry " + shape_str(gv.shape) +
                            " vs pressure " + shape_str(pv.shape));
    require_interior(gv);
    const auto n = boundary_normals(tape, g);
    const auto nx = slice_channels(tape, n, 0, 1);
    const auto ny = slice_channels(tape, n, 1, 2);
    ForceIds<T> f;
    f.fx = neg(tape, sum_all(tape, mul(tape, p, nx)));
    f.fy = sum_all(tape, mul(tape, p, ny));
    return f;
}

// fy / (fx + delta), guarded against near-zero drag.
template <class T>
typename Tape<T>::Id lift_drag_ratio_id(Tape<T>& tape, const ForceIds<T>& f) {
    return divide(tape, f.fy, add_const(tape, f.fx, kDragGuard));
}

// Mean of a single-channel field over the mask cells.
template <class T>
typename Tape<T>::Id source_temperature_id(Tape<T>& tape, typename Tape<T>::Id field,
                                           const std::vector<uint8_t>& mask) {
    const Tensor<T>& x = tape.val(field);
    require_rank(x.shape, 4, "source_temperature field");
    if (x.dim(0) != 1 || x.dim(1) != 1)
        throw ShapeMismatch("source_temperature: expected [1,1,H,W], got " + shape_str(x.shape));
    if (static_cast<size_t>(x.dim(2)) * static_cast<size_t>(x.dim(3)) != mask.size())
        throw ShapeMismatch("source_temperature: mask size does not match the field");
    Tensor<T> m(x.shape);
    int64_t count = 0;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            m.data[i] = T(1);
            ++count;
        }
    if (!count) throw EmptyMask("source_temperature: empty mask");
    const auto mid = tape.leaf(std::move(m), false);
    return scale(tape, sum_all(tape, mul(tape, field, mid)), 1.0 / static_cast<double>(count));
}

// ---------------------------------------------------------------------------
// Plain-value wrappers for reporting and solver-side evaluation
// ---------------------------------------------------------------------------

struct ForceVector {
    double fx = 0.0;
    double fy = 0.0;
};

inline double lift_drag_ratio(const ForceVector& f) { return f.fy / (f.fx + kDragGuard); }

// Evaluate the force on plain tensors ([1,H,W] or [1,1,H,W]) by running the
// same tape graph forward in 64-bit.
inline ForceVector force_from_pressure(const Tensor<float>& g, const Tensor<float>& p) {
    auto lift4 = [](const Tensor<float>& t) {
        Tensor<double> r;
        if (t.rank() == 3)
            r = Tensor<double>({1, t.dim(0), t.dim(1), t.dim(2)});
        else if (t.rank() == 4)
            r = Tensor<double>(t.shape);
        else
            throw ShapeMismatch("force_from_pressure: expected rank 3 or 4, got " + shape_str(t.shape));
        for (size_t i = 0; i < t.data.size(); ++i) r.data[i] = static_cast<double>(t.data[i]);
        return r;
    };
    Tape<double> tape;
    const auto gid = tape.leaf(lift4(g), false);
    const auto pid = tape.leaf(lift4(p), false);
    const auto ids = force_from_pressure_ids(tape, gid, pid);
    return ForceVector{tape.val(ids.fx).data[0], tape.val(ids.fy).data[0]};
}

inline double source_temperature(const Tensor<float>& field, const std::vector<uint8_t>& mask) {
    double acc = 0.0;
    int64_t count = 0;
    if (field.numel() != static_cast<int64_t>(mask.size()))
        throw ShapeMismatch("source_temperature: mask size does not match the field");
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
            acc += static_cast<double>(field.data[i]);
            ++count;
        }
    if (!count) throw EmptyMask("source_temperature: empty mask");
    return acc / static_cast<double>(count);
}

}  // namespace ndo
