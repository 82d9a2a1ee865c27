#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "ndo/blas.hpp"
#include "ndo/tape.hpp"

namespace ndo {

enum class Pad { same, valid };

namespace detail {

struct ConvGeom {
    int oh = 0, ow = 0;          // output spatial size
    int pad_top = 0, pad_left = 0;
};

inline ConvGeom conv_geometry(int h, int w, int kh, int kw, int stride, Pad pad) {
    ConvGeom g;
    if (pad == Pad::same) {
        g.oh = (h + stride - 1) / stride;
        g.ow = (w + stride - 1) / stride;
        const int ph = std::max(0, (g.oh - 1) * stride + kh - h);
        const int pw = std::max(0, (g.ow - 1) * stride + kw - w);
        g.pad_top = ph / 2;
        g.pad_left = pw / 2;
    } else {
        if (h < kh || w < kw)
            throw ShapeMismatch("valid conv: input " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than kernel " + std::to_string(kh) + "x" + std::to_string(kw));
        g.oh = (h - kh) / stride + 1;
        g.ow = (w - kw) / stride + 1;
    }
    return g;
}

// Unfold one [C,H,W] image into a [C*kh*kw, OH*OW] patch matrix.
template <class T>
void im2col(const T* im, int c_in, int h, int w, int kh, int kw, int stride, const ConvGeom& g, T* cols) {
    const int64_t plane = static_cast<int64_t>(g.oh) * g.ow;
    for (int c = 0; c < c_in; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                T* dst = cols + ((static_cast<int64_t>(c) * kh + i) * kw + j) * plane;
                for (int oh = 0; oh < g.oh; ++oh) {
                    const int ih = oh * stride + i - g.pad_top;
                    T* row = dst + static_cast<int64_t>(oh) * g.ow;
                    if (ih < 0 || ih >= h) {
                        std::fill(row, row + g.ow, T(0));
                        continue;
                    }
                    const T* src = im + (static_cast<int64_t>(c) * h + ih) * w;
                    for (int ow = 0; ow < g.ow; ++ow) {
                        const int iw = ow * stride + j - g.pad_left;
                        row[ow] = (iw >= 0 && iw < w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add a patch matrix back onto the image.
template <class T>
void col2im_add(const T* cols, int c_in, int h, int w, int kh, int kw, int stride, const ConvGeom& g, T* im) {
    const int64_t plane = static_cast<int64_t>(g.oh) * g.ow;
    for (int c = 0; c < c_in; ++c) {
        for (int i = 0; i < kh; ++i) {
            for (int j = 0; j < kw; ++j) {
                const T* src = cols + ((static_cast<int64_t>(c) * kh + i) * kw + j) * plane;
                for (int oh = 0; oh < g.oh; ++oh) {
                    const int ih = oh * stride + i - g.pad_top;
                    if (ih < 0 || ih >= h) continue;
                    T* row = im + (static_cast<int64_t>(c) * h + ih) * w;
                    const T* srow = src + static_cast<int64_t>(oh) * g.ow;
                    for (int ow = 0; ow < g.ow; ++ow) {
                        const int iw = ow * stride + j - g.pad_left;
                        if (iw >= 0 && iw < w) row[iw] += srow[ow];
                    }
                }
            }
        }
    }
}

template <class T>
void check_same(const Tape<T>& t, typename Tape<T>::Id a, typename Tape<T>::Id b, const char* what) {
    if (t.val(a).shape != t.val(b).shape)
        throw ShapeMismatch(std::string(what) + ": shapes " + shape_str(t.val(a).shape) + " vs " +
                            shape_str(t.val(b).shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

// 2-D convolution (cross-correlation) over [N,C,H,W] with kernel [F,C,kh,kw]
// and optional bias [F].  Implemented as im2col + GEMM; the backward pass
// recomputes patch matrices instead of storing them.
template <class T>
typename Tape<T>::Id conv2d(Tape<T>& tape, typename Tape<T>::Id in, typename Tape<T>::Id kernel,
                            typename Tape<T>::Id bias, int stride = 1, Pad pad = Pad::same) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(in);
    const Tensor<T>& k = tape.val(kernel);
    require_rank(x.shape, 4, "conv2d input");
    require_rank(k.shape, 4, "conv2d kernel");
    if (stride < 1) throw ShapeMismatch("conv2d: stride must be >= 1");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    if (k.dim(1) != c)
        throw ShapeMismatch("conv2d: kernel channels " + std::to_string(k.dim(1)) + " vs input channels " +
                            std::to_string(c));
    if (bias != Tape<T>::kNone) {
        const Tensor<T>& b = tape.val(bias);
        if (b.rank() != 1 || b.dim(0) != f)
            throw ShapeMismatch("conv2d: bias shape " + shape_str(b.shape) + " for " + std::to_string(f) + " filters");
    }
    const detail::ConvGeom g = detail::conv_geometry(h, w, kh, kw, stride, pad);
    const int kdim = c * kh * kw;
    const int64_t plane = static_cast<int64_t>(g.oh) * g.ow;

    Tensor<T> y({n, f, g.oh, g.ow});
    std::vector<T> cols(static_cast<size_t>(kdim) * plane);
    for (int i = 0; i < n; ++i) {
        detail::im2col(x.data.data() + static_cast<int64_t>(i) * c * h * w, c, h, w, kh, kw, stride, g, cols.data());
        gemm(false, false, f, static_cast<int>(plane), kdim, T(1), k.data.data(), kdim, cols.data(),
             static_cast<int>(plane), T(0), y.data.data() + static_cast<int64_t>(i) * f * plane,
             static_cast<int>(plane));
    }
    if (bias != Tape<T>::kNone) {
        const Tensor<T>& b = tape.val(bias);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < f; ++j) {
                T* row = y.data.data() + (static_cast<int64_t>(i) * f + j) * plane;
                const T bv = b[j];
                for (int64_t p = 0; p < plane; ++p) row[p] += bv;
            }
    }

    std::vector<Id> parents = {in, kernel};
    if (bias != Tape<T>::kNone) parents.push_back(bias);
    auto pull = [in, kernel, bias, stride, g, n, c, h, w, f, kh, kw, kdim, plane](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        const Tensor<T>& xv = t.val(in);
        const Tensor<T>& kv = t.val(kernel);
        const bool want_in = t.needs_grad(in);
        const bool want_k = t.needs_grad(kernel);
        const bool want_b = bias != Tape<T>::kNone && t.needs_grad(bias);
        std::vector<T> cols(static_cast<size_t>(kdim) * plane);
        std::vector<T> dcols(want_in ? cols.size() : 0);
        for (int i = 0; i < n; ++i) {
            const T* dyi = dy.data.data() + static_cast<int64_t>(i) * f * plane;
            if (want_in) {
                gemm(true, false, kdim, static_cast<int>(plane), f, T(1), kv.data.data(), kdim, dyi,
                     static_cast<int>(plane), T(0), dcols.data(), static_cast<int>(plane));
                detail::col2im_add(dcols.data(), c, h, w, kh, kw, stride, g,
                                   t.grad_buf(in).data.data() + static_cast<int64_t>(i) * c * h * w);
            }
            if (want_k) {
                detail::im2col(xv.data.data() + static_cast<int64_t>(i) * c * h * w, c, h, w, kh, kw, stride, g,
                               cols.data());
                gemm(false, true, f, kdim, static_cast<int>(plane), T(1), dyi, static_cast<int>(plane), cols.data(),
                     static_cast<int>(plane), T(1), t.grad_buf(kernel).data.data(), kdim);
            }
            if (want_b) {
                Tensor<T>& db = t.grad_buf(bias);
                for (int j = 0; j < f; ++j) {
                    T acc = T(0);
                    const T* row = dyi + static_cast<int64_t>(j) * plane;
                    for (int64_t p = 0; p < plane; ++p) acc += row[p];
                    db[j] += acc;
                }
            }
        }
    };
    return tape.record(std::move(y), std::move(parents), std::move(pull));
}

// Transposed convolution over [N,C,H,W] with kernel [C,F,kh,kw]: the exact
// adjoint of a stride-s same-padded conv2d, mapping to [N,F,H*s,W*s].
template <class T>
typename Tape<T>::Id conv2d_transpose(Tape<T>& tape, typename Tape<T>::Id in, typename Tape<T>::Id kernel,
                                      int stride = 1) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(in);
    const Tensor<T>& k = tape.val(kernel);
    require_rank(x.shape, 4, "conv2d_transpose input");
    require_rank(k.shape, 4, "conv2d_transpose kernel");
    if (stride < 1) throw ShapeMismatch("conv2d_transpose: stride must be >= 1");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int f = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    if (k.dim(0) != c)
        throw ShapeMismatch("conv2d_transpose: kernel in-channels " + std::to_string(k.dim(0)) +
                            " vs input channels " + std::to_string(c));
    const int ho = h * stride, wo = w * stride;
    // Geometry of the conv this op is the adjoint of: [N,F,ho,wo] -> [N,C,h,w].
    const detail::ConvGeom g = detail::conv_geometry(ho, wo, kh, kw, stride, Pad::same);
    if (g.oh != h || g.ow != w)
        throw ShapeMismatch("conv2d_transpose: inconsistent geometry");
    const int kdim = f * kh * kw;
    const int64_t plane = static_cast<int64_t>(h) * w;

    Tensor<T> y({n, f, ho, wo});
    std::vector<T> cols(static_cast<size_t>(kdim) * plane);
    for (int i = 0; i < n; ++i) {
        gemm(true, false, kdim, static_cast<int>(plane), c, T(1), k.data.data(), kdim,
             x.data.data() + static_cast<int64_t>(i) * c * plane, static_cast<int>(plane), T(0), cols.data(),
             static_cast<int>(plane));
        detail::col2im_add(cols.data(), f, ho, wo, kh, kw, stride, g,
                           y.data.data() + static_cast<int64_t>(i) * f * ho * wo);
    }

    auto pull = [in, kernel, stride, g, n, c, f, kh, kw, kdim, plane, ho, wo](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        const Tensor<T>& xv = t.val(in);
        const Tensor<T>& kv = t.val(kernel);
        const bool want_in = t.needs_grad(in);
        const bool want_k = t.needs_grad(kernel);
        std::vector<T> cols(static_cast<size_t>(kdim) * plane);
        for (int i = 0; i < n; ++i) {
            detail::im2col(dy.data.data() + static_cast<int64_t>(i) * f * ho * wo, f, ho, wo, kh, kw, stride, g,
                           cols.data());
            if (want_in)
                gemm(false, false, c, static_cast<int>(plane), kdim, T(1), kv.data.data(), kdim, cols.data(),
                     static_cast<int>(plane), T(1),
                     t.grad_buf(in).data.data() + static_cast<int64_t>(i) * c * plane, static_cast<int>(plane));
            if (want_k)
                gemm(false, true, c, kdim, static_cast<int>(plane), T(1),
                     xv.data.data() + static_cast<int64_t>(i) * c * plane, static_cast<int>(plane), cols.data(),
                     static_cast<int>(plane), T(1), t.grad_buf(kernel).data.data(), kdim);
        }
    };
    return tape.record(std::move(y), {in, kernel}, std::move(pull));
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

// y = x @ w + b for x [N,P], w [P,Q], b [Q].
template <class T>
typename Tape<T>::Id linear(Tape<T>& tape, typename Tape<T>::Id in, typename Tape<T>::Id weight,
                            typename Tape<T>::Id bias) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(in);
    const Tensor<T>& w = tape.val(weight);
    const Tensor<T>& b = tape.val(bias);
    require_rank(x.shape, 2, "linear input");
    require_rank(w.shape, 2, "linear weight");
    require_rank(b.shape, 1, "linear bias");
    const int n = x.dim(0), p = x.dim(1), q = w.dim(1);
    if (w.dim(0) != p || b.dim(0) != q)
        throw ShapeMismatch("linear: input " + shape_str(x.shape) + ", weight " + shape_str(w.shape) + ", bias " +
                            shape_str(b.shape));
    Tensor<T> y({n, q});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j) y.at2(i, j) = b[j];
    gemm(false, false, n, q, p, T(1), x.data.data(), p, w.data.data(), q, T(1), y.data.data(), q);
    auto pull = [in, weight, bias, n, p, q](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        if (t.needs_grad(in))
            gemm(false, true, n, p, q, T(1), dy.data.data(), q, t.val(weight).data.data(), q, T(1),
                 t.grad_buf(in).data.data(), p);
        if (t.needs_grad(weight))
            gemm(true, false, p, q, n, T(1), t.val(in).data.data(), p, dy.data.data(), q, T(1),
                 t.grad_buf(weight).data.data(), q);
        if (t.needs_grad(bias)) {
            Tensor<T>& db = t.grad_buf(bias);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < q; ++j) db[j] += dy.at2(i, j);
        }
    };
    return tape.record(std::move(y), {in, weight, bias}, std::move(pull));
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

// a + b, where b either matches a's shape or matches a with the leading batch
// dimension dropped (broadcast across the batch).
template <class T>
typename Tape<T>::Id add(Tape<T>& tape, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& av = tape.val(a);
    const Tensor<T>& bv = tape.val(b);
    const bool bcast = av.shape != bv.shape;
    if (bcast) {
        Shape tail(av.shape.begin() + 1, av.shape.end());
        if (tail != bv.shape)
            throw ShapeMismatch("add: shapes " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    }
    Tensor<T> y = av;
    const int64_t m = bv.numel();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += bv[i % m];
    auto pull = [a, b, m](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        if (t.needs_grad(a)) {
            Tensor<T>& da = t.grad_buf(a);
            for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i];
        }
        if (t.needs_grad(b)) {
            Tensor<T>& db = t.grad_buf(b);
            for (int64_t i = 0; i < dy.numel(); ++i) db[i % m] += dy[i];
        }
    };
    return tape.record(std::move(y), {a, b}, std::move(pull));
}

template <class T>
typename Tape<T>::Id sub(Tape<T>& tape, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Id = typename Tape<T>::Id;
    detail::check_same(tape, a, b, "sub");
    Tensor<T> y = tape.val(a);
    const Tensor<T>& bv = tape.val(b);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
    auto pull = [a, b](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        if (t.needs_grad(a)) {
            Tensor<T>& da = t.grad_buf(a);
            for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i];
        }
        if (t.needs_grad(b)) {
            Tensor<T>& db = t.grad_buf(b);
            for (int64_t i = 0; i < dy.numel(); ++i) db[i] -= dy[i];
        }
    };
    return tape.record(std::move(y), {a, b}, std::move(pull));
}

template <class T>
typename Tape<T>::Id mul(Tape<T>& tape, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Id = typename Tape<T>::Id;
    detail::check_same(tape, a, b, "mul");
    Tensor<T> y = tape.val(a);
    const Tensor<T>& bv = tape.val(b);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
    auto pull = [a, b](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        if (t.needs_grad(a)) {
            Tensor<T>& da = t.grad_buf(a);
            const Tensor<T>& bv2 = t.val(b);
            for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i] * bv2[i];
        }
        if (t.needs_grad(b)) {
            Tensor<T>& db = t.grad_buf(b);
            const Tensor<T>& av2 = t.val(a);
            for (int64_t i = 0; i < dy.numel(); ++i) db[i] += dy[i] * av2[i];
        }
    };
    return tape.record(std::move(y), {a, b}, std::move(pull));
}

template <class T>
typename Tape<T>::Id divide(Tape<T>& tape, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Id = typename Tape<T>::Id;
    detail::check_same(tape, a, b, "divide");
    Tensor<T> y = tape.val(a);
    const Tensor<T>& bv = tape.val(b);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] /= bv[i];
    auto pull = [a, b](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        const Tensor<T>& av2 = t.val(a);
        const Tensor<T>& bv2 = t.val(b);
        if (t.needs_grad(a)) {
            Tensor<T>& da = t.grad_buf(a);
            for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i] / bv2[i];
        }
        if (t.needs_grad(b)) {
            Tensor<T>& db = t.grad_buf(b);
            for (int64_t i = 0; i < dy.numel(); ++i) db[i] -= dy[i] * av2[i] / (bv2[i] * bv2[i]);
        }
    };
    return tape.record(std::move(y), {a, b}, std::move(pull));
}

template <class T>
typename Tape<T>::Id scale(Tape<T>& tape, typename Tape<T>::Id a, double s) {
    using Id = typename Tape<T>::Id;
    Tensor<T> y = tape.val(a);
    for (auto& v : y.data) v = static_cast<T>(v * s);
    auto pull = [a, s](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i) da[i] += static_cast<T>(dy[i] * s);
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

template <class T>
typename Tape<T>::Id add_const(Tape<T>& tape, typename Tape<T>::Id a, double c) {
    using Id = typename Tape<T>::Id;
    Tensor<T> y = tape.val(a);
    for (auto& v : y.data) v = static_cast<T>(v + c);
    auto pull = [a](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i];
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

template <class T>
typename Tape<T>::Id neg(Tape<T>& tape, typename Tape<T>::Id a) {
    return scale(tape, a, -1.0);
}

template <class T>
typename Tape<T>::Id relu(Tape<T>& tape, typename Tape<T>::Id a) {
    using Id = typename Tape<T>::Id;
    Tensor<T> y = tape.val(a);
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    auto pull = [a](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        const Tensor<T>& x = t.val(a);
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i)
            if (x[i] > T(0)) da[i] += dy[i];
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

template <class T>
typename Tape<T>::Id leaky_relu(Tape<T>& tape, typename Tape<T>::Id a, double slope = 0.1) {
    using Id = typename Tape<T>::Id;
    Tensor<T> y = tape.val(a);
    for (auto& v : y.data) v = v > T(0) ? v : static_cast<T>(v * slope);
    auto pull = [a, slope](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        const Tensor<T>& x = t.val(a);
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i) da[i] += x[i] > T(0) ? dy[i] : static_cast<T>(dy[i] * slope);
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

template <class T>
typename Tape<T>::Id sigmoid(Tape<T>& tape, typename Tape<T>::Id a) {
    using Id = typename Tape<T>::Id;
    Tensor<T> y = tape.val(a);
    for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
    auto pull = [a](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        const Tensor<T>& yv = t.val(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i] * yv[i] * (T(1) - yv[i]);
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

// clamp(x + 1/2, 0, 1); derivative 1 strictly inside (-1/2, 1/2), 0 outside
// and at the kinks.
template <class T>
typename Tape<T>::Id hard_sigmoid(Tape<T>& tape, typename Tape<T>::Id a) {
    using Id = typename Tape<T>::Id;
    Tensor<T> y = tape.val(a);
    for (auto& v : y.data) v = std::clamp(static_cast<T>(v + T(0.5)), T(0), T(1));
    auto pull = [a](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        const Tensor<T>& x = t.val(a);
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i)
            if (x[i] > T(-0.5) && x[i] < T(0.5)) da[i] += dy[i];
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class T>
typename Tape<T>::Id reshape(Tape<T>& tape, typename Tape<T>::Id a, Shape shape) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(a);
    if (shape_numel(shape) != x.numel())
        throw ShapeMismatch("reshape: " + shape_str(x.shape) + " -> " + shape_str(shape));
    Tensor<T> y(shape, x.data);
    auto pull = [a](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i];
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

// Channel slice [N,C,H,W] -> [N,c1-c0,H,W].
template <class T>
typename Tape<T>::Id slice_channels(Tape<T>& tape, typename Tape<T>::Id a, int c0, int c1) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(a);
    require_rank(x.shape, 4, "slice_channels input");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c0 < 0 || c1 > c || c0 >= c1)
        throw ShapeMismatch("slice_channels: [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " +
                            std::to_string(c) + " channels");
    const int64_t plane = static_cast<int64_t>(h) * w;
    Tensor<T> y({n, c1 - c0, h, w});
    for (int i = 0; i < n; ++i)
        std::memcpy(y.data.data() + static_cast<int64_t>(i) * (c1 - c0) * plane,
                    x.data.data() + (static_cast<int64_t>(i) * c + c0) * plane,
                    sizeof(T) * static_cast<size_t>((c1 - c0) * plane));
    auto pull = [a, c0, c1, n, c, plane](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int i = 0; i < n; ++i) {
            const T* src = dy.data.data() + static_cast<int64_t>(i) * (c1 - c0) * plane;
            T* dst = da.data.data() + (static_cast<int64_t>(i) * c + c0) * plane;
            for (int64_t j = 0; j < (c1 - c0) * plane; ++j) dst[j] += src[j];
        }
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

// Channel concat of [N,Ca,H,W] and [N,Cb,H,W].
template <class T>
typename Tape<T>::Id concat_channels(Tape<T>& tape, typename Tape<T>::Id a, typename Tape<T>::Id b) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& av = tape.val(a);
    const Tensor<T>& bv = tape.val(b);
    require_rank(av.shape, 4, "concat_channels input");
    require_rank(bv.shape, 4, "concat_channels input");
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw ShapeMismatch("concat_channels: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    const int64_t plane = static_cast<int64_t>(av.dim(2)) * av.dim(3);
    Tensor<T> y({n, ca + cb, av.dim(2), av.dim(3)});
    for (int i = 0; i < n; ++i) {
        std::memcpy(y.data.data() + static_cast<int64_t>(i) * (ca + cb) * plane,
                    av.data.data() + static_cast<int64_t>(i) * ca * plane, sizeof(T) * static_cast<size_t>(ca * plane));
        std::memcpy(y.data.data() + (static_cast<int64_t>(i) * (ca + cb) + ca) * plane,
                    bv.data.data() + static_cast<int64_t>(i) * cb * plane, sizeof(T) * static_cast<size_t>(cb * plane));
    }
    auto pull = [a, b, n, ca, cb, plane](Tape<T>& t, Id self) {
        const Tensor<T>& dy = t.grad_buf(self);
        if (t.needs_grad(a)) {
            Tensor<T>& da = t.grad_buf(a);
            for (int i = 0; i < n; ++i) {
                const T* src = dy.data.data() + static_cast<int64_t>(i) * (ca + cb) * plane;
                T* dst = da.data.data() + static_cast<int64_t>(i) * ca * plane;
                for (int64_t j = 0; j < ca * plane; ++j) dst[j] += src[j];
            }
        }
        if (t.needs_grad(b)) {
            Tensor<T>& db = t.grad_buf(b);
            for (int i = 0; i < n; ++i) {
                const T* src = dy.data.data() + (static_cast<int64_t>(i) * (ca + cb) + ca) * plane;
                T* dst = db.data.data() + static_cast<int64_t>(i) * cb * plane;
                for (int64_t j = 0; j < cb * plane; ++j) dst[j] += src[j];
            }
        }
    };
    return tape.record(std::move(y), {a, b}, std::move(pull));
}

// Nearest-neighbour 2x upsample.
template <class T>
typename Tape<T>::Id upsample2(Tape<T>& tape, typename Tape<T>::Id a) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(a);
    require_rank(x.shape, 4, "upsample2 input");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c, 2 * h, 2 * w});
    for (int i = 0; i < n * c; ++i) {
        const T* src = x.data.data() + static_cast<int64_t>(i) * h * w;
        T* dst = y.data.data() + static_cast<int64_t>(i) * 4 * h * w;
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col) {
                const T v = src[r * w + col];
                T* d = dst + (2 * r) * (2 * w) + 2 * col;
                d[0] = v;
                d[1] = v;
                d[2 * w] = v;
                d[2 * w + 1] = v;
            }
    }
    auto pull = [a, n, c, h, w](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int i = 0; i < n * c; ++i) {
            const T* src = dy.data.data() + static_cast<int64_t>(i) * 4 * h * w;
            T* dst = da.data.data() + static_cast<int64_t>(i) * h * w;
            for (int r = 0; r < h; ++r)
                for (int col = 0; col < w; ++col) {
                    const T* s = src + (2 * r) * (2 * w) + 2 * col;
                    dst[r * w + col] += s[0] + s[1] + s[2 * w] + s[2 * w + 1];
                }
        }
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

// 2x downsample keeping the top-left sample of each 2x2 block, so that
// downsample2(upsample2(x)) == x.  Requires even spatial dims.
template <class T>
typename Tape<T>::Id downsample2(Tape<T>& tape, typename Tape<T>::Id a) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(a);
    require_rank(x.shape, 4, "downsample2 input");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 || w % 2)
        throw ShapeMismatch("downsample2: spatial dims must be even, got " + shape_str(x.shape));
    Tensor<T> y({n, c, h / 2, w / 2});
    for (int i = 0; i < n * c; ++i) {
        const T* src = x.data.data() + static_cast<int64_t>(i) * h * w;
        T* dst = y.data.data() + static_cast<int64_t>(i) * (h / 2) * (w / 2);
        for (int r = 0; r < h / 2; ++r)
            for (int col = 0; col < w / 2; ++col) dst[r * (w / 2) + col] = src[(2 * r) * w + 2 * col];
    }
    auto pull = [a, n, c, h, w](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dy = t.grad_buf(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int i = 0; i < n * c; ++i) {
            const T* src = dy.data.data() + static_cast<int64_t>(i) * (h / 2) * (w / 2);
            T* dst = da.data.data() + static_cast<int64_t>(i) * h * w;
            for (int r = 0; r < h / 2; ++r)
                for (int col = 0; col < w / 2; ++col) dst[(2 * r) * w + 2 * col] += src[r * (w / 2) + col];
        }
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
typename Tape<T>::Id sum_all(Tape<T>& tape, typename Tape<T>::Id a) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(a);
    T acc = T(0);
    for (const T& v : x.data) acc += v;
    auto pull = [a](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const T d = t.grad_buf(self)[0];
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < da.numel(); ++i) da[i] += d;
    };
    return tape.record(Tensor<T>::scalar(acc), {a}, std::move(pull));
}

template <class T>
typename Tape<T>::Id mean_all(Tape<T>& tape, typename Tape<T>::Id a) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(a);
    T acc = T(0);
    for (const T& v : x.data) acc += v;
    const int64_t n = x.numel();
    acc = static_cast<T>(acc / static_cast<T>(n));
    auto pull = [a, n](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const T d = static_cast<T>(t.grad_buf(self)[0] / static_cast<T>(n));
        Tensor<T>& da = t.grad_buf(a);
        for (int64_t i = 0; i < da.numel(); ++i) da[i] += d;
    };
    return tape.record(Tensor<T>::scalar(acc), {a}, std::move(pull));
}

// ---------------------------------------------------------------------------
// Differentiable rotation
// ---------------------------------------------------------------------------

// Rotates image content by `theta` (radians) about (cy, cx) in row/col
// coordinates with bilinear sampling and zero padding: out(p) = in(q),
// q = center + R(-theta) (p - center) with x = col, y = row.  Positive theta
// with row 0 at the top turns content counter-clockwise on screen.
template <class T>
typename Tape<T>::Id rotate_bilinear(Tape<T>& tape, typename Tape<T>::Id a, double theta, double cy, double cx) {
    using Id = typename Tape<T>::Id;
    const Tensor<T>& x = tape.val(a);
    require_rank(x.shape, 4, "rotate_bilinear input");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const double ct = std::cos(theta), st = std::sin(theta);
    Tensor<T> y({n, c, h, w});
    for (int i = 0; i < n * c; ++i) {
        const T* src = x.data.data() + static_cast<int64_t>(i) * h * w;
        T* dst = y.data.data() + static_cast<int64_t>(i) * h * w;
        for (int r = 0; r < h; ++r) {
            const double dy = r - cy;
            for (int col = 0; col < w; ++col) {
                const double dx = col - cx;
                const double qx = cx + ct * dx + st * dy;
                const double qy = cy - st * dx + ct * dy;
                const int x0 = static_cast<int>(std::floor(qx));
                const int y0 = static_cast<int>(std::floor(qy));
                const double wx = qx - x0, wy = qy - y0;
                double acc = 0.0;
                for (int t2 = 0; t2 < 2; ++t2)
                    for (int s2 = 0; s2 < 2; ++s2) {
                        const int yy = y0 + t2, xx = x0 + s2;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        const double wgt = (t2 ? wy : 1.0 - wy) * (s2 ? wx : 1.0 - wx);
                        acc += wgt * static_cast<double>(src[yy * w + xx]);
                    }
                dst[r * w + col] = static_cast<T>(acc);
            }
        }
    }
    auto pull = [a, n, c, h, w, ct, st, cy, cx](Tape<T>& t, Id self) {
        if (!t.needs_grad(a)) return;
        const Tensor<T>& dyv = t.grad_buf(self);
        Tensor<T>& da = t.grad_buf(a);
        for (int i = 0; i < n * c; ++i) {
            const T* src = dyv.data.data() + static_cast<int64_t>(i) * h * w;
            T* dst = da.data.data() + static_cast<int64_t>(i) * h * w;
            for (int r = 0; r < h; ++r) {
                const double dy = r - cy;
                for (int col = 0; col < w; ++col) {
                    const double dx = col - cx;
                    const double qx = cx + ct * dx + st * dy;
                    const double qy = cy - st * dx + ct * dy;
                    const int x0 = static_cast<int>(std::floor(qx));
                    const int y0 = static_cast<int>(std::floor(qy));
                    const double wx = qx - x0, wy = qy - y0;
                    const double d = static_cast<double>(src[r * w + col]);
                    for (int t2 = 0; t2 < 2; ++t2)
                        for (int s2 = 0; s2 < 2; ++s2) {
                            const int yy = y0 + t2, xx = x0 + s2;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                            const double wgt = (t2 ? wy : 1.0 - wy) * (s2 ? wx : 1.0 - wx);
                            dst[yy * w + xx] += static_cast<T>(wgt * d);
                        }
                }
            }
        }
    };
    return tape.record(std::move(y), {a}, std::move(pull));
}

}  // namespace ndo
