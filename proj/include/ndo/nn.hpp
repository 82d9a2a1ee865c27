#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ndo/ops.hpp"
#include "ndo/rng.hpp"
#include "ndo/tape.hpp"

namespace ndo {

// Ordered, named parameter collection.  Insertion order defines the binding
// order on tapes, the Adam slot order and the checkpoint layout.
template <class T>
class ParamSet {
public:
    int add(std::string name, Tensor<T> t) {
        names_.push_back(std::move(name));
        tensors_.push_back(std::move(t));
        return static_cast<int>(tensors_.size()) - 1;
    }

    int count() const { return static_cast<int>(tensors_.size()); }
    const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
    Tensor<T>& tensor(int i) { return tensors_[static_cast<size_t>(i)]; }
    const Tensor<T>& tensor(int i) const { return tensors_[static_cast<size_t>(i)]; }

    int find(const std::string& name) const {
        for (size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return static_cast<int>(i);
        return -1;
    }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& t : tensors_) n += t.numel();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> tensors_;
};

// Tape leaf ids for one forward pass of a model.
template <class T>
struct ModelBinding {
    std::vector<typename Tape<T>::Id> ids;
};

namespace detail {

template <class T>
Tensor<T> he_conv(Rng& rng, int f, int c, int kh, int kw) {
    const double std = std::sqrt(2.0 / (static_cast<double>(c) * kh * kw));
    return Tensor<T>::randn({f, c, kh, kw}, rng, std);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// FieldNet: occupancy grid -> steady-state field (the simulation surrogate)
// ---------------------------------------------------------------------------

struct FieldNetConfig {
    int in_channels = 1;
    int out_channels = 1;   // 1 = temperature, 3 = (vx, vy, p)
    int levels = 3;         // encoder/decoder depth
    int base_width = 8;     // channels at full resolution, doubling per level
    int blocks_per_level = 2;
    int grid_h = 64;
    int grid_w = 64;

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || levels < 1 || base_width < 1 || blocks_per_level < 0)
            throw ShapeMismatch("field net config: non-positive size");
        const int div = 1 << levels;
        if (grid_h % div || grid_w % div)
            throw ShapeMismatch("field net config: grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                " not divisible by 2^levels = " + std::to_string(div));
    }

    int width_at(int level) const { return base_width << std::min(level, levels - 1); }
};

// Encoder/decoder convnet with gated residual blocks and skip connections.
// A block at width C computes
//   c1 = conv3x3(act(x)); (a, g) = split(conv3x3(act(c1)) -> 2C);
//   out = x + a * sigmoid(g)
// so a freshly-zeroed block is the identity.  Downsampling picks the top-left
// sample of each 2x2 block; upsampling is nearest-neighbour; both transitions
// carry a 3x3 conv.  The head is a 1x1 conv with no activation.
template <class T>
class FieldNet {
public:
    explicit FieldNet(FieldNetConfig cfg, uint64_t seed = 0) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        stem_w_ = params_.add("stem.w", detail::he_conv<T>(rng, cfg_.base_width, cfg_.in_channels, 3, 3));
        stem_b_ = params_.add("stem.b", Tensor<T>::zeros({cfg_.base_width}));
        for (int l = 0; l < cfg_.levels; ++l) {
            const int c = cfg_.width_at(l);
            Level lev;
            for (int b = 0; b < cfg_.blocks_per_level; ++b)
                lev.blocks.push_back(make_block(rng, "enc" + std::to_string(l) + ".block" + std::to_string(b), c));
            const int cn = cfg_.width_at(l + 1);
            lev.trans_w = params_.add("down" + std::to_string(l) + ".w", detail::he_conv<T>(rng, cn, c, 3, 3));
            lev.trans_b = params_.add("down" + std::to_string(l) + ".b", Tensor<T>::zeros({cn}));
            enc_.push_back(lev);
        }
        const int cb = cfg_.width_at(cfg_.levels - 1);
        for (int b = 0; b < cfg_.blocks_per_level; ++b)
            mid_.push_back(make_block(rng, "mid.block" + std::to_string(b), cb));
        for (int l = cfg_.levels - 1; l >= 0; --l) {
            const int c = cfg_.width_at(l);
            const int cin = cfg_.width_at(l + 1) + c;  // upsampled path + skip
            Level lev;
            lev.trans_w = params_.add("up" + std::to_string(l) + ".w", detail::he_conv<T>(rng, c, cin, 3, 3));
            lev.trans_b = params_.add("up" + std::to_string(l) + ".b", Tensor<T>::zeros({c}));
            for (int b = 0; b < cfg_.blocks_per_level; ++b)
                lev.blocks.push_back(make_block(rng, "dec" + std::to_string(l) + ".block" + std::to_string(b), c));
            dec_.push_back(lev);
        }
        head_w_ = params_.add("head.w", detail::he_conv<T>(rng, cfg_.out_channels, cfg_.base_width, 1, 1));
        head_b_ = params_.add("head.b", Tensor<T>::zeros({cfg_.out_channels}));
    }

    ModelBinding<T> bind(Tape<T>& tape, bool requires_grad = true) const {
        ModelBinding<T> b;
        b.ids.reserve(static_cast<size_t>(params_.count()));
        for (int i = 0; i < params_.count(); ++i) b.ids.push_back(tape.leaf(params_.tensor(i), requires_grad));
        return b;
    }

    typename Tape<T>::Id forward(Tape<T>& tape, const ModelBinding<T>& bind, typename Tape<T>::Id in) const {
        const Tensor<T>& x0 = tape.val(in);
        require_rank(x0.shape, 4, "field net input");
        if (x0.dim(1) != cfg_.in_channels || x0.dim(2) != cfg_.grid_h || x0.dim(3) != cfg_.grid_w)
            throw ShapeMismatch("field net input " + shape_str(x0.shape) + ", configured for [N," +
                                std::to_string(cfg_.in_channels) + "," + std::to_string(cfg_.grid_h) + "," +
                                std::to_string(cfg_.grid_w) + "]");
        auto p = [&](int i) { return bind.ids[static_cast<size_t>(i)]; };
        auto x = conv2d(tape, in, p(stem_w_), p(stem_b_));
        std::vector<typename Tape<T>::Id> skips;
        for (const Level& lev : enc_) {
            for (const Block& b : lev.blocks) x = block_forward(tape, bind, b, x);
            skips.push_back(x);
            x = leaky_relu(tape, conv2d(tape, downsample2(tape, x), p(lev.trans_w), p(lev.trans_b)));
        }
        for (const Block& b : mid_) x = block_forward(tape, bind, b, x);
        for (size_t i = 0; i < dec_.size(); ++i) {
            const Level& lev = dec_[i];
            x = concat_channels(tape, upsample2(tape, x), skips[dec_.size() - 1 - i]);
            x = leaky_relu(tape, conv2d(tape, x, p(lev.trans_w), p(lev.trans_b)));
            for (const Block& b : lev.blocks) x = block_forward(tape, bind, b, x);
        }
        return conv2d(tape, x, p(head_w_), p(head_b_));
    }

    // Forward-only convenience for a single input without gradient tracking.
    Tensor<T> predict(const Tensor<T>& in) const {
        Tape<T> tape;
        auto b = bind(tape, false);
        return tape.val(forward(tape, b, tape.leaf(in)));
    }

    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    const FieldNetConfig& config() const { return cfg_; }

private:
    struct Block {
        int w1, b1, w2, b2;
        int width;
    };
    struct Level {
        std::vector<Block> blocks;
        int trans_w = -1, trans_b = -1;
    };

    Block make_block(Rng& rng, const std::string& prefix, int c) {
        Block b;
        b.width = c;
        b.w1 = params_.add(prefix + ".w1", detail::he_conv<T>(rng, c, c, 3, 3));
        b.b1 = params_.add(prefix + ".b1", Tensor<T>::zeros({c}));
        b.w2 = params_.add(prefix + ".w2", detail::he_conv<T>(rng, 2 * c, c, 3, 3));
        b.b2 = params_.add(prefix + ".b2", Tensor<T>::zeros({2 * c}));
        return b;
    }

    typename Tape<T>::Id block_forward(Tape<T>& tape, const ModelBinding<T>& bind, const Block& blk,
                                       typename Tape<T>::Id x) const {
        auto p = [&](int i) { return bind.ids[static_cast<size_t>(i)]; };
        auto c1 = conv2d(tape, leaky_relu(tape, x), p(blk.w1), p(blk.b1));
        auto c2 = conv2d(tape, leaky_relu(tape, c1), p(blk.w2), p(blk.b2));
        auto a = slice_channels(tape, c2, 0, blk.width);
        auto g = slice_channels(tape, c2, blk.width, 2 * blk.width);
        return add(tape, x, mul(tape, a, sigmoid(tape, g)));
    }

    FieldNetConfig cfg_;
    ParamSet<T> params_;
    std::vector<Level> enc_, dec_;
    std::vector<Block> mid_;
    int stem_w_ = -1, stem_b_ = -1, head_w_ = -1, head_b_ = -1;
};

// ---------------------------------------------------------------------------
// GeomNet: design parameters -> soft occupancy grid
// ---------------------------------------------------------------------------

struct GeomNetConfig {
    int param_dim = 15;
    int seed_h = 4, seed_w = 4;    // spatial seed, doubled by each stage
    int seed_channels = 16;
    std::vector<int> stage_widths = {16, 16, 8, 8};
    int grid_h = 64, grid_w = 64;

    void validate() const {
        if (param_dim < 1 || seed_h < 1 || seed_w < 1 || seed_channels < 1 || stage_widths.empty())
            throw ShapeMismatch("geom net config: non-positive size");
        const int scale = 1 << static_cast<int>(stage_widths.size());
        if (seed_h * scale != grid_h || seed_w * scale != grid_w)
            throw ShapeMismatch("geom net config: seed " + std::to_string(seed_h) + "x" + std::to_string(seed_w) +
                                " with " + std::to_string(stage_widths.size()) + " stages cannot reach " +
                                std::to_string(grid_h) + "x" + std::to_string(grid_w));
    }
};

// Dense seed followed by (upsample, conv, act) stages and a sigmoid head, so
// every output cell lies strictly inside (0, 1).
template <class T>
class GeomNet {
public:
    explicit GeomNet(GeomNetConfig cfg, uint64_t seed = 0) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const int seed_elems = cfg_.seed_channels * cfg_.seed_h * cfg_.seed_w;
        const double std = std::sqrt(2.0 / cfg_.param_dim);
        fc_w_ = params_.add("fc.w", Tensor<T>::randn({cfg_.param_dim, seed_elems}, rng, std));
        fc_b_ = params_.add("fc.b", Tensor<T>::zeros({seed_elems}));
        int c = cfg_.seed_channels;
        for (size_t s = 0; s < cfg_.stage_widths.size(); ++s) {
            const int cn = cfg_.stage_widths[s];
            stage_w_.push_back(params_.add("stage" + std::to_string(s) + ".w", detail::he_conv<T>(rng, cn, c, 3, 3)));
            stage_b_.push_back(params_.add("stage" + std::to_string(s) + ".b", Tensor<T>::zeros({cn})));
            c = cn;
        }
        head_w_ = params_.add("head.w", detail::he_conv<T>(rng, 1, c, 3, 3));
        head_b_ = params_.add("head.b", Tensor<T>::zeros({1}));
    }

    ModelBinding<T> bind(Tape<T>& tape, bool requires_grad = true) const {
        ModelBinding<T> b;
        b.ids.reserve(static_cast<size_t>(params_.count()));
        for (int i = 0; i < params_.count(); ++i) b.ids.push_back(tape.leaf(params_.tensor(i), requires_grad));
        return b;
    }

    // in: [N, param_dim] constrained designs in [0,1]; out: [N,1,H,W].
    typename Tape<T>::Id forward(Tape<T>& tape, const ModelBinding<T>& bind, typename Tape<T>::Id in) const {
        const Tensor<T>& x0 = tape.val(in);
        require_rank(x0.shape, 2, "geom net input");
        if (x0.dim(1) != cfg_.param_dim)
            throw ShapeMismatch("geom net input " + shape_str(x0.shape) + ", configured for param_dim " +
                                std::to_string(cfg_.param_dim));
        auto p = [&](int i) { return bind.ids[static_cast<size_t>(i)]; };
        const int n = x0.dim(0);
        auto x = leaky_relu(tape, linear(tape, in, p(fc_w_), p(fc_b_)));
        x = reshape(tape, x, {n, cfg_.seed_channels, cfg_.seed_h, cfg_.seed_w});
        for (size_t s = 0; s < stage_w_.size(); ++s)
            x = leaky_relu(tape, conv2d(tape, upsample2(tape, x), p(stage_w_[s]), p(stage_b_[s])));
        return sigmoid(tape, conv2d(tape, x, p(head_w_), p(head_b_)));
    }

    Tensor<T> predict(const Tensor<T>& in) const {
        Tape<T> tape;
        auto b = bind(tape, false);
        return tape.val(forward(tape, b, tape.leaf(in)));
    }

    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    const GeomNetConfig& config() const { return cfg_; }

private:
    GeomNetConfig cfg_;
    ParamSet<T> params_;
    int fc_w_ = -1, fc_b_ = -1, head_w_ = -1, head_b_ = -1;
    std::vector<int> stage_w_, stage_b_;
};

}  // namespace ndo
