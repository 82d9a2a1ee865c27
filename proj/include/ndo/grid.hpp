#pragma once

#include <cstdint>
#include <vector>

#include "ndo/tensor.hpp"

namespace ndo {

// Occupancy grid in image convention: row 0 is the top, values in [0,1].
// Solvers binarise at 0.5; network outputs may be soft.
struct GeometryGrid {
    int h = 0, w = 0;
    std::vector<float> cells;

    GeometryGrid() = default;
    GeometryGrid(int h_, int w_) : h(h_), w(w_), cells(static_cast<size_t>(h_) * w_, 0.0f) {}

    float& at(int r, int c) { return cells[static_cast<size_t>(r) * w + c]; }
    float at(int r, int c) const { return cells[static_cast<size_t>(r) * w + c]; }
    bool solid(int r, int c) const { return at(r, c) > 0.5f; }

    int64_t solid_count() const {
        int64_t n = 0;
        for (float v : cells) n += v > 0.5f;
        return n;
    }

    Tensor<float> tensor() const { return Tensor<float>({1, h, w}, std::vector<float>(cells)); }
};

}  // namespace ndo
