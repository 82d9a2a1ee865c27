#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ndo/errors.hpp"
#include "ndo/geometry.hpp"
#include "ndo/heat.hpp"
#include "ndo/io.hpp"
#include "ndo/lbm.hpp"
#include "ndo/rng.hpp"

namespace ndo {

// In-memory labeled dataset; field channels = 0 for parameter->geometry sets.
struct Dataset {
    int design_len = 0;
    int h = 0, w = 0;
    int channels = 0;
    std::vector<float> designs;     // count * design_len
    std::vector<float> geometries;  // count * h * w
    std::vector<float> fields;      // count * channels * h * w
    std::vector<uint8_t> converged;

    int64_t count() const { return static_cast<int64_t>(converged.size()); }
    const float* design(int64_t i) const { return designs.data() + i * design_len; }
    const float* geometry(int64_t i) const { return geometries.data() + i * static_cast<int64_t>(h) * w; }
    const float* field(int64_t i) const {
        return fields.data() + i * static_cast<int64_t>(channels) * h * w;
    }
};

struct DatasetManifest {
    std::string kind;  // "heat-param" | "heat-sim" | "airfoil-param" | "airfoil-sim"
    int format_version = 1;
    int grid_h = 0, grid_w = 0;
    int channels = 0;
    int design_len = 0;
    int64_t count = 0;
    uint64_t seed = 0;
    int64_t attempts = 0;
    int64_t discarded = 0;
    std::vector<int64_t> train_indices;
    std::vector<int64_t> test_indices;
};

constexpr uint32_t kDatasetVersion = 1;

inline void write_dataset(const std::string& path, const Dataset& ds) {
    BinWriter w;
    w.str("NDSN");
    w.u32(kDatasetVersion);
    w.u32(static_cast<uint32_t>(ds.count()));
    w.u16(static_cast<uint16_t>(ds.design_len));
    w.u16(static_cast<uint16_t>(ds.h));
    w.u16(static_cast<uint16_t>(ds.w));
    w.u8(static_cast<uint8_t>(ds.channels));
    const size_t cell = static_cast<size_t>(ds.h) * ds.w;
    for (int64_t i = 0; i < ds.count(); ++i) {
        w.f32s(ds.design(i), static_cast<size_t>(ds.design_len));
        w.f32s(ds.geometry(i), cell);
        if (ds.channels) w.f32s(ds.field(i), cell * static_cast<size_t>(ds.channels));
        w.u8(ds.converged[static_cast<size_t>(i)]);
    }
    w.save(path);
}

inline Dataset read_dataset(const std::string& path) {
    BinReader r = BinReader::from_file(path);
    if (r.str(4) != "NDSN") throw FormatError(path + ": bad dataset magic");
    const uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
    Dataset ds;
    const uint32_t n = r.u32();
    ds.design_len = r.u16();
    ds.h = r.u16();
    ds.w = r.u16();
    ds.channels = r.u8();
    if (!ds.design_len || !ds.h || !ds.w) throw FormatError(path + ": empty dataset dimensions");
    const size_t cell = static_cast<size_t>(ds.h) * ds.w;
    ds.designs.resize(static_cast<size_t>(n) * ds.design_len);
    ds.geometries.resize(static_cast<size_t>(n) * cell);
    ds.fields.resize(static_cast<size_t>(n) * cell * ds.channels);
    ds.converged.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        r.f32s(ds.designs.data() + static_cast<size_t>(i) * ds.design_len, static_cast<size_t>(ds.design_len));
        r.f32s(ds.geometries.data() + static_cast<size_t>(i) * cell, cell);
        if (ds.channels) r.f32s(ds.fields.data() + static_cast<size_t>(i) * cell * ds.channels,
                                cell * static_cast<size_t>(ds.channels));
        ds.converged[i] = r.u8();
    }
    r.expect_end();
    return ds;
}

inline std::string manifest_path(const std::string& dataset_path) { return dataset_path + ".json"; }

inline void write_manifest(const std::string& path, const DatasetManifest& m) {
    nlohmann::json j;
    j["kind"] = m.kind;
    j["format_version"] = m.format_version;
    j["grid"] = {m.grid_h, m.grid_w};
    j["channels"] = m.channels;
    j["design_len"] = m.design_len;
    j["count"] = m.count;
    j["seed"] = m.seed;
    j["attempts"] = m.attempts;
    j["discarded"] = m.discarded;
    j["train_indices"] = m.train_indices;
    j["test_indices"] = m.test_indices;
    write_text_file(path, j.dump(2) + "\n");
}

inline DatasetManifest read_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    try {
        DatasetManifest m;
        m.kind = j.at("kind").get<std::string>();
        m.format_version = j.at("format_version").get<int>();
        m.grid_h = j.at("grid").at(0).get<int>();
        m.grid_w = j.at("grid").at(1).get<int>();
        m.channels = j.at("channels").get<int>();
        m.design_len = j.at("design_len").get<int>();
        m.count = j.at("count").get<int64_t>();
        m.seed = j.at("seed").get<uint64_t>();
        m.attempts = j.at("attempts").get<int64_t>();
        m.discarded = j.at("discarded").get<int64_t>();
        m.train_indices = j.at("train_indices").get<std::vector<int64_t>>();
        m.test_indices = j.at("test_indices").get<std::vector<int64_t>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

// Deterministic disjoint + exhaustive 80/20 split of [0, count).
inline void make_split(int64_t count, uint64_t seed, std::vector<int64_t>& train, std::vector<int64_t>& test) {
    std::vector<int64_t> perm(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) perm[static_cast<size_t>(i)] = i;
    Rng rng(Rng::mix(seed, 0x517Fu));
    for (int64_t i = count - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[rng.below(static_cast<uint64_t>(i + 1))]);
    const int64_t n_test = count / 5;
    test.assign(perm.begin(), perm.begin() + n_test);
    train.assign(perm.begin() + n_test, perm.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
}

struct GenResult {
    Dataset data;
    DatasetManifest manifest;
};

namespace detail {

inline bool is_discardable(const std::exception& e) {
    return dynamic_cast<const DegenerateDesign*>(&e) || dynamic_cast<const OutOfBounds*>(&e) ||
           dynamic_cast<const ChannelBlocked*>(&e) || dynamic_cast<const NumericBlowup*>(&e);
}

template <class MakeSample>
GenResult generate(const std::string& kind, int grid_h, int grid_w, int channels, int design_len,
                   int64_t count, uint64_t seed, MakeSample&& make) {
    if (count < 10) throw DomainError("dataset generation: count must be at least 10");
    GenResult out;
    Dataset& ds = out.data;
    ds.design_len = design_len;
    ds.h = grid_h;
    ds.w = grid_w;
    ds.channels = channels;
    const size_t cell = static_cast<size_t>(grid_h) * grid_w;
    ds.designs.reserve(static_cast<size_t>(count) * design_len);
    ds.geometries.reserve(static_cast<size_t>(count) * cell);
    ds.fields.reserve(static_cast<size_t>(count) * cell * channels);

    int64_t attempts = 0, discarded = 0;
    while (ds.count() < count) {
        Rng rng(Rng::mix(seed, static_cast<uint64_t>(attempts)));
        ++attempts;
        bool ok = false;
        try {
            ok = make(rng, ds);
        } catch (const std::exception& e) {
            if (!is_discardable(e)) throw;
        }
        if (ok) {
            ds.converged.push_back(1);
        } else {
            ++discarded;
            if (discarded > count / 10)
                throw TooManyFailures(kind + ": " + std::to_string(discarded) + " failed samples of " +
                                      std::to_string(count) + " requested (>10%)");
        }
    }

    DatasetManifest& m = out.manifest;
    m.kind = kind;
    m.grid_h = grid_h;
    m.grid_w = grid_w;
    m.channels = channels;
    m.design_len = design_len;
    m.count = count;
    m.seed = seed;
    m.attempts = attempts;
    m.discarded = discarded;
    make_split(count, seed, m.train_indices, m.test_indices);
    return out;
}

inline void append(std::vector<float>& dst, const float* p, size_t n) { dst.insert(dst.end(), p, p + n); }

}  // namespace detail

// Analytic (design -> geometry) pairs for parameterization-network training.
inline GenResult gen_param_dataset(DesignKind kind, int64_t count, uint64_t seed) {
    if (kind == DesignKind::heat) {
        return detail::generate("heat-param", 64, 64, 0, 15, count, seed, [](Rng& rng, Dataset& ds) {
            auto d = sample_design(DesignKind::heat, rng);
            auto c = d.constrained();
            auto g = heat_sink_geometry(c);
            for (double v : c) ds.designs.push_back(static_cast<float>(v));
            detail::append(ds.geometries, g.cells.data(), g.cells.size());
            return true;
        });
    }
    return detail::generate("airfoil-param", 96, 192, 0, 42, count, seed, [](Rng& rng, Dataset& ds) {
        auto d = sample_design(DesignKind::airfoil, rng);
        auto c = d.constrained();
        auto g = rasterize_airfoil(AirfoilParams::from_design(c, 0.0));
        for (double v : c) ds.designs.push_back(static_cast<float>(v));
        detail::append(ds.geometries, g.cells.data(), g.cells.size());
        return true;
    });
}

// Solver-labeled (geometry -> steady field) pairs for simulation-network
// training.  Non-converged solves are discarded and replaced; the sample
// stream continues so output is still a pure function of (kind, count, seed).
inline GenResult gen_sim_dataset(DesignKind kind, int64_t count, uint64_t seed) {
    if (kind == DesignKind::heat) {
        const auto src = heat_source_mask();
        return detail::generate("heat-sim", 64, 64, 1, 15, count, seed, [src](Rng& rng, Dataset& ds) {
            auto d = sample_design(DesignKind::heat, rng);
            auto c = d.constrained();
            auto g = heat_sink_geometry(c);
            auto res = solve_heat(HeatProblem{g, src});
            if (!res.converged) return false;
            for (double v : c) ds.designs.push_back(static_cast<float>(v));
            detail::append(ds.geometries, g.cells.data(), g.cells.size());
            detail::append(ds.fields, res.field.data.data(), res.field.data.size());
            return true;
        });
    }
    // Airfoil: the angle of attack is baked into the rasterized occupancy and
    // stored (in radians) as the 43rd design float.
    return detail::generate("airfoil-sim", 96, 192, 3, 43, count, seed, [](Rng& rng, Dataset& ds) {
        auto d = sample_design(DesignKind::airfoil, rng);
        auto c = d.constrained();
        const float theta = static_cast<float>(sample_angle(rng));
        auto g = rasterize_airfoil(AirfoilParams::from_design(c, static_cast<double>(theta)));
        auto res = solve_lbm_steady(FlowProblem{g});
        if (!res.converged) return false;
        for (double v : c) ds.designs.push_back(static_cast<float>(v));
        ds.designs.push_back(theta);
        detail::append(ds.geometries, g.cells.data(), g.cells.size());
        detail::append(ds.fields, res.field.data.data(), res.field.data.size());
        return true;
    });
}

}  // namespace ndo
