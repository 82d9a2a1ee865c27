#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ndo/io.hpp"
#include "ndo/nn.hpp"

namespace ndo {

// Checkpoint container: magic "NNCK", version 1, then a count-prefixed list of
// named float32 tensors (u16 name length + bytes, u8 rank, u32 dims, LE data).
// Model configuration and the training step are stored inside the same
// container as reserved "_meta.*" tensors.
struct CheckpointData {
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

inline void write_checkpoint(const std::string& path, const CheckpointData& ck) {
    BinWriter w;
    w.str("NNCK");
    w.u32(1);
    w.u32(static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        if (name.size() > 0xffff) throw FormatError("checkpoint tensor name too long: " + name);
        w.u16(static_cast<uint16_t>(name.size()));
        w.str(name);
        w.u8(static_cast<uint8_t>(t.rank()));
        for (int d : t.shape) w.u32(static_cast<uint32_t>(d));
        w.f32s(t.data.data(), t.data.size());
    }
    w.save(path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
    if (!std::filesystem::exists(path)) throw CheckpointMissing("checkpoint not found: " + path);
    BinReader r = BinReader::from_file(path);
    if (r.str(4) != "NNCK") throw FormatError(path + ": bad checkpoint magic");
    const uint32_t version = r.u32();
    if (version != 1) throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    CheckpointData ck;
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u16());
        const int rank = r.u8();
        Shape shape;
        for (int d = 0; d < rank; ++d) {
            const uint32_t dim = r.u32();
            if (dim == 0 || dim > (1u << 28)) throw FormatError(path + ": bad dimension in tensor " + name);
            shape.push_back(static_cast<int>(dim));
        }
        Tensor<float> t(shape);
        r.f32s(t.data.data(), t.data.size());
        ck.tensors.emplace_back(name, std::move(t));
    }
    r.expect_end();
    return ck;
}

namespace detail {

inline Tensor<float> meta_vec(const std::vector<float>& v) {
    return Tensor<float>({static_cast<int>(v.size())}, std::vector<float>(v));
}

inline void restore_params(const std::string& path, const CheckpointData& ck, ParamSet<float>& params) {
    size_t used = 0;
    for (int i = 0; i < params.count(); ++i) {
        const Tensor<float>* t = ck.find(params.name(i));
        if (!t) throw FormatError(path + ": missing tensor " + params.name(i));
        if (t->shape != params.tensor(i).shape)
            throw FormatError(path + ": tensor " + params.name(i) + " has shape " + shape_str(t->shape) +
                              ", expected " + shape_str(params.tensor(i).shape));
        params.tensor(i) = *t;
        ++used;
    }
    for (const auto& [name, t] : ck.tensors)
        if (name.rfind("_meta.", 0) != 0 && params.find(name) < 0)
            throw FormatError(path + ": unexpected tensor " + name);
    (void)used;
}

inline float meta_scalar(const std::string& path, const CheckpointData& ck, const std::string& name) {
    const Tensor<float>* t = ck.find(name);
    if (!t || t->numel() < 1) throw FormatError(path + ": missing " + name);
    return (*t)[0];
}

}  // namespace detail

inline void save_field_net(const std::string& path, const FieldNet<float>& net, int64_t step) {
    const FieldNetConfig& c = net.config();
    CheckpointData ck;
    ck.tensors.emplace_back("_meta.kind", detail::meta_vec({1.0f}));
    ck.tensors.emplace_back("_meta.step", detail::meta_vec({static_cast<float>(step)}));
    ck.tensors.emplace_back(
        "_meta.config",
        detail::meta_vec({static_cast<float>(c.in_channels), static_cast<float>(c.out_channels),
                          static_cast<float>(c.levels), static_cast<float>(c.base_width),
                          static_cast<float>(c.blocks_per_level), static_cast<float>(c.grid_h),
                          static_cast<float>(c.grid_w)}));
    const auto& p = net.params();
    for (int i = 0; i < p.count(); ++i) ck.tensors.emplace_back(p.name(i), p.tensor(i));
    write_checkpoint(path, ck);
}

inline FieldNet<float> load_field_net(const std::string& path, int64_t* step_out = nullptr) {
    CheckpointData ck = read_checkpoint(path);
    if (detail::meta_scalar(path, ck, "_meta.kind") != 1.0f)
        throw FormatError(path + ": not a field net checkpoint");
    const Tensor<float>* cv = ck.find("_meta.config");
    if (!cv || cv->numel() != 7) throw FormatError(path + ": bad field net config record");
    FieldNetConfig cfg;
    cfg.in_channels = static_cast<int>((*cv)[0]);
    cfg.out_channels = static_cast<int>((*cv)[1]);
    cfg.levels = static_cast<int>((*cv)[2]);
    cfg.base_width = static_cast<int>((*cv)[3]);
    cfg.blocks_per_level = static_cast<int>((*cv)[4]);
    cfg.grid_h = static_cast<int>((*cv)[5]);
    cfg.grid_w = static_cast<int>((*cv)[6]);
    FieldNet<float> net(cfg, 0);
    detail::restore_params(path, ck, net.params());
    if (step_out) *step_out = static_cast<int64_t>(detail::meta_scalar(path, ck, "_meta.step"));
    return net;
}

inline void save_geom_net(const std::string& path, const GeomNet<float>& net, int64_t step) {
    const GeomNetConfig& c = net.config();
    std::vector<float> cfgv = {static_cast<float>(c.param_dim), static_cast<float>(c.seed_h),
                               static_cast<float>(c.seed_w),   static_cast<float>(c.seed_channels),
                               static_cast<float>(c.grid_h),   static_cast<float>(c.grid_w),
                               static_cast<float>(c.stage_widths.size())};
    for (int w : c.stage_widths) cfgv.push_back(static_cast<float>(w));
    CheckpointData ck;
    ck.tensors.emplace_back("_meta.kind", detail::meta_vec({2.0f}));
    ck.tensors.emplace_back("_meta.step", detail::meta_vec({static_cast<float>(step)}));
    ck.tensors.emplace_back("_meta.config", detail::meta_vec(cfgv));
    const auto& p = net.params();
    for (int i = 0; i < p.count(); ++i) ck.tensors.emplace_back(p.name(i), p.tensor(i));
    write_checkpoint(path, ck);
}

inline GeomNet<float> load_geom_net(const std::string& path, int64_t* step_out = nullptr) {
    CheckpointData ck = read_checkpoint(path);
    if (detail::meta_scalar(path, ck, "_meta.kind") != 2.0f)
        throw FormatError(path + ": not a geom net checkpoint");
    const Tensor<float>* cv = ck.find("_meta.config");
    if (!cv || cv->numel() < 7) throw FormatError(path + ": bad geom net config record");
    GeomNetConfig cfg;
    cfg.param_dim = static_cast<int>((*cv)[0]);
    cfg.seed_h = static_cast<int>((*cv)[1]);
    cfg.seed_w = static_cast<int>((*cv)[2]);
    cfg.seed_channels = static_cast<int>((*cv)[3]);
    cfg.grid_h = static_cast<int>((*cv)[4]);
    cfg.grid_w = static_cast<int>((*cv)[5]);
    const int nstages = static_cast<int>((*cv)[6]);
    if (cv->numel() != 7 + nstages) throw FormatError(path + ": bad geom net stage list");
    cfg.stage_widths.clear();
    for (int i = 0; i < nstages; ++i) cfg.stage_widths.push_back(static_cast<int>((*cv)[7 + i]));
    GeomNet<float> net(cfg, 0);
    detail::restore_params(path, ck, net.params());
    if (step_out) *step_out = static_cast<int64_t>(detail::meta_scalar(path, ck, "_meta.step"));
    return net;
}

}  // namespace ndo
