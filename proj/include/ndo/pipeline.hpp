#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ndo/dataset.hpp"
#include "ndo/fitness.hpp"
#include "ndo/geometry.hpp"
#include "ndo/nn.hpp"
#include "ndo/train.hpp"

namespace ndo {

// Canonical network configurations for the two systems.
inline FieldNetConfig heat_field_config() {
    FieldNetConfig c;
    c.in_channels = 1;
    c.out_channels = 1;
    c.grid_h = 64;
    c.grid_w = 64;
    return c;
}

inline FieldNetConfig flow_field_config() {
    FieldNetConfig c;
    c.in_channels = 1;
    c.out_channels = 3;
    c.grid_h = 96;
    c.grid_w = 192;
    return c;
}

inline GeomNetConfig heat_geom_config() {
    GeomNetConfig c;
    c.param_dim = 15;
    c.seed_h = 4;
    c.seed_w = 4;
    c.grid_h = 64;
    c.grid_w = 64;
    return c;
}

inline GeomNetConfig airfoil_geom_config() {
    GeomNetConfig c;
    c.param_dim = 42;
    c.seed_h = 6;
    c.seed_w = 12;
    c.grid_h = 96;
    c.grid_w = 192;
    return c;
}

// The parameterization network trains with a constant learning rate; the
// simulation network uses the plateau schedule (and, for flow, the
// pressure-weighted loss baked into the trainer).
inline TrainConfig geom_train_config() {
    TrainConfig c;
    c.plateau = false;
    return c;
}

inline TrainConfig field_train_config() { return TrainConfig{}; }

// ---------------------------------------------------------------------------
// Dataset -> contiguous train/test arrays in split order
// ---------------------------------------------------------------------------

struct PackedTrainData {
    Shape in_shape, tgt_shape;
    std::vector<float> in, tgt;
    int train_count = 0, test_count = 0;

    TrainData view() const {
        TrainData d;
        d.in_shape = in_shape;
        d.tgt_shape = tgt_shape;
        d.in = in.data();
        d.tgt = tgt.data();
        d.train_count = train_count;
        d.test_count = test_count;
        return d;
    }
};

namespace detail {

inline void check_split(const Dataset& ds, const DatasetManifest& m) {
    if (m.count != ds.count()) throw FormatError("manifest count does not match dataset");
    std::vector<uint8_t> seen(static_cast<size_t>(ds.count()), 0);
    for (int64_t i : m.train_indices) {
        if (i < 0 || i >= ds.count() || seen[static_cast<size_t>(i)])
            throw FormatError("manifest split is not a disjoint cover");
        seen[static_cast<size_t>(i)] = 1;
    }
    for (int64_t i : m.test_indices) {
        if (i < 0 || i >= ds.count() || seen[static_cast<size_t>(i)])
            throw FormatError("manifest split is not a disjoint cover");
        seen[static_cast<size_t>(i)] = 1;
    }
    for (uint8_t s : seen)
        if (!s) throw FormatError("manifest split is not exhaustive");
}

inline void copy_rows(std::vector<float>& dst, const float* base, int64_t elems,
                      const std::vector<int64_t>& idx) {
    for (int64_t i : idx) dst.insert(dst.end(), base + i * elems, base + (i + 1) * elems);
}

}  // namespace detail

// design -> geometry pairs for the parameterization network.
inline PackedTrainData pack_geom_data(const Dataset& ds, const DatasetManifest& m) {
    detail::check_split(ds, m);
    PackedTrainData p;
    p.in_shape = {ds.design_len};
    p.tgt_shape = {1, ds.h, ds.w};
    const int64_t cell = static_cast<int64_t>(ds.h) * ds.w;
    detail::copy_rows(p.in, ds.designs.data(), ds.design_len, m.train_indices);
    detail::copy_rows(p.in, ds.designs.data(), ds.design_len, m.test_indices);
    detail::copy_rows(p.tgt, ds.geometries.data(), cell, m.train_indices);
    detail::copy_rows(p.tgt, ds.geometries.data(), cell, m.test_indices);
    p.train_count = static_cast<int>(m.train_indices.size());
    p.test_count = static_cast<int>(m.test_indices.size());
    return p;
}

// geometry -> field pairs for the simulation network.
inline PackedTrainData pack_field_data(const Dataset& ds, const DatasetManifest& m) {
    detail::check_split(ds, m);
    if (ds.channels < 1) throw ShapeMismatch("dataset has no field channels");
    PackedTrainData p;
    p.in_shape = {1, ds.h, ds.w};
    p.tgt_shape = {ds.channels, ds.h, ds.w};
    const int64_t cell = static_cast<int64_t>(ds.h) * ds.w;
    detail::copy_rows(p.in, ds.geometries.data(), cell, m.train_indices);
    detail::copy_rows(p.in, ds.geometries.data(), cell, m.test_indices);
    detail::copy_rows(p.tgt, ds.fields.data(), cell * ds.channels, m.train_indices);
    detail::copy_rows(p.tgt, ds.fields.data(), cell * ds.channels, m.test_indices);
    p.train_count = static_cast<int>(m.train_indices.size());
    p.test_count = static_cast<int>(m.test_indices.size());
    return p;
}

inline TrainResult train_geom_net(GeomNet<float>& net, const Dataset& ds, const DatasetManifest& m,
                                  const TrainConfig& cfg = geom_train_config(),
                                  const std::function<void(const EpochRow&)>& on_epoch = nullptr) {
    if (ds.design_len != net.config().param_dim)
        throw ShapeMismatch("dataset design length " + std::to_string(ds.design_len) +
                            " does not match the network's " + std::to_string(net.config().param_dim));
    if (ds.h != net.config().grid_h || ds.w != net.config().grid_w)
        throw ShapeMismatch("dataset grid does not match the network");
    auto packed = pack_geom_data(ds, m);
    auto data = packed.view();
    return train_model(net, data, cfg, on_epoch);
}

inline TrainResult train_field_net(FieldNet<float>& net, const Dataset& ds, const DatasetManifest& m,
                                   const TrainConfig& cfg = field_train_config(),
                                   const std::function<void(const EpochRow&)>& on_epoch = nullptr) {
    if (ds.channels != net.config().out_channels)
        throw ShapeMismatch("dataset channels " + std::to_string(ds.channels) +
                            " do not match the network's " + std::to_string(net.config().out_channels));
    if (ds.h != net.config().grid_h || ds.w != net.config().grid_w)
        throw ShapeMismatch("dataset grid does not match the network");
    auto packed = pack_field_data(ds, m);
    auto data = packed.view();
    return train_model(net, data, cfg, on_epoch);
}

// ---------------------------------------------------------------------------
// Simulation-network evaluation against the solver labels
// ---------------------------------------------------------------------------

namespace detail {

// Pearson correlation; returns false when either side has (near-)zero
// variance, in which case the value is reported as a token, not a number.
inline bool pearson(const std::vector<double>& x, const std::vector<double>& y, double& r) {
    const size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double dn = static_cast<double>(n);
    const double vx = sxx - sx * sx / dn;
    const double vy = syy - sy * sy / dn;
    if (!(vx > 1e-300) || !(vy > 1e-300)) return false;
    r = (sxy - sx * sy / dn) / std::sqrt(vx * vy);
    return true;
}

inline std::string pearson_cell(const std::vector<double>& x, const std::vector<double>& y) {
    double r = 0.0;
    if (!pearson(x, y, r)) return "DegenerateVariance";
    return fmt_g9(r);
}

inline double max_speed_of(const float* field, int64_t cell) {
    double best = 0.0;
    for (int64_t i = 0; i < cell; ++i) {
        const double vx = field[i], vy = field[cell + i];
        best = std::max(best, std::sqrt(vx * vx + vy * vy));
    }
    return best;
}

}  // namespace detail

struct EvalReport {
    std::string metrics_csv;  // name,value rows; correlations may be a token
    std::string scatter_csv;  // one row per test sample
    double test_mse = 0.0;    // mean over test samples, plain MSE
    double baseline_mse = 0.0;  // per-cell train-mean predictor
    // Correlations (NaN when degenerate): heat fills source_temp only.
    double corr_source_temp = std::numeric_limits<double>::quiet_NaN();
    double corr_drag = std::numeric_limits<double>::quiet_NaN();
    double corr_lift = std::numeric_limits<double>::quiet_NaN();
    double corr_max_speed = std::numeric_limits<double>::quiet_NaN();
};

// Per-sample test metrics + Pearson summary for a trained simulation net.
inline EvalReport evaluate_field_net(const FieldNet<float>& net, const Dataset& ds,
                                     const DatasetManifest& m) {
    detail::check_split(ds, m);
    if (m.test_indices.empty()) throw EmptyTestSet("evaluation needs a nonempty test split");
    if (ds.channels != net.config().out_channels || ds.h != net.config().grid_h ||
        ds.w != net.config().grid_w)
        throw ShapeMismatch("dataset does not match the network");

    const int64_t cell = static_cast<int64_t>(ds.h) * ds.w;
    const int64_t felems = cell * ds.channels;
    const bool flow = ds.channels == 3;
    const auto heat_src = flow ? std::vector<uint8_t>{} : heat_source_mask();

    // Constant per-cell mean field over the training split.
    std::vector<double> mean_field(static_cast<size_t>(felems), 0.0);
    for (int64_t i : m.train_indices) {
        const float* f = ds.field(i);
        for (int64_t e = 0; e < felems; ++e) mean_field[static_cast<size_t>(e)] += f[e];
    }
    for (auto& v : mean_field) v /= static_cast<double>(m.train_indices.size());

    EvalReport rep;
    std::vector<double> mse_rows;
    std::vector<double> pred_t, act_t, pred_drag, act_drag, pred_lift, act_lift, pred_v, act_v;
    std::string scatter = flow
        ? "index,field_mse,pred_drag,solver_drag,pred_lift,solver_lift,pred_max_speed,solver_max_speed\n"
        : "index,field_mse,pred_source_temp,solver_source_temp\n";

    double base_acc = 0.0;
    for (int64_t i : m.test_indices) {
        Tensor<float> in({1, 1, ds.h, ds.w});
        std::copy(ds.geometry(i), ds.geometry(i) + cell, in.data.begin());
        Tensor<float> pred = net.predict(in);
        const float* actual = ds.field(i);

        double acc = 0.0, bacc = 0.0;
        for (int64_t e = 0; e < felems; ++e) {
            const double d = static_cast<double>(pred.data[static_cast<size_t>(e)]) - actual[e];
            acc += d * d;
            const double b = mean_field[static_cast<size_t>(e)] - actual[e];
            bacc += b * b;
        }
        const double mse = acc / static_cast<double>(felems);
        base_acc += bacc / static_cast<double>(felems);
        mse_rows.push_back(mse);

        scatter += std::to_string(i) + "," + fmt_g9(mse);
        if (flow) {
            Tensor<float> geom({1, 1, ds.h, ds.w});
            std::copy(ds.geometry(i), ds.geometry(i) + cell, geom.data.begin());
            auto slice_p = [&](const float* base) {
                Tensor<float> p({1, 1, ds.h, ds.w});
                std::copy(base + 2 * cell, base + 3 * cell, p.data.begin());
                return p;
            };
            const ForceVector fp = force_from_pressure(geom, slice_p(pred.data.data()));
            const ForceVector fa = force_from_pressure(geom, slice_p(actual));
            pred_drag.push_back(fp.fx);
            act_drag.push_back(fa.fx);
            pred_lift.push_back(fp.fy);
            act_lift.push_back(fa.fy);
            pred_v.push_back(detail::max_speed_of(pred.data.data(), cell));
            act_v.push_back(detail::max_speed_of(actual, cell));
            scatter += "," + fmt_g9(fp.fx) + "," + fmt_g9(fa.fx) + "," + fmt_g9(fp.fy) + "," +
                       fmt_g9(fa.fy) + "," + fmt_g9(pred_v.back()) + "," + fmt_g9(act_v.back());
        } else {
            Tensor<float> pf({1, ds.h, ds.w});
            std::copy(pred.data.begin(), pred.data.end(), pf.data.begin());
            Tensor<float> af({1, ds.h, ds.w});
            std::copy(actual, actual + cell, af.data.begin());
            pred_t.push_back(source_temperature(pf, heat_src));
            act_t.push_back(source_temperature(af, heat_src));
            scatter += "," + fmt_g9(pred_t.back()) + "," + fmt_g9(act_t.back());
        }
        scatter += "\n";
    }

    rep.test_mse = 0.0;
    for (double v : mse_rows) rep.test_mse += v;
    rep.test_mse /= static_cast<double>(mse_rows.size());
    rep.baseline_mse = base_acc / static_cast<double>(mse_rows.size());
    rep.scatter_csv = std::move(scatter);

    std::string metrics = "metric,value\n";
    metrics += "test_mse_mean," + fmt_g9(rep.test_mse) + "\n";
    metrics += "baseline_mse_mean," + fmt_g9(rep.baseline_mse) + "\n";
    auto corr = [&](const char* name, const std::vector<double>& x, const std::vector<double>& y,
                    double& out) {
        double r = 0.0;
        if (detail::pearson(x, y, r)) out = r;
        metrics += std::string("pearson_") + name + "," + detail::pearson_cell(x, y) + "\n";
    };
    if (flow) {
        corr("drag", pred_drag, act_drag, rep.corr_drag);
        corr("lift", pred_lift, act_lift, rep.corr_lift);
        corr("max_speed", pred_v, act_v, rep.corr_max_speed);
    } else {
        corr("source_temp", pred_t, act_t, rep.corr_source_temp);
    }
    rep.metrics_csv = std::move(metrics);
    return rep;
}

}  // namespace ndo
