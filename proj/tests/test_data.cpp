#include "catch2/catch_amalgamated.hpp"

#include <cstdio>
#include <set>
#include <vector>

#include "ndo/dataset.hpp"
#include "ndo/pipeline.hpp"

using namespace ndo;

namespace {

std::vector<char> file_bytes(const std::string& path) {
    std::vector<char> bytes;
    FILE* f = std::fopen(path.c_str(), "rb");
    REQUIRE(f != nullptr);
    char buf[4096];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.insert(bytes.end(), buf, buf + n);
    std::fclose(f);
    return bytes;
}

// Independent re-evaluation of the heat stencil on a stored float32 sample.
double stored_sample_residual(const float* geom, const float* field, const std::vector<uint8_t>& src) {
    const int n = 64;
    auto solid = [&](int r, int c) { return geom[static_cast<size_t>(r) * n + c] > 0.5f; };
    double worst = 0.0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (!solid(r, c)) continue;
            static const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
            double acc = 0.0;
            int n_solid = 0, n_air = 0;
            for (int k = 0; k < 4; ++k) {
                const int rr = r + dr[k], cc = c + dc[k];
                if (rr >= n) continue;
                if (rr < 0 || cc < 0 || cc >= n || !solid(rr, cc)) {
                    ++n_air;
                    continue;
                }
                ++n_solid;
                acc += field[static_cast<size_t>(rr) * n + cc];
            }
            const double q = src[static_cast<size_t>(r) * n + c] ? 1.0 : 0.0;
            const double expect = (50.0 * acc + q) / (50.0 * n_solid + n_air);
            worst = std::max(worst, std::abs(field[static_cast<size_t>(r) * n + c] - expect));
        }
    return worst;
}

}  // namespace

TEST_CASE("dataset file round trip and corruption handling") {
    auto gen = gen_param_dataset(DesignKind::heat, 20, 5);
    write_dataset("t_roundtrip.ndsn", gen.data);
    auto rd = read_dataset("t_roundtrip.ndsn");
    CHECK(rd.count() == 20);
    CHECK(rd.design_len == 15);
    CHECK(rd.h == 64);
    CHECK(rd.channels == 0);
    CHECK(rd.designs == gen.data.designs);
    CHECK(rd.geometries == gen.data.geometries);
    CHECK(rd.converged == gen.data.converged);

    write_manifest("t_roundtrip.ndsn.json", gen.manifest);
    auto m = read_manifest("t_roundtrip.ndsn.json");
    CHECK(m.kind == "heat-param");
    CHECK(m.count == 20);
    CHECK(m.train_indices == gen.manifest.train_indices);
    CHECK(m.test_indices == gen.manifest.test_indices);

    // Corruption: bad magic, truncated payload.
    auto bytes = file_bytes("t_roundtrip.ndsn");
    bytes[0] = 'X';
    {
        FILE* f = std::fopen("t_corrupt.ndsn", "wb");
        std::fwrite(bytes.data(), 1, bytes.size(), f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_dataset("t_corrupt.ndsn"), FormatError);
    bytes[0] = 'N';
    {
        FILE* f = std::fopen("t_trunc.ndsn", "wb");
        std::fwrite(bytes.data(), 1, bytes.size() - 7, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_dataset("t_trunc.ndsn"), FormatError);
    CHECK_THROWS_AS(read_dataset("t_missing.ndsn"), IoError);
}

TEST_CASE("generation is deterministic and validates count") {
    auto a = gen_param_dataset(DesignKind::heat, 100, 1);
    auto b = gen_param_dataset(DesignKind::heat, 100, 1);
    write_dataset("t_det_a.ndsn", a.data);
    write_dataset("t_det_b.ndsn", b.data);
    write_manifest("t_det_a.ndsn.json", a.manifest);
    write_manifest("t_det_b.ndsn.json", b.manifest);
    CHECK(file_bytes("t_det_a.ndsn") == file_bytes("t_det_b.ndsn"));
    CHECK(file_bytes("t_det_a.ndsn.json") == file_bytes("t_det_b.ndsn.json"));
    CHECK(a.manifest.count == 100);

    auto c = gen_param_dataset(DesignKind::heat, 100, 2);
    CHECK(c.data.designs != a.data.designs);

    CHECK_THROWS_AS(gen_param_dataset(DesignKind::heat, 9, 1), DomainError);
    CHECK_THROWS_AS(gen_sim_dataset(DesignKind::heat, 5, 1), DomainError);
}

TEST_CASE("split is a deterministic disjoint 80/20 cover") {
    std::vector<int64_t> train, test, train2, test2;
    make_split(100, 42, train, test);
    make_split(100, 42, train2, test2);
    CHECK(train == train2);
    CHECK(test == test2);
    CHECK(test.size() == 20);
    CHECK(train.size() == 80);
    std::set<int64_t> all(train.begin(), train.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == 100);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 99);

    make_split(100, 43, train2, test2);
    CHECK(test != test2);
}

TEST_CASE("stored designs regenerate their geometry bit-exactly") {
    auto heat = gen_param_dataset(DesignKind::heat, 30, 9);
    for (int64_t i = 0; i < heat.data.count(); ++i) {
        std::vector<double> c(15);
        for (int k = 0; k < 15; ++k) c[static_cast<size_t>(k)] = heat.data.design(i)[k];
        auto g = heat_sink_geometry(c);
        for (size_t e = 0; e < g.cells.size(); ++e) REQUIRE(g.cells[e] == heat.data.geometry(i)[e]);
    }

    auto foil = gen_param_dataset(DesignKind::airfoil, 12, 9);
    for (int64_t i = 0; i < foil.data.count(); ++i) {
        std::vector<double> c(42);
        for (int k = 0; k < 42; ++k) c[static_cast<size_t>(k)] = foil.data.design(i)[k];
        auto g = rasterize_airfoil(AirfoilParams::from_design(c, 0.0));
        for (size_t e = 0; e < g.cells.size(); ++e) REQUIRE(g.cells[e] == foil.data.geometry(i)[e]);
    }
}

TEST_CASE("heat simulation dataset stores converged solutions only") {
    auto gen = gen_sim_dataset(DesignKind::heat, 10, 3);
    CHECK(gen.data.count() == 10);
    CHECK(gen.data.channels == 1);
    CHECK(gen.manifest.discarded == 0);
    CHECK(gen.manifest.attempts == 10);
    const auto src = heat_source_mask();
    for (int64_t i = 0; i < 10; ++i) {
        CHECK(gen.data.converged[static_cast<size_t>(i)] == 1);
        CHECK(stored_sample_residual(gen.data.geometry(i), gen.data.field(i), src) < 1e-5);
    }
}

TEST_CASE("packing respects the split and validates the manifest") {
    auto gen = gen_param_dataset(DesignKind::heat, 20, 7);
    auto p = pack_geom_data(gen.data, gen.manifest);
    CHECK(p.in_shape == Shape{15});
    CHECK(p.tgt_shape == Shape{1, 64, 64});
    CHECK(p.train_count == 16);
    CHECK(p.test_count == 4);
    CHECK(p.in.size() == 20u * 15u);
    // First packed train sample matches the first train index's raw data.
    const int64_t i0 = gen.manifest.train_indices[0];
    for (int k = 0; k < 15; ++k) CHECK(p.in[static_cast<size_t>(k)] == gen.data.design(i0)[k]);

    auto bad = gen.manifest;
    bad.count = 19;
    CHECK_THROWS_AS(pack_geom_data(gen.data, bad), FormatError);
    bad = gen.manifest;
    bad.test_indices[0] = bad.train_indices[0];  // overlap
    CHECK_THROWS_AS(pack_geom_data(gen.data, bad), FormatError);
    bad = gen.manifest;
    bad.test_indices.pop_back();  // not exhaustive
    CHECK_THROWS_AS(pack_geom_data(gen.data, bad), FormatError);

    CHECK_THROWS_AS(pack_field_data(gen.data, gen.manifest), ShapeMismatch);  // no field channels
}

TEST_CASE("training wrappers check dataset/network compatibility") {
    auto gen = gen_param_dataset(DesignKind::heat, 10, 1);
    GeomNet<float> wrong_dim(airfoil_geom_config(), 0);
    CHECK_THROWS_AS(train_geom_net(wrong_dim, gen.data, gen.manifest), ShapeMismatch);

    auto sim = gen_sim_dataset(DesignKind::heat, 10, 1);
    FieldNet<float> flow_net(flow_field_config(), 0);
    CHECK_THROWS_AS(train_field_net(flow_net, sim.data, sim.manifest), ShapeMismatch);

    // A correctly matched pair trains end to end.
    FieldNet<float> net(heat_field_config(), 0);
    auto cfg = field_train_config();
    cfg.epochs = 2;
    cfg.batch_size = 4;
    auto res = train_field_net(net, sim.data, sim.manifest, cfg);
    CHECK(res.history.size() == 2);
    CHECK(res.steps == 2 * 2);  // 8 train samples / batch 4
}

TEST_CASE("evaluation against labels equal to the net's own predictions") {
    // Build a synthetic flow-style dataset whose labels are exactly the
    // network's predictions: evaluation must report zero MSE and perfect
    // correlations.
    FieldNetConfig cfg;
    cfg.in_channels = 1;
    cfg.out_channels = 3;
    cfg.grid_h = 16;
    cfg.grid_w = 24;
    FieldNet<float> net(cfg, 11);

    Rng rng(13);
    Dataset ds;
    ds.design_len = 1;
    ds.h = 16;
    ds.w = 24;
    ds.channels = 3;
    const int64_t cell = 16 * 24;
    const int count = 10;
    for (int i = 0; i < count; ++i) {
        ds.designs.push_back(static_cast<float>(i));
        Tensor<float> g({1, 1, 16, 24});
        for (int r = 5; r < 11; ++r)
            for (int c = 6; c < 14; ++c)
                if (rng.uniform() < 0.7) g.at4(0, 0, r, c) = 1.0f;
        ds.geometries.insert(ds.geometries.end(), g.data.begin(), g.data.end());
        auto pred = net.predict(g);
        ds.fields.insert(ds.fields.end(), pred.data.begin(), pred.data.end());
        ds.converged.push_back(1);
    }
    DatasetManifest m;
    m.kind = "airfoil-sim";
    m.grid_h = 16;
    m.grid_w = 24;
    m.channels = 3;
    m.design_len = 1;
    m.count = count;
    make_split(count, 0, m.train_indices, m.test_indices);

    auto rep = evaluate_field_net(net, ds, m);
    CHECK(rep.test_mse == 0.0);
    CHECK(rep.baseline_mse > 0.0);
    CHECK(rep.corr_drag == Catch::Approx(1.0).margin(1e-12));
    CHECK(rep.corr_lift == Catch::Approx(1.0).margin(1e-12));
    CHECK(rep.corr_max_speed == Catch::Approx(1.0).margin(1e-12));
    // One scatter row per test sample plus the header.
    const auto rows = static_cast<size_t>(std::count(rep.scatter_csv.begin(), rep.scatter_csv.end(), '\n'));
    CHECK(rows == m.test_indices.size() + 1);

    // All-identical samples: zero variance reported as a token, not a number.
    Dataset same = ds;
    for (int i = 1; i < count; ++i) {
        std::copy(ds.geometries.begin(), ds.geometries.begin() + cell,
                  same.geometries.begin() + static_cast<int64_t>(i) * cell);
        std::copy(ds.fields.begin(), ds.fields.begin() + 3 * cell,
                  same.fields.begin() + static_cast<int64_t>(i) * 3 * cell);
    }
    auto rep2 = evaluate_field_net(net, same, m);
    CHECK(rep2.metrics_csv.find("DegenerateVariance") != std::string::npos);
    CHECK(std::isnan(rep2.corr_drag));

    // Empty test split is rejected.
    DatasetManifest all_train = m;
    all_train.train_indices.insert(all_train.train_indices.end(), all_train.test_indices.begin(),
                                   all_train.test_indices.end());
    all_train.test_indices.clear();
    CHECK_THROWS_AS(evaluate_field_net(net, ds, all_train), EmptyTestSet);
}
