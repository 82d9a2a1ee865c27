#include "catch2/catch_amalgamated.hpp"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "ndo/checkpoint.hpp"
#include "ndo/io.hpp"

using namespace ndo;

// End-to-end tests of the command-line binary.  The test runner passes its
// location in the NDO_BIN environment variable.

namespace {

const std::string& bin_path() {
    static const std::string path = [] {
        const char* p = std::getenv("NDO_BIN");
        REQUIRE(p != nullptr);
        return std::string(p);
    }();
    return path;
}

const std::string& work_dir() {
    static const std::string dir = [] {
        char tmpl[] = "/tmp/ndo_cli_XXXXXX";
        REQUIRE(mkdtemp(tmpl) != nullptr);
        return std::string(tmpl);
    }();
    return dir;
}

struct CliResult {
    int code = -1;
    std::string out;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const std::string log = work_dir() + "/log_" + std::to_string(counter++) + ".txt";
    const std::string cmd = "\"" + bin_path() + "\" " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    r.out = read_text_file(log);
    return r;
}

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

bool file_exists(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (f) std::fclose(f);
    return f != nullptr;
}

int line_count(const std::string& text) {
    int n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

// Shared small corpus: a 30-sample heat parameter set, a 12-sample heat
// simulation set, and briefly trained checkpoints for both networks.
struct Corpus {
    std::string dir, param, sim, pnet, snet;
};

const Corpus& corpus() {
    static const Corpus c = [] {
        Corpus cp;
        cp.dir = work_dir() + "/corpus";
        cp.param = cp.dir + "/heat-param.ndsn";
        cp.sim = cp.dir + "/heat-sim.ndsn";
        cp.pnet = cp.dir + "/pnet.ckpt";
        cp.snet = cp.dir + "/snet.ckpt";
        REQUIRE(run_cli("gen-data --kind heat --stage param --count 30 --seed 7 --out-dir " + cp.dir).code == 0);
        REQUIRE(run_cli("gen-data --kind heat --stage sim --count 12 --seed 3 --out-dir " + cp.dir).code == 0);
        REQUIRE(run_cli("train --net pnet --data " + cp.param + " --epochs 2 --seed 1 --out-dir " + cp.dir).code == 0);
        REQUIRE(run_cli("train --net snet --data " + cp.sim + " --epochs 2 --seed 1 --out-dir " + cp.dir).code == 0);
        return cp;
    }();
    return c;
}

}  // namespace

TEST_CASE("cli: usage errors exit with code 2") {
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("frobnicate").code == 2);

    const CliResult no_kind = run_cli("gen-data --out-dir " + work_dir() + "/nokind");
    CHECK(no_kind.code == 2);
    CHECK(no_kind.out.find("--kind") != std::string::npos);

    const CliResult bad_kind = run_cli("gen-data --kind plasma --out-dir " + work_dir() + "/badkind");
    CHECK(bad_kind.code == 2);

    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("gen-data --help").code == 0);
}

TEST_CASE("cli: gen-data is deterministic and validates count") {
    const std::string a = work_dir() + "/gen_a";
    const std::string b = work_dir() + "/gen_b";
    REQUIRE(run_cli("gen-data --kind heat --stage param --count 30 --seed 7 --out-dir " + a).code == 0);
    REQUIRE(run_cli("gen-data --kind heat --stage param --count 30 --seed 7 --out-dir " + b).code == 0);
    CHECK(file_bytes(a + "/heat-param.ndsn") == file_bytes(b + "/heat-param.ndsn"));
    CHECK(file_bytes(a + "/heat-param.ndsn.json") == file_bytes(b + "/heat-param.ndsn.json"));

    const std::string echo = read_text_file(a + "/config.json");
    CHECK(echo.find("\"gen-data\"") != std::string::npos);
    CHECK(echo.find("\"seed\": 7") != std::string::npos);

    CHECK(run_cli("gen-data --kind heat --stage param --count 5 --out-dir " + work_dir() + "/tiny").code == 2);
}

TEST_CASE("cli: config file values are used and flags override them") {
    const std::string dir = work_dir() + "/cfg";
    ensure_dir(dir);
    write_text_file(dir + "/run.json",
                    "{\"gen-data\": {\"kind\": \"heat\", \"stage\": \"param\", \"count\": 5, \"seed\": 7}}\n");

    // The config alone asks for an invalid count.
    CHECK(run_cli("gen-data --config " + dir + "/run.json --out-dir " + dir + "/a").code == 2);

    // An explicit flag overrides the config; everything else still comes from it.
    REQUIRE(run_cli("gen-data --config " + dir + "/run.json --count 30 --out-dir " + dir + "/b").code == 0);
    CHECK(file_bytes(dir + "/b/heat-param.ndsn") == file_bytes(work_dir() + "/gen_a/heat-param.ndsn"));

    // Flat dotted keys work too.
    write_text_file(dir + "/flat.json", "{\"gen-data.kind\": \"heat\", \"gen-data.stage\": \"param\"}\n");
    REQUIRE(run_cli("gen-data --config " + dir + "/flat.json --count 30 --seed 7 --out-dir " + dir + "/c").code == 0);
    CHECK(file_bytes(dir + "/c/heat-param.ndsn") == file_bytes(dir + "/b/heat-param.ndsn"));

    write_text_file(dir + "/broken.json", "{not json\n");
    CHECK(run_cli("gen-data --config " + dir + "/broken.json --kind heat --out-dir " + dir + "/d").code == 2);
}

TEST_CASE("cli: training writes a checkpoint and resume continues the step count") {
    const Corpus& cp = corpus();

    int64_t step = -1;
    (void)load_geom_net(cp.pnet, &step);
    // 30 samples -> 24 training rows -> 3 batches of 8 per epoch, 2 epochs.
    CHECK(step == 6);

    const std::string hist = read_text_file(cp.dir + "/pnet_history.csv");
    CHECK(line_count(hist) == 3);
    CHECK(hist.rfind("epoch,train_loss,test_loss,lr\n", 0) == 0);

    REQUIRE(run_cli("train --net pnet --data " + cp.param + " --epochs 1 --resume --seed 2 --out-dir " + cp.dir)
                .code == 0);
    (void)load_geom_net(cp.pnet, &step);
    CHECK(step == 9);

    CHECK(run_cli("train --net snet --data " + cp.sim + " --epochs 2 --lr 1e10 --out-dir " + work_dir() + "/blowup")
              .code == 4);
    CHECK(run_cli("train --net snet --data " + work_dir() + "/absent.ndsn --out-dir " + work_dir() + "/absent")
              .code == 2);
    CHECK(run_cli("train --net qnet --data " + cp.sim + " --out-dir " + work_dir() + "/badnet").code == 2);
}

TEST_CASE("cli: optimize writes history, design, and geometry artifacts") {
    const Corpus& cp = corpus();
    const std::string dir = work_dir() + "/opt";
    const CliResult r = run_cli("optimize --kind heat --pnet " + cp.pnet + " --snet " + cp.snet +
                                " --iterations 2 --seed 5 --out-dir " + dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("surrogate fitness") != std::string::npos);
    CHECK(r.out.find("solver") != std::string::npos);

    const std::string hist = read_text_file(dir + "/history.csv");
    CHECK(hist.rfind("iter,fitness,raw_norm,penalty\n", 0) == 0);
    CHECK(line_count(hist) == 3);

    const std::string design = read_text_file(dir + "/design.csv");
    CHECK(design.rfind("index,raw,constrained\n", 0) == 0);
    CHECK(line_count(design) == 16);

    CHECK(file_exists(dir + "/geometry.pgm"));

    CHECK(run_cli("optimize --kind heat --pnet " + work_dir() + "/missing.ckpt --snet " + cp.snet + " --out-dir " +
                  work_dir() + "/opt_missing")
              .code == 5);
}

TEST_CASE("cli: anneal runs the surrogate evaluator and logs every step") {
    const Corpus& cp = corpus();
    const std::string dir = work_dir() + "/sa";
    const CliResult r = run_cli("anneal --kind heat --evaluator surrogate --pnet " + cp.pnet + " --snet " + cp.snet +
                                " --steps 20 --seed 9 --out-dir " + dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("21 fitness evaluations") != std::string::npos);

    const std::string hist = read_text_file(dir + "/history.csv");
    CHECK(hist.rfind("step,temperature,fitness,best_fitness\n", 0) == 0);
    CHECK(line_count(hist) == 21);

    const std::string best = read_text_file(dir + "/best_design.csv");
    CHECK(best.rfind("index,constrained\n", 0) == 0);
    CHECK(line_count(best) == 16);

    CHECK(run_cli("anneal --kind heat --evaluator oracle --out-dir " + work_dir() + "/sa_bad").code == 2);
}

TEST_CASE("cli: sweep is deterministic and accepts a design file") {
    const Corpus& cp = corpus();
    const std::string nets = " --pnet " + cp.pnet + " --snet " + cp.snet;
    const std::string a = work_dir() + "/sw_a";
    const std::string b = work_dir() + "/sw_b";
    REQUIRE(run_cli("sweep --kind heat" + nets + " --index 3 --points 5 --out-dir " + a).code == 0);
    REQUIRE(run_cli("sweep --kind heat" + nets + " --index 3 --points 5 --out-dir " + b).code == 0);
    CHECK(file_bytes(a + "/sweep.csv") == file_bytes(b + "/sweep.csv"));

    const std::string csv = read_text_file(a + "/sweep.csv");
    CHECK(csv.rfind("value,fitness\n", 0) == 0);
    CHECK(line_count(csv) == 6);

    // Base the sweep on the design written by optimize.
    REQUIRE(run_cli("sweep --kind heat" + nets + " --index 0 --points 3 --design " + work_dir() +
                    "/opt/design.csv --out-dir " + work_dir() + "/sw_c")
                .code == 0);

    CHECK(run_cli("sweep --kind heat" + nets + " --points 5 --out-dir " + work_dir() + "/sw_d").code == 2);
    CHECK(run_cli("sweep --kind heat" + nets + " --index 15 --points 5 --out-dir " + work_dir() + "/sw_e").code == 2);
}

TEST_CASE("cli: evaluate writes metrics without touching the checkpoint") {
    const Corpus& cp = corpus();
    const std::vector<char> before = file_bytes(cp.snet);
    const std::string dir = work_dir() + "/eval";
    const CliResult r = run_cli("evaluate --snet " + cp.snet + " --data " + cp.sim + " --out-dir " + dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("test MSE") != std::string::npos);

    const std::string metrics = read_text_file(dir + "/metrics.csv");
    CHECK(metrics.rfind("metric,value\n", 0) == 0);
    CHECK(metrics.find("test_mse_mean") != std::string::npos);
    CHECK(read_text_file(dir + "/scatter.csv").rfind("index,field_mse", 0) == 0);
    CHECK(file_bytes(cp.snet) == before);
}

TEST_CASE("cli: bench writes the timing table") {
    const Corpus& cp = corpus();
    const std::string dir = work_dir() + "/bench";
    const CliResult r = run_cli("bench --kind heat --pnet " + cp.pnet + " --snet " + cp.snet +
                                " --min-seconds 0.01 --out-dir " + dir);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("speedup") != std::string::npos);

    const std::string csv = read_text_file(dir + "/bench.csv");
    CHECK(csv.rfind("quantity,batch_1,batch_2,batch_4,batch_8,batch_16\n", 0) == 0);
    CHECK(line_count(csv) == 6);
    CHECK(csv.find("solver_seconds") != std::string::npos);
    CHECK(csv.find("n/a") != std::string::npos);
}
