// Command-line front end for the neural design-optimization toolkit:
// dataset generation, surrogate training, gradient optimization, simulated
// annealing, parameter sweeps, model evaluation, and benchmarking.
//
// Exit codes:
//   0  success (including --help)
//   1  unexpected internal error
//   2  usage, configuration, or input-format error
//   3  dataset generation discarded too many samples
//   4  numeric failure (non-finite loss or fitness)
//   5  checkpoint file missing

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ndo/bench.hpp"
#include "ndo/dataset.hpp"
#include "ndo/errors.hpp"
#include "ndo/geometry.hpp"
#include "ndo/io.hpp"
#include "ndo/optimizer.hpp"
#include "ndo/pipeline.hpp"

namespace {

using nlohmann::json;

std::string path_join(const std::string& dir, const std::string& name) {
    if (dir.empty() || dir == ".") return name;
    if (dir.back() == '/') return dir + name;
    return dir + "/" + name;
}

// ---------------------------------------------------------------------------
// Option layering: built-in default < JSON config file < explicit flag.
// The config file scopes values per command, either nested
// ({"train": {"epochs": 60}}) or flat-dotted ({"train.epochs": 60}); the
// resolved configuration is echoed to <out-dir>/config.json.

struct Common {
    std::string out_dir = ".";
    uint64_t seed = 0;
    int threads = 0;
    std::string config_path;

    CLI::Option* out_dir_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;

    json cfg = json::object();   // command-scoped slice of the config file
    json echo = json::object();  // resolved values, written back out
};

void add_common(CLI::App* cmd, Common& c) {
    c.out_dir_opt = cmd->add_option("-o,--out-dir", c.out_dir, "Directory for all outputs (created if missing)");
    c.seed_opt = cmd->add_option("--seed", c.seed, "RNG seed");
    c.threads_opt =
        cmd->add_option("--threads", c.threads, "BLAS thread count (0 = NDO_THREADS env or library default)");
    cmd->add_option("--config", c.config_path, "JSON config file; explicit flags override its values");
}

json command_config(const std::string& path, const std::string& cmd_name) {
    json out = json::object();
    if (path.empty()) return out;
    json root;
    try {
        root = json::parse(ndo::read_text_file(path));
    } catch (const json::exception& e) {
        throw ndo::FormatError(std::string("config file: ") + e.what());
    }
    if (!root.is_object()) throw ndo::FormatError("config file must hold a JSON object");
    if (root.contains(cmd_name) && root.at(cmd_name).is_object())
        for (const auto& [k, v] : root.at(cmd_name).items()) out[k] = v;
    const std::string prefix = cmd_name + ".";
    for (const auto& [k, v] : root.items())
        if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = v;
    return out;
}

template <class T>
void resolve(const CLI::Option* opt, Common& c, const std::string& key, T& value) {
    if ((opt == nullptr || opt->count() == 0) && c.cfg.contains(key)) {
        try {
            value = c.cfg.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ndo::FormatError("config key '" + key + "': " + e.what());
        }
    }
    c.echo[key] = value;
}

// For options whose built-in default depends on other resolved options.
template <class T>
void default_if_unset(const CLI::Option* opt, const Common& c, const std::string& key, T& value, const T& dflt) {
    if ((opt == nullptr || opt->count() == 0) && !c.cfg.contains(key)) value = dflt;
}

void finish_common(Common& c, const std::string& cmd_name) {
    c.cfg = command_config(c.config_path, cmd_name);
    resolve(c.out_dir_opt, c, "out_dir", c.out_dir);
    resolve(c.seed_opt, c, "seed", c.seed);
    if (c.threads_opt->count() == 0 && !c.cfg.contains("threads"))
        if (const char* env = std::getenv("NDO_THREADS")) c.threads = std::atoi(env);
    resolve(c.threads_opt, c, "threads", c.threads);
    ndo::ensure_dir(c.out_dir);
    if (c.threads > 0) openblas_set_num_threads(c.threads);
}

void write_config_echo(const Common& c, const std::string& cmd_name) {
    json root = json::object();
    root[cmd_name] = c.echo;
    ndo::write_text_file(path_join(c.out_dir, "config.json"), root.dump(2) + "\n");
}

ndo::DesignKind parse_kind(const std::string& s) {
    if (s == "heat") return ndo::DesignKind::heat;
    if (s == "airfoil") return ndo::DesignKind::airfoil;
    throw ndo::DomainError("--kind must be 'heat' or 'airfoil' (got '" + s + "')");
}

void require_value(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ndo::DomainError(flag + " is required (flag or config file)");
}

std::string csv_of_design(const std::vector<double>& raw, const std::vector<double>& constrained) {
    std::string s = "index,raw,constrained\n";
    for (size_t i = 0; i < constrained.size(); ++i)
        s += std::to_string(i) + "," + ndo::fmt_g9(i < raw.size() ? raw[i] : 0.0) + "," +
             ndo::fmt_g9(constrained[i]) + "\n";
    return s;
}

// Accepts either the design.csv written by `optimize`/`anneal` (header line
// containing "constrained"; the value is the last column of each row) or a
// bare list of numbers separated by whitespace, commas, or newlines.
std::vector<double> parse_design_file(const std::string& path) {
    const std::string text = ndo::read_text_file(path);
    std::vector<std::string> lines;
    {
        std::string cur;
        for (char ch : text) {
            if (ch == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!cur.empty()) lines.push_back(cur);
    }
    std::vector<double> out;
    const bool has_header = !lines.empty() && lines.front().find("constrained") != std::string::npos;
    auto parse_number = [&](const std::string& tok) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || end == nullptr || *end != '\0')
            throw ndo::FormatError("design file " + path + ": cannot parse '" + tok + "' as a number");
        return v;
    };
    for (size_t li = has_header ? 1 : 0; li < lines.size(); ++li) {
        std::string line = lines[li];
        if (line.empty()) continue;
        if (has_header) {
            const size_t comma = line.rfind(',');
            out.push_back(parse_number(comma == std::string::npos ? line : line.substr(comma + 1)));
        } else {
            std::string tok;
            for (char ch : line + ",") {
                if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r') {
                    if (!tok.empty()) out.push_back(parse_number(tok));
                    tok.clear();
                } else {
                    tok += ch;
                }
            }
        }
    }
    if (out.empty()) throw ndo::FormatError("design file " + path + " holds no numbers");
    return out;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenArgs {
    Common c;
    std::string kind;
    std::string stage = "sim";
    std::string name;  // output file name; default <kind>-<stage>.ndsn
    int64_t count = 200;
    CLI::Option *kind_opt = nullptr, *stage_opt = nullptr, *name_opt = nullptr, *count_opt = nullptr;
};

void run_gen_data(GenArgs& a) {
    finish_common(a.c, "gen-data");
    resolve(a.kind_opt, a.c, "kind", a.kind);
    resolve(a.stage_opt, a.c, "stage", a.stage);
    resolve(a.count_opt, a.c, "count", a.count);
    require_value(a.kind, "--kind");
    const ndo::DesignKind kind = parse_kind(a.kind);
    if (a.stage != "param" && a.stage != "sim")
        throw ndo::DomainError("--stage must be 'param' or 'sim' (got '" + a.stage + "')");
    default_if_unset(a.name_opt, a.c, "name", a.name, a.kind + "-" + a.stage + ".ndsn");
    resolve(a.name_opt, a.c, "name", a.name);

    if (a.stage == "sim" && kind == ndo::DesignKind::airfoil)
        std::fprintf(stderr, "note: airfoil flow samples each run a lattice-Boltzmann solve; expect ~1 min/sample\n");

    const ndo::GenResult r = a.stage == "param" ? ndo::gen_param_dataset(kind, a.count, a.c.seed)
                                                : ndo::gen_sim_dataset(kind, a.count, a.c.seed);
    const std::string path = path_join(a.c.out_dir, a.name);
    ndo::write_dataset(path, r.data);
    ndo::write_manifest(ndo::manifest_path(path), r.manifest);
    write_config_echo(a.c, "gen-data");
    std::printf("generated %lld %s samples in %lld attempts (%lld discarded)\n",
                static_cast<long long>(r.manifest.count), r.manifest.kind.c_str(),
                static_cast<long long>(r.manifest.attempts), static_cast<long long>(r.manifest.discarded));
    std::printf("dataset  -> %s\nmanifest -> %s\n", path.c_str(), ndo::manifest_path(path).c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    Common c;
    std::string net;  // pnet | snet
    std::string data;
    std::string checkpoint;  // default <net>.ckpt in out-dir
    std::string history;     // default <net>_history.csv in out-dir
    bool resume = false;
    int epochs = 0;
    int batch_size = 0;
    double lr = 0.0, lr_final = 0.0, plateau_rel = 0.0, pressure_weight = 0.0;
    int plateau_patience = 0;
    bool plateau = true;
    CLI::Option *net_opt = nullptr, *data_opt = nullptr, *ckpt_opt = nullptr, *hist_opt = nullptr,
                *resume_opt = nullptr, *epochs_opt = nullptr, *batch_opt = nullptr, *lr_opt = nullptr,
                *lr_final_opt = nullptr, *plateau_opt = nullptr, *patience_opt = nullptr, *rel_opt = nullptr,
                *pw_opt = nullptr;
};

void run_train(TrainArgs& a) {
    finish_common(a.c, "train");
    resolve(a.net_opt, a.c, "net", a.net);
    resolve(a.data_opt, a.c, "data", a.data);
    require_value(a.net, "--net");
    require_value(a.data, "--data");
    if (a.net != "pnet" && a.net != "snet")
        throw ndo::DomainError("--net must be 'pnet' (geometry net) or 'snet' (simulation net)");
    const bool geom = a.net == "pnet";

    default_if_unset(a.ckpt_opt, a.c, "checkpoint", a.checkpoint, a.net + ".ckpt");
    resolve(a.ckpt_opt, a.c, "checkpoint", a.checkpoint);
    default_if_unset(a.hist_opt, a.c, "history", a.history, a.net + "_history.csv");
    resolve(a.hist_opt, a.c, "history", a.history);
    resolve(a.resume_opt, a.c, "resume", a.resume);

    const ndo::Dataset ds = ndo::read_dataset(a.data);
    const ndo::DatasetManifest m = ndo::read_manifest(ndo::manifest_path(a.data));
    bool heat = false;
    if (m.kind.rfind("heat", 0) == 0)
        heat = true;
    else if (m.kind.rfind("airfoil", 0) != 0)
        throw ndo::FormatError("dataset kind '" + m.kind + "' is neither heat nor airfoil");

    ndo::TrainConfig tc = geom ? ndo::geom_train_config() : ndo::field_train_config();
    tc.seed = a.c.seed;
    default_if_unset(a.epochs_opt, a.c, "epochs", a.epochs, tc.epochs);
    default_if_unset(a.batch_opt, a.c, "batch_size", a.batch_size, tc.batch_size);
    default_if_unset(a.lr_opt, a.c, "lr", a.lr, tc.lr);
    default_if_unset(a.lr_final_opt, a.c, "lr_final", a.lr_final, tc.lr_final);
    default_if_unset(a.plateau_opt, a.c, "plateau", a.plateau, tc.plateau);
    default_if_unset(a.patience_opt, a.c, "plateau_patience", a.plateau_patience, tc.plateau_patience);
    default_if_unset(a.rel_opt, a.c, "plateau_rel", a.plateau_rel, tc.plateau_rel);
    default_if_unset(a.pw_opt, a.c, "pressure_weight", a.pressure_weight, tc.pressure_weight);
    resolve(a.epochs_opt, a.c, "epochs", a.epochs);
    resolve(a.batch_opt, a.c, "batch_size", a.batch_size);
    resolve(a.lr_opt, a.c, "lr", a.lr);
    resolve(a.lr_final_opt, a.c, "lr_final", a.lr_final);
    resolve(a.plateau_opt, a.c, "plateau", a.plateau);
    resolve(a.patience_opt, a.c, "plateau_patience", a.plateau_patience);
    resolve(a.rel_opt, a.c, "plateau_rel", a.plateau_rel);
    resolve(a.pw_opt, a.c, "pressure_weight", a.pressure_weight);
    tc.epochs = a.epochs;
    tc.batch_size = a.batch_size;
    tc.lr = a.lr;
    tc.lr_final = a.lr_final;
    tc.plateau = a.plateau;
    tc.plateau_patience = a.plateau_patience;
    tc.plateau_rel = a.plateau_rel;
    tc.pressure_weight = a.pressure_weight;

    const std::string ckpt_path = path_join(a.c.out_dir, a.checkpoint);
    write_config_echo(a.c, "train");

    auto on_epoch = [&](const ndo::EpochRow& row) {
        std::printf("epoch %3d  train %.6g  test %.6g  lr %g\n", row.epoch, row.train_loss, row.test_loss, row.lr);
        std::fflush(stdout);
    };

    int64_t step0 = 0;
    ndo::TrainResult res;
    if (geom) {
        ndo::GeomNet<float> net = a.resume
                                      ? ndo::load_geom_net(ckpt_path, &step0)
                                      : ndo::GeomNet<float>(heat ? ndo::heat_geom_config() : ndo::airfoil_geom_config(),
                                                            a.c.seed);
        std::printf("training geometry net on %s (%lld samples), lr %g\n", m.kind.c_str(),
                    static_cast<long long>(m.count), tc.lr);
        res = ndo::train_geom_net(net, ds, m, tc, on_epoch);
        ndo::save_geom_net(ckpt_path, net, step0 + res.steps);
    } else {
        ndo::FieldNet<float> net =
            a.resume ? ndo::load_field_net(ckpt_path, &step0)
                     : ndo::FieldNet<float>(heat ? ndo::heat_field_config() : ndo::flow_field_config(), a.c.seed);
        std::printf("training simulation net on %s (%lld samples), lr %g\n", m.kind.c_str(),
                    static_cast<long long>(m.count), tc.lr);
        res = ndo::train_field_net(net, ds, m, tc, on_epoch);
        ndo::save_field_net(ckpt_path, net, step0 + res.steps);
    }
    ndo::write_text_file(path_join(a.c.out_dir, a.history), ndo::history_csv(res.history));
    std::printf("best test loss %.6g after %lld optimizer steps (total %lld)\n", res.best_test_loss,
                static_cast<long long>(res.steps), static_cast<long long>(step0 + res.steps));
    std::printf("checkpoint -> %s\nhistory    -> %s\n", ckpt_path.c_str(),
                path_join(a.c.out_dir, a.history).c_str());
}

// ---------------------------------------------------------------------------
// optimize

struct OptArgs {
    Common c;
    std::string kind, pnet, snet;
    int iterations = 300;
    bool random_init = false;
    double lr = 0.0;  // 0 -> objective default
    double momentum = 0.9, noise_sigma = 0.01, lambda = 1.0;
    bool solver_eval = true;
    CLI::Option *kind_opt = nullptr, *pnet_opt = nullptr, *snet_opt = nullptr, *iters_opt = nullptr,
                *rand_opt = nullptr, *lr_opt = nullptr, *mom_opt = nullptr, *noise_opt = nullptr,
                *lambda_opt = nullptr, *solver_opt = nullptr;
};

void run_optimize(OptArgs& a) {
    finish_common(a.c, "optimize");
    resolve(a.kind_opt, a.c, "kind", a.kind);
    resolve(a.pnet_opt, a.c, "pnet", a.pnet);
    resolve(a.snet_opt, a.c, "snet", a.snet);
    resolve(a.iters_opt, a.c, "iterations", a.iterations);
    resolve(a.rand_opt, a.c, "random_init", a.random_init);
    resolve(a.lr_opt, a.c, "lr", a.lr);
    resolve(a.mom_opt, a.c, "momentum", a.momentum);
    resolve(a.noise_opt, a.c, "noise_sigma", a.noise_sigma);
    resolve(a.lambda_opt, a.c, "lambda", a.lambda);
    resolve(a.solver_opt, a.c, "solver_eval", a.solver_eval);
    require_value(a.kind, "--kind");
    require_value(a.pnet, "--pnet");
    require_value(a.snet, "--snet");

    const ndo::DesignKind kind = parse_kind(a.kind);
    const ndo::SurrogatePair pair = ndo::load_surrogates(a.pnet, a.snet);

    ndo::OptimizeConfig cfg;
    cfg.kind = kind;
    cfg.iterations = a.iterations;
    cfg.seed = a.c.seed;
    cfg.random_init = a.random_init;
    cfg.lr = a.lr;
    cfg.momentum = a.momentum;
    cfg.noise_sigma = a.noise_sigma;
    cfg.lambda = a.lambda;
    cfg.solver_eval = a.solver_eval;
    write_config_echo(a.c, "optimize");

    const int64_t stride = a.iterations > 10 ? a.iterations / 10 : 1;
    auto on_iter = [&](const ndo::OptimizerState& st) {
        if (st.iter % stride == 0 || st.iter == a.iterations)
            std::fprintf(stderr, "  iteration %lld/%d\n", static_cast<long long>(st.iter), a.iterations);
    };
    const ndo::OptimizeResult res = ndo::optimize_design(pair, cfg, on_iter);

    ndo::write_text_file(path_join(a.c.out_dir, "history.csv"), res.history_csv);
    ndo::write_text_file(path_join(a.c.out_dir, "design.csv"), csv_of_design(res.state.raw, res.constrained));
    if (res.geometry.h > 0)
        ndo::write_pgm(path_join(a.c.out_dir, "geometry.pgm"), res.geometry.cells.data(), res.geometry.h,
                       res.geometry.w);

    std::printf("finished %d iterations\n", a.iterations);
    if (kind == ndo::DesignKind::heat) {
        std::printf("surrogate fitness %.6g (predicted source temperature %.6g)\n", res.surrogate_fitness,
                    -res.surrogate_fitness);
        if (cfg.solver_eval) {
            if (res.solver_ok)
                std::printf("solver fitness    %.6g (solver source temperature    %.6g)\n", res.solver_fitness,
                            -res.solver_fitness);
            else
                std::printf("solver evaluation failed: final design is degenerate or did not converge\n");
        }
    } else {
        std::printf("surrogate mean lift/drag %.6g\n", res.surrogate_fitness);
        std::printf("  per-angle:");
        for (double v : res.surrogate_angle_fitness) std::printf(" %.4g", v);
        std::printf("\n");
        if (cfg.solver_eval) {
            if (res.solver_ok) {
                std::printf("solver mean lift/drag    %.6g\n", res.solver_fitness);
                std::printf("  per-angle:");
                for (double v : res.solver_angle_fitness) std::printf(" %.4g", v);
                std::printf("\n");
            } else {
                std::printf("solver evaluation failed: final design is degenerate or did not converge\n");
            }
        }
    }
    std::printf("history  -> %s\ndesign   -> %s\n", path_join(a.c.out_dir, "history.csv").c_str(),
                path_join(a.c.out_dir, "design.csv").c_str());
    if (res.geometry.h > 0) std::printf("geometry -> %s\n", path_join(a.c.out_dir, "geometry.pgm").c_str());
}

// ---------------------------------------------------------------------------
// anneal

struct AnnealArgs {
    Common c;
    std::string kind, evaluator = "surrogate", pnet, snet;
    double t0 = 0.1, cooling = 0.995, sigma = 0.05;
    int64_t steps = 5000;
    CLI::Option *kind_opt = nullptr, *eval_opt = nullptr, *pnet_opt = nullptr, *snet_opt = nullptr,
                *t0_opt = nullptr, *cool_opt = nullptr, *sigma_opt = nullptr, *steps_opt = nullptr;
};

void run_anneal(AnnealArgs& a) {
    finish_common(a.c, "anneal");
    resolve(a.kind_opt, a.c, "kind", a.kind);
    resolve(a.eval_opt, a.c, "evaluator", a.evaluator);
    resolve(a.pnet_opt, a.c, "pnet", a.pnet);
    resolve(a.snet_opt, a.c, "snet", a.snet);
    resolve(a.t0_opt, a.c, "t0", a.t0);
    resolve(a.cool_opt, a.c, "cooling", a.cooling);
    resolve(a.sigma_opt, a.c, "sigma", a.sigma);
    resolve(a.steps_opt, a.c, "steps", a.steps);
    require_value(a.kind, "--kind");
    const ndo::DesignKind kind = parse_kind(a.kind);
    if (a.evaluator != "surrogate" && a.evaluator != "solver")
        throw ndo::DomainError("--evaluator must be 'surrogate' or 'solver'");

    ndo::FitnessFn fitness;
    if (a.evaluator == "surrogate") {
        require_value(a.pnet, "--pnet");
        require_value(a.snet, "--snet");
        auto pair = std::make_shared<ndo::SurrogatePair>(ndo::load_surrogates(a.pnet, a.snet));
        ndo::detail::check_pair(*pair, kind);
        fitness = [pair, kind](const std::vector<double>& x) { return ndo::surrogate_mean_fitness(*pair, kind, x); };
    } else {
        if (kind == ndo::DesignKind::airfoil)
            std::fprintf(stderr,
                         "note: every solver evaluation runs 9 flow solves; "
                         "thousands of steps will take many hours\n");
        fitness = ndo::make_solver_fitness(kind);
    }

    ndo::AnnealConfig cfg;
    cfg.t0 = a.t0;
    cfg.cooling = a.cooling;
    cfg.proposal_sigma = a.sigma;
    cfg.steps = a.steps;
    cfg.seed = a.c.seed;
    write_config_echo(a.c, "anneal");

    const ndo::AnnealResult res = ndo::simulated_annealing(fitness, ndo::design_dim(kind), cfg);

    ndo::write_text_file(path_join(a.c.out_dir, "history.csv"), res.history_csv);
    std::string best = "index,constrained\n";
    for (size_t i = 0; i < res.best.size(); ++i)
        best += std::to_string(i) + "," + ndo::fmt_g9(res.best[i]) + "\n";
    ndo::write_text_file(path_join(a.c.out_dir, "best_design.csv"), best);

    std::printf("annealed %lld steps (%lld fitness evaluations)\n", static_cast<long long>(a.steps),
                static_cast<long long>(res.evaluations));
    if (kind == ndo::DesignKind::heat)
        std::printf("best fitness %.6g (source temperature %.6g)\n", res.best_fitness, -res.best_fitness);
    else
        std::printf("best fitness %.6g (mean lift/drag over the angle sweep)\n", res.best_fitness);
    std::printf("history -> %s\nbest    -> %s\n", path_join(a.c.out_dir, "history.csv").c_str(),
                path_join(a.c.out_dir, "best_design.csv").c_str());
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
    Common c;
    std::string kind, pnet, snet, design;
    int index = -1;
    int points = 51;
    CLI::Option *kind_opt = nullptr, *pnet_opt = nullptr, *snet_opt = nullptr, *design_opt = nullptr,
                *index_opt = nullptr, *points_opt = nullptr;
};

void run_sweep(SweepArgs& a) {
    finish_common(a.c, "sweep");
    resolve(a.kind_opt, a.c, "kind", a.kind);
    resolve(a.pnet_opt, a.c, "pnet", a.pnet);
    resolve(a.snet_opt, a.c, "snet", a.snet);
    resolve(a.design_opt, a.c, "design", a.design);
    resolve(a.index_opt, a.c, "index", a.index);
    resolve(a.points_opt, a.c, "points", a.points);
    require_value(a.kind, "--kind");
    require_value(a.pnet, "--pnet");
    require_value(a.snet, "--snet");
    if (a.index < 0) throw ndo::DomainError("--index is required (0-based design parameter)");

    const ndo::DesignKind kind = parse_kind(a.kind);
    const ndo::SurrogatePair pair = ndo::load_surrogates(a.pnet, a.snet);
    std::vector<double> base(static_cast<size_t>(ndo::design_dim(kind)), 0.5);
    if (!a.design.empty()) base = parse_design_file(a.design);
    write_config_echo(a.c, "sweep");

    const std::string csv = ndo::parameter_sweep(pair, kind, base, a.index, a.points);
    ndo::write_text_file(path_join(a.c.out_dir, "sweep.csv"), csv);
    std::printf("swept parameter %d over %d points\nsweep -> %s\n", a.index, a.points,
                path_join(a.c.out_dir, "sweep.csv").c_str());
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalArgs {
    Common c;
    std::string snet, data;
    CLI::Option *snet_opt = nullptr, *data_opt = nullptr;
};

void run_evaluate(EvalArgs& a) {
    finish_common(a.c, "evaluate");
    resolve(a.snet_opt, a.c, "snet", a.snet);
    resolve(a.data_opt, a.c, "data", a.data);
    require_value(a.snet, "--snet");
    require_value(a.data, "--data");

    const ndo::FieldNet<float> net = ndo::load_field_net(a.snet);
    const ndo::Dataset ds = ndo::read_dataset(a.data);
    const ndo::DatasetManifest m = ndo::read_manifest(ndo::manifest_path(a.data));
    write_config_echo(a.c, "evaluate");

    const ndo::EvalReport rep = ndo::evaluate_field_net(net, ds, m);
    ndo::write_text_file(path_join(a.c.out_dir, "metrics.csv"), rep.metrics_csv);
    ndo::write_text_file(path_join(a.c.out_dir, "scatter.csv"), rep.scatter_csv);

    std::printf("test MSE %.6g, train-mean baseline %.6g (ratio %.3g)\n", rep.test_mse, rep.baseline_mse,
                rep.baseline_mse > 0 ? rep.test_mse / rep.baseline_mse : 0.0);
    if (ds.channels == 3) {
        std::printf("Pearson r: drag %.4g, lift %.4g, max speed %.4g\n", rep.corr_drag, rep.corr_lift,
                    rep.corr_max_speed);
    } else {
        std::printf("Pearson r: source temperature %.4g\n", rep.corr_source_temp);
    }
    std::printf("metrics -> %s\nscatter -> %s\n", path_join(a.c.out_dir, "metrics.csv").c_str(),
                path_join(a.c.out_dir, "scatter.csv").c_str());
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    Common c;
    std::string kind, pnet, snet;
    double min_seconds = 0.2;
    CLI::Option *kind_opt = nullptr, *pnet_opt = nullptr, *snet_opt = nullptr, *min_opt = nullptr;
};

void run_bench(BenchArgs& a) {
    finish_common(a.c, "bench");
    resolve(a.kind_opt, a.c, "kind", a.kind);
    resolve(a.pnet_opt, a.c, "pnet", a.pnet);
    resolve(a.snet_opt, a.c, "snet", a.snet);
    resolve(a.min_opt, a.c, "min_seconds", a.min_seconds);
    require_value(a.kind, "--kind");
    require_value(a.pnet, "--pnet");
    require_value(a.snet, "--snet");

    const ndo::DesignKind kind = parse_kind(a.kind);
    const ndo::SurrogatePair pair = ndo::load_surrogates(a.pnet, a.snet);
    write_config_echo(a.c, "bench");
    if (kind == ndo::DesignKind::airfoil)
        std::fprintf(stderr, "note: the reference row runs one converged flow solve; expect a short wait\n");

    const ndo::BenchReport rep = ndo::run_bench(pair, kind, a.c.seed, a.min_seconds);
    ndo::write_text_file(path_join(a.c.out_dir, "bench.csv"), rep.csv);

    std::printf("simulation-net forward (seconds per call / per sample):\n");
    for (size_t i = 0; i < rep.batches.size(); ++i)
        std::printf("  batch %2d: %.6g / %.6g\n", rep.batches[i], rep.forward_seconds[i], rep.forward_per_sample[i]);
    std::printf("design-gradient evaluation (batch 1): %.6g s\n", rep.grad_step_seconds);
    std::printf("converged reference solve: %.6g s (%d iterations)\n", rep.solver_seconds, rep.solver_iterations);
    std::printf("speedup (solver / batch-1 surrogate forward): %.1fx\n", rep.speedup);
    std::printf("bench -> %s\n", path_join(a.c.out_dir, "bench.csv").c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural design optimization: surrogate training and gradient-based shape search"};
    app.require_subcommand(1);

    GenArgs gen;
    {
        CLI::App* cmd = app.add_subcommand("gen-data", "Generate a design/geometry/field dataset");
        add_common(cmd, gen.c);
        gen.kind_opt = cmd->add_option("--kind", gen.kind, "Design objective: heat | airfoil");
        gen.stage_opt = cmd->add_option("--stage", gen.stage,
                                        "param: design->geometry pairs only; sim: adds solver fields (default)");
        gen.count_opt = cmd->add_option("--count", gen.count, "Number of samples (default 200, minimum 10)");
        gen.name_opt = cmd->add_option("--name", gen.name, "Output file name (default <kind>-<stage>.ndsn)");
        cmd->callback([&gen] { run_gen_data(gen); });
    }

    TrainArgs train;
    {
        CLI::App* cmd = app.add_subcommand("train", "Train a surrogate network on a dataset");
        add_common(cmd, train.c);
        train.net_opt = cmd->add_option("--net", train.net, "pnet: design->geometry; snet: geometry->field");
        train.data_opt = cmd->add_option("--data", train.data, "Dataset file (.ndsn; manifest expected alongside)");
        train.ckpt_opt = cmd->add_option("--checkpoint", train.checkpoint,
                                         "Checkpoint file name in out-dir (default <net>.ckpt)");
        train.hist_opt = cmd->add_option("--history", train.history,
                                         "Loss history file name in out-dir (default <net>_history.csv)");
        train.resume_opt = cmd->add_flag("--resume", train.resume, "Continue training from the checkpoint");
        train.epochs_opt = cmd->add_option("--epochs", train.epochs, "Training epochs (default 40)");
        train.batch_opt = cmd->add_option("--batch-size", train.batch_size, "Minibatch size (default 8)");
        train.lr_opt = cmd->add_option("--lr", train.lr, "Initial learning rate (default 1e-4)");
        train.lr_final_opt = cmd->add_option("--lr-final", train.lr_final, "Post-plateau learning rate (default 1e-5)");
        train.plateau_opt = cmd->add_flag("--plateau,!--no-plateau", train.plateau,
                                          "Drop the rate on a test-loss plateau (snet default on, pnet off)");
        train.patience_opt = cmd->add_option("--plateau-patience", train.plateau_patience,
                                             "Epochs without improvement before a drop (default 5)");
        train.rel_opt = cmd->add_option("--plateau-rel", train.plateau_rel,
                                        "Relative improvement that resets the plateau (default 0.01)");
        train.pw_opt = cmd->add_option("--pressure-weight", train.pressure_weight,
                                       "Pressure-channel weight in the flow loss (default 10)");
        cmd->callback([&train] { run_train(train); });
    }

    OptArgs opt;
    {
        CLI::App* cmd = app.add_subcommand("optimize", "Gradient-ascend a design through the surrogates");
        add_common(cmd, opt.c);
        opt.kind_opt = cmd->add_option("--kind", opt.kind, "Design objective: heat | airfoil");
        opt.pnet_opt = cmd->add_option("--pnet", opt.pnet, "Geometry-net checkpoint");
        opt.snet_opt = cmd->add_option("--snet", opt.snet, "Simulation-net checkpoint");
        opt.iters_opt = cmd->add_option("--iterations", opt.iterations, "Gradient steps (default 300)");
        opt.rand_opt = cmd->add_flag("--random-init", opt.random_init, "Start from a random design instead of 0.5");
        opt.lr_opt = cmd->add_option("--lr", opt.lr, "Step size (default 0.05 heat, 0.001 airfoil)");
        opt.mom_opt = cmd->add_option("--momentum", opt.momentum, "Momentum coefficient (default 0.9)");
        opt.noise_opt = cmd->add_option("--noise-sigma", opt.noise_sigma,
                                        "Stddev of the exploration noise on the design (default 0.01)");
        opt.lambda_opt = cmd->add_option("--lambda", opt.lambda, "Out-of-box penalty weight (default 1)");
        opt.solver_opt = cmd->add_flag("--solver-eval,!--no-solver-eval", opt.solver_eval,
                                       "Re-evaluate the final design with the reference solver (default on)");
        cmd->callback([&opt] { run_optimize(opt); });
    }

    AnnealArgs anneal;
    {
        CLI::App* cmd = app.add_subcommand("anneal", "Simulated-annealing baseline in design space");
        add_common(cmd, anneal.c);
        anneal.kind_opt = cmd->add_option("--kind", anneal.kind, "Design objective: heat | airfoil");
        anneal.eval_opt = cmd->add_option("--evaluator", anneal.evaluator,
                                          "surrogate (default; needs --pnet/--snet) or solver");
        anneal.pnet_opt = cmd->add_option("--pnet", anneal.pnet, "Geometry-net checkpoint (surrogate evaluator)");
        anneal.snet_opt = cmd->add_option("--snet", anneal.snet, "Simulation-net checkpoint (surrogate evaluator)");
        anneal.t0_opt = cmd->add_option("--t0", anneal.t0, "Starting temperature (default 0.1)");
        anneal.cool_opt = cmd->add_option("--cooling", anneal.cooling, "Multiplicative cooling factor (default 0.995)");
        anneal.sigma_opt = cmd->add_option("--sigma", anneal.sigma, "Proposal stddev (default 0.05)");
        anneal.steps_opt = cmd->add_option("--steps", anneal.steps, "Annealing steps (default 5000)");
        cmd->callback([&anneal] { run_anneal(anneal); });
    }

    SweepArgs sweep;
    {
        CLI::App* cmd = app.add_subcommand("sweep", "1-D fitness sweep of one design parameter");
        add_common(cmd, sweep.c);
        sweep.kind_opt = cmd->add_option("--kind", sweep.kind, "Design objective: heat | airfoil");
        sweep.pnet_opt = cmd->add_option("--pnet", sweep.pnet, "Geometry-net checkpoint");
        sweep.snet_opt = cmd->add_option("--snet", sweep.snet, "Simulation-net checkpoint");
        sweep.index_opt = cmd->add_option("--index", sweep.index, "0-based parameter index to sweep");
        sweep.points_opt = cmd->add_option("--points", sweep.points, "Sample points across [0,1] (default 51)");
        sweep.design_opt = cmd->add_option("--design", sweep.design,
                                           "Base design file (design.csv or bare numbers; default all 0.5)");
        cmd->callback([&sweep] { run_sweep(sweep); });
    }

    EvalArgs eval;
    {
        CLI::App* cmd = app.add_subcommand("evaluate", "Score a trained simulation net against solver labels");
        add_common(cmd, eval.c);
        eval.snet_opt = cmd->add_option("--snet", eval.snet, "Simulation-net checkpoint");
        eval.data_opt = cmd->add_option("--data", eval.data, "Dataset file (.ndsn) with solver fields");
        cmd->callback([&eval] { run_evaluate(eval); });
    }

    BenchArgs bench;
    {
        CLI::App* cmd = app.add_subcommand("bench", "Time surrogate passes against a converged solve");
        add_common(cmd, bench.c);
        bench.kind_opt = cmd->add_option("--kind", bench.kind, "Design objective: heat | airfoil");
        bench.pnet_opt = cmd->add_option("--pnet", bench.pnet, "Geometry-net checkpoint");
        bench.snet_opt = cmd->add_option("--snet", bench.snet, "Simulation-net checkpoint");
        bench.min_opt = cmd->add_option("--min-seconds", bench.min_seconds,
                                        "Minimum sampling time per timed quantity (default 0.2)");
        cmd->callback([&bench] { run_bench(bench); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ndo::CheckpointMissing& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const ndo::NonFiniteLoss& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const ndo::NonFiniteFitness& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const ndo::TooManyFailures& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ndo::Error& e) {
        std::fprintf(stderr, "error: %s\n(run '%s <command> --help' for usage)\n", e.what(), argv[0]);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
