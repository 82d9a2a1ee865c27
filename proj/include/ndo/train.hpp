#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ndo/adam.hpp"
#include "ndo/checkpoint.hpp"
#include "ndo/io.hpp"
#include "ndo/nn.hpp"

namespace ndo {

// Learning-rate schedule: hold the initial rate until the test loss stops
// making significant (> rel_improvement) new bests for `patience` consecutive
// epoch evaluations, then drop to the final rate; a second plateau at the
// final rate requests an early stop.
class PlateauSchedule {
public:
    PlateauSchedule(double lr_initial, double lr_final, int patience = 5, double rel_improvement = 0.01)
        : lr_(lr_initial), lr_final_(lr_final), patience_(patience), rel_(rel_improvement) {}

    // Feed one per-epoch test loss; returns the rate to use for the next epoch.
    double observe(double test_loss) {
        if (test_loss < anchor_ * (1.0 - rel_)) {
            anchor_ = test_loss;
            streak_ = 0;
        } else {
            ++streak_;
        }
        if (streak_ >= patience_) {
            streak_ = 0;
            anchor_ = test_loss;
            if (lr_ > lr_final_) {
                lr_ = lr_final_;
            } else {
                stop_ = true;
            }
        }
        return lr_;
    }

    double lr() const { return lr_; }
    bool should_stop() const { return stop_; }

private:
    double lr_, lr_final_;
    int patience_;
    double rel_;
    double anchor_ = std::numeric_limits<double>::infinity();
    int streak_ = 0;
    bool stop_ = false;
};

struct TrainConfig {
    int epochs = 40;
    int batch_size = 8;
    double lr = 1e-4;
    double lr_final = 1e-5;
    bool plateau = true;  // constant lr when false
    int plateau_patience = 5;
    double plateau_rel = 0.01;
    double pressure_weight = 10.0;  // weight of the pressure channel in the flow loss
    uint64_t seed = 0;
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> history;
    double best_test_loss = 0.0;
    int64_t steps = 0;
};

// Flat sample-major training arrays: sample i's input occupies
// in[i*in_elems .. (i+1)*in_elems).
struct TrainData {
    Shape in_shape;   // per-sample, e.g. {1,64,64} or {15}
    Shape tgt_shape;  // per-sample, e.g. {3,96,192}
    const float* in = nullptr;
    const float* tgt = nullptr;
    int train_count = 0;
    int test_count = 0;  // test samples follow the train samples
};

namespace detail {

inline Tensor<float> gather_batch(const float* base, const Shape& per_sample, const std::vector<int>& idx, int b0,
                                  int b1) {
    const int64_t elems = shape_numel(per_sample);
    Shape s = per_sample;
    s.insert(s.begin(), b1 - b0);
    Tensor<float> out(s);
    for (int i = b0; i < b1; ++i)
        std::copy(base + idx[static_cast<size_t>(i)] * elems, base + (idx[static_cast<size_t>(i)] + 1) * elems,
                  out.data.data() + static_cast<int64_t>(i - b0) * elems);
    return out;
}

// MSE between pred and target; for 3-channel flow fields the pressure channel
// gets its own MSE scaled by `pressure_weight` on top of the velocity MSE.
template <class T>
typename Tape<T>::Id field_loss(Tape<T>& tape, typename Tape<T>::Id pred, typename Tape<T>::Id target,
                                double pressure_weight) {
    const Tensor<T>& p = tape.val(pred);
    if (p.rank() == 4 && p.dim(1) == 3) {
        auto dv = sub(tape, slice_channels(tape, pred, 0, 2), slice_channels(tape, target, 0, 2));
        auto dp = sub(tape, slice_channels(tape, pred, 2, 3), slice_channels(tape, target, 2, 3));
        auto mse_v = mean_all(tape, mul(tape, dv, dv));
        auto mse_p = mean_all(tape, mul(tape, dp, dp));
        return add(tape, mse_v, scale(tape, mse_p, pressure_weight));
    }
    auto d = sub(tape, pred, target);
    return mean_all(tape, mul(tape, d, d));
}

}  // namespace detail

// Shared minibatch training loop for both models.  `Model` provides bind(),
// forward() and params().
template <class Model>
TrainResult train_model(Model& model, const TrainData& data, const TrainConfig& cfg,
                        const std::function<void(const EpochRow&)>& on_epoch = nullptr) {
    if (data.train_count <= 0) throw EmptyDataset("no training samples");
    if (data.test_count <= 0) throw EmptyTestSet("no test samples");
    if (cfg.batch_size < 1) throw ShapeMismatch("batch size must be >= 1");

    const int64_t in_elems = shape_numel(data.in_shape);
    const int64_t tgt_elems = shape_numel(data.tgt_shape);
    (void)in_elems;
    (void)tgt_elems;

    Adam<float> adam(model.params());
    PlateauSchedule sched(cfg.lr, cfg.lr_final, cfg.plateau_patience, cfg.plateau_rel);
    double lr = cfg.lr;

    std::vector<int> train_idx(static_cast<size_t>(data.train_count));
    std::iota(train_idx.begin(), train_idx.end(), 0);
    std::vector<int> test_idx(static_cast<size_t>(data.test_count));
    std::iota(test_idx.begin(), test_idx.end(), data.train_count);

    auto eval_batches = [&](const std::vector<int>& idx, bool train_pass, double cur_lr) {
        double loss_sum = 0.0;
        for (size_t b0 = 0; b0 < idx.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
            const size_t b1 = std::min(idx.size(), b0 + static_cast<size_t>(cfg.batch_size));
            Tape<float> tape;
            auto bind = model.bind(tape, train_pass);
            auto in = tape.leaf(detail::gather_batch(data.in, data.in_shape, idx, static_cast<int>(b0),
                                                     static_cast<int>(b1)));
            auto tgt = tape.leaf(detail::gather_batch(data.tgt, data.tgt_shape, idx, static_cast<int>(b0),
                                                      static_cast<int>(b1)));
            auto pred = model.forward(tape, bind, in);
            auto loss = detail::field_loss(tape, pred, tgt, cfg.pressure_weight);
            const double lv = static_cast<double>(tape.val(loss)[0]);
            if (!std::isfinite(lv)) throw NonFiniteLoss("loss became non-finite");
            loss_sum += lv * static_cast<double>(b1 - b0);
            if (train_pass) {
                tape.backward(loss);
                std::vector<Tensor<float>> grads;
                grads.reserve(bind.ids.size());
                for (auto id : bind.ids) grads.push_back(tape.grad(id));
                adam.update(model.params(), grads, cur_lr);
            }
        }
        return loss_sum / static_cast<double>(idx.size());
    };

    TrainResult res;
    res.best_test_loss = std::numeric_limits<double>::infinity();
    Rng shuffle_rng(cfg.seed);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (size_t i = train_idx.size(); i > 1; --i)
            std::swap(train_idx[i - 1], train_idx[static_cast<size_t>(shuffle_rng.below(i))]);
        const double train_loss = eval_batches(train_idx, true, lr);
        const double test_loss = eval_batches(test_idx, false, lr);
        res.best_test_loss = std::min(res.best_test_loss, test_loss);
        EpochRow row{epoch, train_loss, test_loss, lr};
        res.history.push_back(row);
        if (on_epoch) on_epoch(row);
        if (cfg.plateau) {
            lr = sched.observe(test_loss);
            if (sched.should_stop()) break;
        }
    }
    res.steps = adam.step_count();
    return res;
}

inline std::string history_csv(const std::vector<EpochRow>& rows) {
    std::string s = "epoch,train_loss,test_loss,lr\n";
    for (const auto& r : rows)
        s += std::to_string(r.epoch) + "," + fmt_g9(r.train_loss) + "," + fmt_g9(r.test_loss) + "," + fmt_g9(r.lr) +
             "\n";
    return s;
}

}  // namespace ndo
