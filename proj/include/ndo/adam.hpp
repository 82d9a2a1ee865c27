#pragma once

#include <cmath>
#include <vector>

#include "ndo/nn.hpp"

namespace ndo {

// Adam with bias correction.  Moment buffers mirror the parameter set they
// were initialised from; the learning rate may change between steps (plateau
// schedule), the decay rates may not.
template <class T>
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit Adam(const ParamSet<T>& params) {
        for (int i = 0; i < params.count(); ++i) {
            m_.push_back(Tensor<T>::zeros(params.tensor(i).shape));
            v_.push_back(Tensor<T>::zeros(params.tensor(i).shape));
        }
    }

    int64_t step_count() const { return step_; }

    void update(ParamSet<T>& params, const std::vector<Tensor<T>>& grads, double lr) {
        if (static_cast<size_t>(params.count()) != grads.size() || grads.size() != m_.size())
            throw ShapeMismatch("adam: parameter/gradient count mismatch");
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (size_t i = 0; i < grads.size(); ++i) {
            Tensor<T>& p = params.tensor(static_cast<int>(i));
            const Tensor<T>& g = grads[i];
            if (!p.same_shape(g)) throw ShapeMismatch("adam: gradient shape mismatch for slot " + std::to_string(i));
            Tensor<T>& m = m_[i];
            Tensor<T>& v = v_[i];
            for (int64_t j = 0; j < p.numel(); ++j) {
                const double gj = static_cast<double>(g[j]);
                const double mj = beta1 * static_cast<double>(m[j]) + (1.0 - beta1) * gj;
                const double vj = beta2 * static_cast<double>(v[j]) + (1.0 - beta2) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                p[j] = static_cast<T>(static_cast<double>(p[j]) - lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
            }
        }
    }

private:
    std::vector<Tensor<T>> m_, v_;
    int64_t step_ = 0;
};

}  // namespace ndo
