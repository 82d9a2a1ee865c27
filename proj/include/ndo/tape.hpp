#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "ndo/errors.hpp"
#include "ndo/tensor.hpp"

namespace ndo {

// Reverse-mode autodiff tape.  Operations append nodes during the forward
// pass; backward() walks the nodes once in reverse creation order, so each
// node's adjoint is complete before it is propagated (reverse topological
// order is guaranteed because parents always precede children).
//
// A tape is single-shot: build a graph, call backward() once, read gradients,
// then discard it.  A second backward() throws TapeConsumed.
template <class T>
class Tape {
public:
    using Id = int32_t;
    static constexpr Id kNone = -1;

    // Inserts an input node.  Gradients are tracked through a leaf only when
    // requires_grad is set (network parameters, design vectors).
    Id leaf(Tensor<T> value, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(value), {}, {}, nullptr, requires_grad, requires_grad});
        return static_cast<Id>(nodes_.size() - 1);
    }

    // Inserts an operation result.  `pull` accumulates d(loss)/d(parent) into
    // the parents' gradient buffers given d(loss)/d(this); it is dropped when
    // no parent tracks gradients, making untracked subgraphs forward-only.
    Id record(Tensor<T> value, std::vector<Id> parents, std::function<void(Tape&, Id)> pull) {
        bool needs = false;
        for (Id p : parents) {
            check(p);
            needs = needs || nodes_[static_cast<size_t>(p)].needs_grad;
        }
        nodes_.push_back(Node{std::move(value), {}, std::move(parents), needs ? std::move(pull) : nullptr, needs, false});
        return static_cast<Id>(nodes_.size() - 1);
    }

    const Tensor<T>& val(Id id) const {
        check(id);
        return nodes_[static_cast<size_t>(id)].value;
    }

    bool needs_grad(Id id) const {
        check(id);
        return nodes_[static_cast<size_t>(id)].needs_grad;
    }

    // Gradient buffer, allocated to zeros on first touch.
    Tensor<T>& grad_buf(Id id) {
        check(id);
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
        return n.grad;
    }

    bool has_grad(Id id) const {
        check(id);
        return !nodes_[static_cast<size_t>(id)].grad.data.empty();
    }

    // d(loss)/d(node).  Zero for nodes the loss does not depend on.
    const Tensor<T>& grad(Id id) { return grad_buf(id); }

    // Reverse sweep from a scalar loss node.
    void backward(Id loss) {
        if (consumed_) throw TapeConsumed("backward() called twice on the same tape");
        check(loss);
        if (nodes_[static_cast<size_t>(loss)].value.numel() != 1)
            throw NotScalar("backward() requires a scalar loss, got shape " +
                            shape_str(nodes_[static_cast<size_t>(loss)].value.shape));
        consumed_ = true;
        grad_buf(loss)[0] = T(1);
        for (Id id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.pull && !n.grad.data.empty()) {
                ++visits_;
                n.pull(*this, id);
            }
        }
        // Requested leaves untouched by the sweep still expose a zero gradient.
        for (Id id = 0; id <= loss; ++id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.is_leaf && n.needs_grad && n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
        }
    }

    size_t size() const { return nodes_.size(); }
    size_t backward_visits() const { return visits_; }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<Id> parents;
        std::function<void(Tape&, Id)> pull;
        bool needs_grad = false;
        bool is_leaf = false;
    };

    void check(Id id) const {
        if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
            throw Error("invalid tape node id " + std::to_string(id));
    }

    std::vector<Node> nodes_;
    size_t visits_ = 0;
    bool consumed_ = false;
};

}  // namespace ndo
