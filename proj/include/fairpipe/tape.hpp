#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fairpipe/param_store.hpp"
#include "fairpipe/rng.hpp"
#include "fairpipe/tensor.hpp"

namespace fairpipe {

using NodeId = int;

// Reverse-mode tape for one forward/backward pass. Every primitive records
// a node; backward() runs a single reverse sweep in reverse recording order
// (recording order is already topological), flushes parameter gradients into
// their bound ParamStore, and retires the tape. Leaf gradients stay readable
// afterward, which is what integrated-gradients needs.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    NodeId input(Tensor value);
    NodeId param(ParamStore& store, const std::string& name);

    // Primitives.
    NodeId affine(NodeId x, NodeId w, NodeId b);  // x.W + b, row-wise bias
    NodeId sigmoid(NodeId x);
    NodeId softmax(NodeId x);  // row-wise, max-subtracted
    NodeId concat(NodeId a, NodeId b);  // along columns
    NodeId mean_rows(NodeId m, std::vector<std::uint8_t> row_mask);
    NodeId dropout(NodeId x, double rate, Rng& rng, bool train_flag);  // inverted scaling
    NodeId rmse_loss(NodeId pred, NodeId target);
    NodeId cross_entropy(NodeId probs, std::vector<int> labels);  // mean over rows
    NodeId neg_entropy(NodeId probs);  // mean over rows of sum_c p ln p (= -H)
    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // elementwise
    NodeId scale(NodeId a, double factor);

    // Computes d(loss)/d(node) for every node, accumulates parameter
    // gradients into their stores, and retires the tape.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;  // valid only after backward

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, NodeId)> backprop;
        ParamStore* bound_store = nullptr;
        std::string bound_name;
    };

    NodeId push(Tensor value, std::function<void(Tape&, NodeId)> backprop);
    const Node& node(NodeId id) const;
    Tensor& grad_ref(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }
    void require_open(const char* op) const;
    void check_id(NodeId id, const char* op) const;

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace fairpipe
