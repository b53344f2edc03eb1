#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "songgen/optim.hpp"
#include "songgen/tensor.hpp"

namespace songgen {

class Graph;

// Handle to a node in a Graph. Invalidated by Graph::clear().
class Value {
public:
    Value() = default;
    bool valid() const noexcept { return graph_ != nullptr; }
    const Tensor& tensor() const;
    int rows() const { return tensor().rows(); }
    int cols() const { return tensor().cols(); }
    double item() const { return tensor().item(); }

private:
    friend class Graph;
    Value(Graph* graph, int index) : graph_(graph), index_(index) {}
    Graph* graph_ = nullptr;
    int index_ = -1;
};

// Dynamic reverse-mode tape. Build the forward pass with the factory methods,
// then call backward() once on a scalar node; gradients of leaves created via
// param() accumulate into the owning Param::grad.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Value constant(Tensor t);
    Value param(Param& p);  // repeated calls with the same Param return the same node

    Value matmul(Value a, Value b);
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value scale(Value a, double factor);
    Value sigmoid(Value a);
    Value tanh(Value a);
    Value softmax(Value a);                       // row-wise
    Value cross_entropy(Value logits, int target);  // 1xK logits -> 1x1 loss
    Value concat_rows(std::span<const Value> parts);
    Value concat_cols(std::span<const Value> parts);
    Value select_row(Value m, int row);
    Value sum(Value a);                           // 1x1
    Value add_n(std::span<const Value> parts);    // elementwise sum of same-shape values

    void backward(Value loss);
    const Tensor& grad(Value v) const;  // valid after backward()

    void clear();
    std::size_t node_count() const noexcept { return nodes_.size(); }

private:
    friend class Value;

    enum class Op : std::uint8_t {
        constant,
        param,
        matmul,
        add,
        sub,
        mul,
        scale,
        sigmoid,
        tanh,
        softmax,
        cross_entropy,
        concat_rows,
        concat_cols,
        select_row,
        sum,
        add_n,
    };

    struct Node {
        Op op;
        Tensor value;
        Tensor grad;
        std::vector<int> inputs;
        double factor = 0.0;  // scale
        int index = -1;       // cross_entropy target / select_row row
        Param* leaf = nullptr;
    };

    Value push(Op op, Tensor value, std::vector<int> inputs, double factor = 0.0, int index = -1,
               Param* leaf = nullptr);
    const Node& node_of(Value v) const;
    void check_owned(Value v) const;
    void backprop_node(int i);

    std::vector<Node> nodes_;
    std::unordered_map<Param*, int> param_nodes_;
    bool backward_done_ = false;
};

}  // namespace songgen
