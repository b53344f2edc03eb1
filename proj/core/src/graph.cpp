#include "songgen/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace songgen {

namespace {

const char* op_name(int op) {
    static const char* names[] = {"constant",   "param",      "matmul",      "add",        "sub",  "mul",
                                  "scale",      "sigmoid",    "tanh",        "softmax",    "cross_entropy",
                                  "concat_rows", "concat_cols", "select_row", "sum",        "add_n"};
    return names[op];
}

}  // namespace

const Tensor& Value::tensor() const {
    if (!graph_) throw std::logic_error("use of empty Value handle");
    return graph_->node_of(*this).value;
}

const Graph::Node& Graph::node_of(Value v) const {
    check_owned(v);
    return nodes_[static_cast<std::size_t>(v.index_)];
}

void Graph::check_owned(Value v) const {
    if (v.graph_ != this || v.index_ < 0 || v.index_ >= static_cast<int>(nodes_.size()))
        throw std::logic_error("Value does not belong to this graph");
}

Value Graph::push(Op op, Tensor value, std::vector<int> inputs, double factor, int index, Param* leaf) {
    if (backward_done_)
        throw std::logic_error("graph already ran backward; clear() before building more nodes");
    if (!value.all_finite())
        throw std::runtime_error(std::string("non-finite result from op '") + op_name(static_cast<int>(op)) + "'");
    Node n{op, std::move(value), Tensor(), std::move(inputs), factor, index, leaf};
    nodes_.push_back(std::move(n));
    return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Value Graph::constant(Tensor t) {
    return push(Op::constant, std::move(t), {});
}

Value Graph::param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Value(this, it->second);
    Value v = push(Op::param, p.value, {}, 0.0, -1, &p);
    param_nodes_.emplace(&p, v.index_);
    return v;
}

Value Graph::matmul(Value a, Value b) {
    check_owned(a);
    check_owned(b);
    return push(Op::matmul, ops::matmul(a.tensor(), b.tensor()), {a.index_, b.index_});
}

Value Graph::add(Value a, Value b) {
    check_owned(a);
    check_owned(b);
    return push(Op::add, ops::add(a.tensor(), b.tensor()), {a.index_, b.index_});
}

Value Graph::sub(Value a, Value b) {
    check_owned(a);
    check_owned(b);
    return push(Op::sub, ops::sub(a.tensor(), b.tensor()), {a.index_, b.index_});
}

Value Graph::mul(Value a, Value b) {
    check_owned(a);
    check_owned(b);
    return push(Op::mul, ops::mul(a.tensor(), b.tensor()), {a.index_, b.index_});
}

Value Graph::scale(Value a, double factor) {
    check_owned(a);
    return push(Op::scale, ops::scale(a.tensor(), factor), {a.index_}, factor);
}

Value Graph::sigmoid(Value a) {
    check_owned(a);
    return push(Op::sigmoid, ops::sigmoid(a.tensor()), {a.index_});
}

Value Graph::tanh(Value a) {
    check_owned(a);
    return push(Op::tanh, ops::tanh(a.tensor()), {a.index_});
}

Value Graph::softmax(Value a) {
    check_owned(a);
    return push(Op::softmax, ops::softmax(a.tensor()), {a.index_});
}

Value Graph::cross_entropy(Value logits, int target) {
    check_owned(logits);
    double loss = ops::cross_entropy(logits.tensor(), target);
    return push(Op::cross_entropy, Tensor::scalar(loss), {logits.index_}, 0.0, target);
}

Value Graph::concat_rows(std::span<const Value> parts) {
    std::vector<const Tensor*> tensors;
    std::vector<int> inputs;
    tensors.reserve(parts.size());
    inputs.reserve(parts.size());
    for (Value v : parts) {
        check_owned(v);
        tensors.push_back(&v.tensor());
        inputs.push_back(v.index_);
    }
    return push(Op::concat_rows, ops::concat_rows(tensors), std::move(inputs));
}

Value Graph::concat_cols(std::span<const Value> parts) {
    std::vector<const Tensor*> tensors;
    std::vector<int> inputs;
    tensors.reserve(parts.size());
    inputs.reserve(parts.size());
    for (Value v : parts) {
        check_owned(v);
        tensors.push_back(&v.tensor());
        inputs.push_back(v.index_);
    }
    return push(Op::concat_cols, ops::concat_cols(tensors), std::move(inputs));
}

Value Graph::select_row(Value m, int row) {
    check_owned(m);
    return push(Op::select_row, ops::select_row(m.tensor(), row), {m.index_}, 0.0, row);
}

Value Graph::sum(Value a) {
    check_owned(a);
    return push(Op::sum, Tensor::scalar(ops::sum(a.tensor())), {a.index_});
}

Value Graph::add_n(std::span<const Value> parts) {
    if (parts.empty()) throw std::invalid_argument("add_n: no operands");
    std::vector<int> inputs;
    inputs.reserve(parts.size());
    check_owned(parts.front());
    Tensor acc = parts.front().tensor();
    inputs.push_back(parts.front().index_);
    for (std::size_t i = 1; i < parts.size(); ++i) {
        check_owned(parts[i]);
        acc = ops::add(acc, parts[i].tensor());
        inputs.push_back(parts[i].index_);
    }
    return push(Op::add_n, std::move(acc), std::move(inputs));
}

void Graph::backward(Value loss) {
    check_owned(loss);
    if (backward_done_) throw std::logic_error("backward() called twice on the same graph");
    const Node& ln = nodes_[static_cast<std::size_t>(loss.index_)];
    if (ln.value.rows() != 1 || ln.value.cols() != 1)
        throw std::invalid_argument("backward() needs a scalar loss, got " + ln.value.shape_str());
    backward_done_ = true;
    for (auto& n : nodes_) n.grad = Tensor(n.value.rows(), n.value.cols());
    nodes_[static_cast<std::size_t>(loss.index_)].grad[0] = 1.0;
    for (int i = loss.index_; i >= 0; --i) backprop_node(i);
    for (auto& [p, idx] : param_nodes_) {
        const Tensor& g = nodes_[static_cast<std::size_t>(idx)].grad;
        for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
    }
}

void Graph::backprop_node(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    const Tensor& dy = n.grad;
    auto in = [&](int k) -> Node& { return nodes_[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(k)])]; };
    switch (n.op) {
        case Op::constant:
        case Op::param:
            break;
        case Op::matmul: {
            Node& a = in(0);
            Node& b = in(1);
            const int m = a.value.rows(), k = a.value.cols(), c = b.value.cols();
            for (int r = 0; r < m; ++r)
                for (int p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (int j = 0; j < c; ++j) s += dy.at(r, j) * b.value.at(p, j);
                    a.grad.at(r, p) += s;
                }
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < c; ++j) {
                    double s = 0.0;
                    for (int r = 0; r < m; ++r) s += a.value.at(r, p) * dy.at(r, j);
                    b.grad.at(p, j) += s;
                }
            break;
        }
        case Op::add:
            for (std::size_t k = 0; k < dy.size(); ++k) {
                in(0).grad[k] += dy[k];
                in(1).grad[k] += dy[k];
            }
            break;
        case Op::sub:
            for (std::size_t k = 0; k < dy.size(); ++k) {
                in(0).grad[k] += dy[k];
                in(1).grad[k] -= dy[k];
            }
            break;
        case Op::mul:
            for (std::size_t k = 0; k < dy.size(); ++k) {
                in(0).grad[k] += dy[k] * in(1).value[k];
                in(1).grad[k] += dy[k] * in(0).value[k];
            }
            break;
        case Op::scale:
            for (std::size_t k = 0; k < dy.size(); ++k) in(0).grad[k] += dy[k] * n.factor;
            break;
        case Op::sigmoid:
            for (std::size_t k = 0; k < dy.size(); ++k) {
                const double y = n.value[k];
                in(0).grad[k] += dy[k] * y * (1.0 - y);
            }
            break;
        case Op::tanh:
            for (std::size_t k = 0; k < dy.size(); ++k) {
                const double y = n.value[k];
                in(0).grad[k] += dy[k] * (1.0 - y * y);
            }
            break;
        case Op::softmax: {
            Node& a = in(0);
            for (int r = 0; r < n.value.rows(); ++r) {
                double dot = 0.0;
                for (int c = 0; c < n.value.cols(); ++c) dot += dy.at(r, c) * n.value.at(r, c);
                for (int c = 0; c < n.value.cols(); ++c)
                    a.grad.at(r, c) += n.value.at(r, c) * (dy.at(r, c) - dot);
            }
            break;
        }
        case Op::cross_entropy: {
            Node& a = in(0);
            Tensor p = ops::softmax(a.value);
            const double dl = dy[0];
            for (int c = 0; c < p.cols(); ++c) a.grad.at(0, c) += dl * p.at(0, c);
            a.grad.at(0, n.index) -= dl;
            break;
        }
        case Op::concat_rows: {
            int row = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                Node& a = nodes_[static_cast<std::size_t>(n.inputs[k])];
                for (int r = 0; r < a.value.rows(); ++r)
                    for (int c = 0; c < a.value.cols(); ++c) a.grad.at(r, c) += dy.at(row + r, c);
                row += a.value.rows();
            }
            break;
        }
        case Op::concat_cols: {
            int col = 0;
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                Node& a = nodes_[static_cast<std::size_t>(n.inputs[k])];
                for (int r = 0; r < a.value.rows(); ++r)
                    for (int c = 0; c < a.value.cols(); ++c) a.grad.at(r, c) += dy.at(r, col + c);
                col += a.value.cols();
            }
            break;
        }
        case Op::select_row: {
            Node& a = in(0);
            for (int c = 0; c < dy.cols(); ++c) a.grad.at(n.index, c) += dy.at(0, c);
            break;
        }
        case Op::sum: {
            Node& a = in(0);
            const double dl = dy[0];
            for (std::size_t k = 0; k < a.grad.size(); ++k) a.grad[k] += dl;
            break;
        }
        case Op::add_n:
            for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                Node& a = nodes_[static_cast<std::size_t>(n.inputs[k])];
                for (std::size_t j = 0; j < dy.size(); ++j) a.grad[j] += dy[j];
            }
            break;
    }
}

const Tensor& Graph::grad(Value v) const {
    if (!backward_done_) throw std::logic_error("grad() requires backward() first");
    return node_of(v).grad;
}

void Graph::clear() {
    nodes_.clear();
    param_nodes_.clear();
    backward_done_ = false;
}

}  // namespace songgen
