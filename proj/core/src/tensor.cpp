#include "songgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace songgen {

Tensor::Tensor(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("tensor shape must be non-negative");
    values_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0);
}

Tensor::Tensor(int rows, int cols, std::vector<double> values) : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw std::invalid_argument("tensor value count does not match shape " + shape_str());
}

Tensor Tensor::full(int rows, int cols, double value) {
    Tensor t(rows, cols);
    t.fill(value);
    return t;
}

Tensor Tensor::row(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor(1, n, std::move(values));
}

std::string Tensor::shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

double Tensor::item() const {
    if (rows_ != 1 || cols_ != 1) throw std::invalid_argument("item() requires a 1x1 tensor, got " + shape_str());
    return values_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) {
    std::fill(values_.begin(), values_.end(), value);
}

namespace ops {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

template <class F>
Tensor elementwise(const char* op, const Tensor& a, const Tensor& b, F f) {
    if (!a.same_shape(b)) shape_error(op, a, b);
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

template <class F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out(m, n);
    for (int i = 0; i < m; ++i) {
        double* out_row = out.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aip = a.at(i, p);
            if (aip == 0.0) continue;
            const double* b_row = b.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) out_row[j] += aip * b_row[j];
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise("add", a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise("sub", a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise("mul", a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor) {
    return map(a, [factor](double x) { return x * factor; });
}

Tensor sigmoid(const Tensor& a) {
    return map(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor tanh(const Tensor& a) {
    return map(a, [](double x) { return std::tanh(x); });
}

Tensor softmax(const Tensor& a) {
    Tensor out(a.rows(), a.cols());
    for (int r = 0; r < a.rows(); ++r) {
        double mx = a.at(r, 0);
        for (int c = 1; c < a.cols(); ++c) mx = std::max(mx, a.at(r, c));
        double total = 0.0;
        for (int c = 0; c < a.cols(); ++c) {
            double e = std::exp(a.at(r, c) - mx);
            out.at(r, c) = e;
            total += e;
        }
        for (int c = 0; c < a.cols(); ++c) out.at(r, c) /= total;
    }
    return out;
}

double cross_entropy(const Tensor& logits, int target) {
    if (logits.rows() != 1 || logits.cols() < 1)
        throw std::invalid_argument("cross_entropy: logits must be a non-empty row, got " + logits.shape_str());
    if (target < 0 || target >= logits.cols())
        throw std::invalid_argument("cross_entropy: target " + std::to_string(target) + " out of range for " +
                                    logits.shape_str());
    double mx = logits[0];
    for (int c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits.at(0, c));
    double total = 0.0;
    for (int c = 0; c < logits.cols(); ++c) total += std::exp(logits.at(0, c) - mx);
    return std::log(total) + mx - logits.at(0, target);
}

Tensor concat_rows(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
    int cols = parts.front()->cols();
    int rows = 0;
    for (const Tensor* t : parts) {
        if (t->cols() != cols) shape_error("concat_rows", *parts.front(), *t);
        rows += t->rows();
    }
    Tensor out(rows, cols);
    double* dst = out.data();
    for (const Tensor* t : parts) {
        std::copy(t->data(), t->data() + t->size(), dst);
        dst += t->size();
    }
    return out;
}

Tensor concat_cols(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
    int rows = parts.front()->rows();
    int cols = 0;
    for (const Tensor* t : parts) {
        if (t->rows() != rows) shape_error("concat_cols", *parts.front(), *t);
        cols += t->cols();
    }
    Tensor out(rows, cols);
    int offset = 0;
    for (const Tensor* t : parts) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < t->cols(); ++c) out.at(r, offset + c) = t->at(r, c);
        offset += t->cols();
    }
    return out;
}

Tensor select_row(const Tensor& m, int row) {
    if (row < 0 || row >= m.rows())
        throw std::invalid_argument("select_row: row " + std::to_string(row) + " out of range for " + m.shape_str());
    Tensor out(1, m.cols());
    std::copy(m.data() + static_cast<std::size_t>(row) * m.cols(),
              m.data() + static_cast<std::size_t>(row + 1) * m.cols(), out.data());
    return out;
}

double sum(const Tensor& a) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += a[i];
    return total;
}

}  // namespace ops

}  // namespace songgen
