#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace songgen {

// Dense row-major matrix of doubles. Row vectors are 1xN, scalars 1x1.
// All model math is 64-bit; there is no broadcasting.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols);
    Tensor(int rows, int cols, std::vector<double> values);

    static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
    static Tensor full(int rows, int cols, double value);
    static Tensor scalar(double value) { return Tensor(1, 1, {value}); }
    static Tensor row(std::vector<double> values);

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool same_shape(const Tensor& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

    double& at(int r, int c) noexcept { return values_[idx(r, c)]; }
    double at(int r, int c) const noexcept { return values_[idx(r, c)]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }
    std::span<const double> row_span(int r) const {
        return {values_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
    }

    // Value of a 1x1 tensor; throws otherwise.
    double item() const;

    bool all_finite() const noexcept;
    void fill(double value);
    bool operator==(const Tensor& other) const = default;

private:
    std::size_t idx(int r, int c) const noexcept {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> values_;
};

// Forward kernels shared by the autodiff graph and graph-free inference.
// Shape mismatches throw std::invalid_argument naming both shapes.
namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
// Row-wise softmax; every output row sums to 1.
Tensor softmax(const Tensor& a);
// -log softmax(logits)[target] for a 1xK logits row.
double cross_entropy(const Tensor& logits, int target);
Tensor concat_rows(std::span<const Tensor* const> parts);
Tensor concat_cols(std::span<const Tensor* const> parts);
Tensor select_row(const Tensor& m, int row);
double sum(const Tensor& a);

}  // namespace ops

}  // namespace songgen
