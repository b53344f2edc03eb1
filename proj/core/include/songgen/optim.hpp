#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "songgen/tensor.hpp"

namespace songgen {

// Named trainable tensor. Gradients accumulate across backward passes until zeroed.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string name_, Tensor value_)
        : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}
};

// Owns parameters in creation order; addresses stay stable for the store's lifetime.
class ParameterStore {
public:
    Param& create(std::string name, Tensor init);
    Param* find(std::string_view name) noexcept;
    const Param* find(std::string_view name) const noexcept;

    const std::vector<std::unique_ptr<Param>>& params() const noexcept { return params_; }
    std::size_t tensor_count() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;

    void zero_grads();
    double grad_norm() const;
    // Scales all gradients so their global norm is at most max_norm; returns the pre-clip norm.
    double clip_grad_norm(double max_norm);

private:
    std::vector<std::unique_ptr<Param>> params_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(ParameterStore& store, AdamConfig config = {});

    void step();
    void set_lr(double lr) noexcept { config_.lr = lr; }
    double lr() const noexcept { return config_.lr; }
    std::int64_t steps_taken() const noexcept { return step_; }

private:
    ParameterStore* store_;
    AdamConfig config_;
    std::int64_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace songgen
