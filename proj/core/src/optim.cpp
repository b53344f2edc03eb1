#include "songgen/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace songgen {

Param& ParameterStore::create(std::string name, Tensor init) {
    if (find(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
    params_.push_back(std::make_unique<Param>(std::move(name), std::move(init)));
    return *params_.back();
}

Param* ParameterStore::find(std::string_view name) noexcept {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

const Param* ParameterStore::find(std::string_view name) const noexcept {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

std::size_t ParameterStore::scalar_count() const noexcept {
    std::size_t n = 0;
    for (auto& p : params_) n += p->value.size();
    return n;
}

void ParameterStore::zero_grads() {
    for (auto& p : params_) p->grad.fill(0.0);
}

double ParameterStore::grad_norm() const {
    double sq = 0.0;
    for (auto& p : params_)
        for (std::size_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
    return std::sqrt(sq);
}

double ParameterStore::clip_grad_norm(double max_norm) {
    double norm = grad_norm();
    if (norm > max_norm && norm > 0.0) {
        double factor = max_norm / norm;
        for (auto& p : params_)
            for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= factor;
    }
    return norm;
}

Adam::Adam(ParameterStore& store, AdamConfig config) : store_(&store), config_(config) {}

void Adam::step() {
    auto& params = store_->params();
    // Parameters may be registered after construction; moments are appended lazily.
    while (m_.size() < params.size()) {
        auto& p = *params[m_.size()];
        m_.emplace_back(p.value.rows(), p.value.cols());
        v_.emplace_back(p.value.rows(), p.value.cols());
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Param& p = *params[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in parameter '" + p.name + "'");
            m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g;
            v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g * g;
            const double mhat = m_[k][i] / bc1;
            const double vhat = v_[k][i] / bc2;
            p.value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

}  // namespace songgen
