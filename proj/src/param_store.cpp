#include "fairpipe/param_store.hpp"

#include <cmath>

#include "fairpipe/errors.hpp"

namespace fairpipe {

void ParamStore::add(const std::string& name, Tensor value) {
    if (entries_.count(name) != 0) {
        throw ConfigError("parameter '" + name + "' already exists");
    }
    Entry e;
    e.grad = Tensor::zeros(value.shape);
    e.m = Tensor::zeros(value.shape);
    e.v = Tensor::zeros(value.shape);
    e.value = std::move(value);
    entries_.emplace(name, std::move(e));
}

Tensor& ParamStore::value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
    return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
    return it->second.value;
}

Tensor& ParamStore::grad(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
    return it->second.grad;
}

const Tensor& ParamStore::grad(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
    return it->second.grad;
}

void ParamStore::zero_grads() {
    for (auto& [name, e] : entries_) {
        std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    }
}

void ParamStore::step_adamw(const AdamWConfig& cfg) {
    if (cfg.lr <= 0.0) throw ConfigError("adamw: learning rate must be positive");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
        throw ConfigError("adamw: betas must lie in [0, 1)");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, e] : entries_) {
        const std::size_t n = e.value.numel();
        for (std::size_t i = 0; i < n; ++i) {
            const double g = e.grad.data[i];
            e.m.data[i] = cfg.beta1 * e.m.data[i] + (1.0 - cfg.beta1) * g;
            e.v.data[i] = cfg.beta2 * e.v.data[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = e.m.data[i] / bc1;
            const double v_hat = e.v.data[i] / bc2;
            e.value.data[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) +
                                         cfg.weight_decay * e.value.data[i]);
        }
        std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    }
}

}  // namespace fairpipe
