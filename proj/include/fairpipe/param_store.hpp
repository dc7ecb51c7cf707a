#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fairpipe/tensor.hpp"

namespace fairpipe {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Named trainable parameters with gradient accumulators and AdamW moments.
// Iteration order is the lexicographic name order, which keeps every
// serialization and update loop deterministic.
class ParamStore {
public:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor m;
        Tensor v;
    };

    void add(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);
    const Tensor& grad(const std::string& name) const;

    void zero_grads();

    // Decoupled-weight-decay AdamW with bias-corrected moments. Increments
    // the shared step counter and zeroes gradients afterward.
    void step_adamw(const AdamWConfig& cfg);

    std::int64_t step_count() const { return step_; }
    std::size_t size() const { return entries_.size(); }

    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::map<std::string, Entry>& entries() { return entries_; }

private:
    std::map<std::string, Entry> entries_;
    std::int64_t step_ = 0;
};

}  // namespace fairpipe
