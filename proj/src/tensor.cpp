#include "fairpipe/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (const std::size_t d : shape) n *= d;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape.empty() || shape.size() > 2) {
        throw ShapeError("tensor rank must be 1 or 2, got rank " + std::to_string(shape.size()));
    }
    if (shape_product(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str());
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::size_t Tensor::numel() const { return data.size(); }

std::size_t Tensor::rows() const { return shape.size() == 2 ? shape[0] : 1; }

std::size_t Tensor::cols() const { return shape.size() == 2 ? shape[1] : shape[0]; }

bool Tensor::all_finite() const {
    for (const double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "}";
    return os.str();
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
    if (shape_product(new_shape) != data.size()) {
        throw ShapeError("cannot reshape " + shape_str() + " to incompatible shape");
    }
    return Tensor(std::move(new_shape), data);
}

void check_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) {
        throw NumericError(std::string(what) + ": non-finite value in tensor " + t.shape_str());
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

}  // namespace fairpipe
