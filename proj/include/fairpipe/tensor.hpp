#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fairpipe {

// Dense row-major tensor of doubles. Rank 1 ({n}) or rank 2 ({rows, cols});
// rank-1 tensors act as a single row where a matrix is expected.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from_vector(std::vector<double> values);  // shape {n}

    std::size_t numel() const;
    std::size_t rows() const;  // 1 for rank-1
    std::size_t cols() const;  // n for rank-1

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    std::string shape_str() const;

    // Reinterprets the flat data under a new shape with equal element count.
    Tensor reshaped(std::vector<std::size_t> new_shape) const;
};

// Throws NumericError naming `what` if any element is non-finite.
void check_finite(const Tensor& t, const char* what);

// Throws ShapeError unless the two shapes match.
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace fairpipe
