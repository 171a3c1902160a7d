#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cola {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Raised when operand extents do not agree.
class ShapeError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

// Dense row-major array of doubles. Rank-2 tensors are the common case; a
// scalar is stored as 1x1.
class Tensor {
 public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor matrix(std::size_t rows, std::size_t cols,
                         std::initializer_list<double> values);
    static Tensor identity(std::size_t n);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Rank-2 accessors; throw ShapeError on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double item() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }

    void fill(double value);
    void release();  // drop storage, keep shape

    // Bitwise comparison of shape and payload (distinguishes -0.0 and NaN bits).
    bool bitwise_equal(const Tensor& other) const;

 private:
    Shape shape_;
    std::vector<double> data_;
};

// Trainable leaf: value plus accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool decay = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool wd = true)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(wd) {}

    void zero_grad() { grad = Tensor(value.shape()); }
};

}  // namespace cola
