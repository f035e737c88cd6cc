#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "vdc/errors.hpp"

namespace vdc {

/// Semantic axis labels. Purely informational; no operation dispatches on them.
enum class Axis : std::uint8_t { T, C, H, W, L, I, O, Kh, Kw };

/// Dense real array with explicit row-major layout. The universal carrier for
/// weights, activations and latents.
class Tensor {
  public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor identity(std::size_t n);
    /// 2-D convenience constructor used heavily in tests.
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    /// Rows/cols of a 2-D tensor.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    double operator()(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i) { return data_[i]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    /// Same element count, new extents.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    void set_axes(std::vector<Axis> axes);
    const std::vector<Axis>& axes() const { return axes_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::vector<Axis> axes_;  // empty or one label per axis
};

std::size_t shape_product(std::span<const std::size_t> shape);

Tensor transpose(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor diag_matrix(std::span<const double> d);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor& operator+=(Tensor& a, const Tensor& b);

double frobenius_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

bool all_finite(const Tensor& a);
void require_finite(const Tensor& a, const char* what);
void require_rank(const Tensor& a, std::size_t rank, const char* what);

}  // namespace vdc
