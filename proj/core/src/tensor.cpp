#include "vdc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vdc {

std::size_t shape_product(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    for (std::size_t e : shape_) {
        if (e == 0) throw ShapeError("tensor extents must be positive");
    }
    data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    for (std::size_t e : shape_) {
        if (e == 0) throw ShapeError("tensor extents must be positive");
    }
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " +
                         std::to_string(shape_product(shape_)));
    }
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged row list");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    require_rank(*this, 2, "rows()");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    require_rank(*this, 2, "cols()");
    return shape_[1];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_product(shape) != data_.size()) {
        throw ShapeError("reshape changes element count");
    }
    return Tensor(std::move(shape), data_);
}

void Tensor::set_axes(std::vector<Axis> axes) {
    if (!axes.empty() && axes.size() != shape_.size()) {
        throw ShapeError("axis label count does not match rank");
    }
    axes_ = std::move(axes);
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul inner dimensions disagree: " + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = pa[i * k + l];
            if (av == 0.0) continue;
            const double* brow = pb + l * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor diag_matrix(std::span<const double> d) {
    Tensor out({d.size(), d.size()});
    for (std::size_t i = 0; i < d.size(); ++i) out(i, i) = d[i];
    return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("elementwise add on mismatched shapes");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("elementwise subtract on mismatched shapes");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

Tensor& operator+=(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("elementwise add on mismatched shapes");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
    return a;
}

double frobenius_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::fabs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff on mismatched shapes");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

bool all_finite(const Tensor& a) {
    for (double v : a.data())
        if (!std::isfinite(v)) return false;
    return true;
}

void require_finite(const Tensor& a, const char* what) {
    if (!all_finite(a)) throw DomainError(std::string(what) + ": non-finite entries");
}

void require_rank(const Tensor& a, std::size_t rank, const char* what) {
    if (a.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got " + std::to_string(a.rank()));
    }
}

}  // namespace vdc
