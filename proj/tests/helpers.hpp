#pragma once

#include <cstddef>
#include <cstdint>

#include "vdc/rng.hpp"
#include "vdc/tensor.hpp"

namespace vdc::test {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                            double stddev = 1.0) {
    Tensor m({rows, cols});
    for (double& v : m.data()) v = rng.normal(0.0, stddev);
    return m;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, stddev);
    return t;
}

/// Random matrix of exact rank r (product of two full-rank factors).
inline Tensor random_rank_matrix(std::size_t rows, std::size_t cols, std::size_t r,
                                 Rng& rng) {
    return matmul(random_matrix(rows, r, rng), random_matrix(r, cols, rng));
}

}  // namespace vdc::test
