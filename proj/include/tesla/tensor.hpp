#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tesla {

// Row-major dense tensor, up to 3 axes, double precision.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        if (shape.empty() || shape.size() > 3) throw std::invalid_argument("Tensor: 1-3 axes");
        data.assign(numel(), 0.0);
    }

    size_t numel() const {
        size_t n = 1;
        for (int d : shape) {
            if (d < 1) throw std::invalid_argument("Tensor: non-positive axis");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

using ParamTable = std::map<std::string, Tensor>;

// C (m x n) = alpha * op(A) * op(B) + beta * C, row-major, tight leading dims.
void dgemm_rm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
              const double* b, double beta, double* c);

// Same with explicit leading dimensions, for column-block views.
void dgemm_ld(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
              int lda, const double* b, int ldb, double beta, double* c, int ldc);

// Pin BLAS to one thread; determinism and outer-loop control live with us.
void init_blas();

}  // namespace tesla
