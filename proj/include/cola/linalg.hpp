#pragma once

#include <vector>

#include "cola/tensor.hpp"

// Plain (untracked) dense matrix helpers on rank-2 Tensors.
namespace cola::linalg {

struct Svd {
    Tensor u;              // m x k
    std::vector<double> s;  // k, descending
    Tensor vt;             // k x n
};

// Thin SVD, k = min(m, n), by one-sided Jacobi rotations.
Svd svd(const Tensor& a);
std::vector<double> singular_values(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double s);
double frobenius(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);

// Count of singular values above rel_tol * s_1.
std::size_t numerical_rank(const Tensor& a, double rel_tol = 1e-10);
// Orthogonal projector (n x n) onto the row space of an m x n matrix.
Tensor row_space_projector(const Tensor& x, double rel_tol = 1e-10);
// Orthonormal basis of ker(x) as columns, n x (n - rank).
Tensor null_space(const Tensor& x, double rel_tol = 1e-10);
Tensor pinv(const Tensor& a, double rel_tol = 1e-12);
// Best rank-k approximation from the thin SVD.
Tensor truncate(const Svd& f, std::size_t k);

}  // namespace cola::linalg
