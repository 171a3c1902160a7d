#include "cola/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cola/ops.hpp"

namespace cola::linalg {

namespace {

// Orthogonalizes the columns of w (m x n, m >= n) in place, accumulating the
// rotations in v (n x n).
void hestenes(Tensor& w, Tensor& v) {
    const std::size_t m = w.rows(), n = w.cols();
    // Work on the transpose so columns are contiguous rows.
    Tensor wt = ops::transpose(w);
    Tensor vt = Tensor::identity(n);
    const double tol = 2.2e-16 * static_cast<double>(std::max<std::size_t>(m, 8));
    for (int sweep = 0; sweep < 80; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            double* cp = wt.ptr() + p * m;
            for (std::size_t q = p + 1; q < n; ++q) {
                double* cq = wt.ptr() + q * m;
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += cp[i] * cp[i];
                    beta += cq[i] * cq[i];
                    gamma += cp[i] * cq[i];
                }
                if (gamma == 0.0) continue;
                const double scale = std::sqrt(alpha * beta);
                if (scale == 0.0) continue;
                const double rel = std::abs(gamma) / scale;
                off = std::max(off, rel);
                if (rel < tol) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double a = cp[i], b = cq[i];
                    cp[i] = c * a - s * b;
                    cq[i] = s * a + c * b;
                }
                double* vp = vt.ptr() + p * n;
                double* vq = vt.ptr() + q * n;
                for (std::size_t i = 0; i < n; ++i) {
                    const double a = vp[i], b = vq[i];
                    vp[i] = c * a - s * b;
                    vq[i] = s * a + c * b;
                }
            }
        }
        if (off < tol) break;
    }
    w = ops::transpose(wt);
    v = ops::transpose(vt);
}

Svd svd_tall(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor w = a;
    Tensor v;
    hestenes(w, v);
    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += w(i, j) * w(i, j);
        norms[j] = std::sqrt(acc);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });
    Svd f{Tensor({m, n}), std::vector<double>(n), Tensor({n, n})};
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        f.s[k] = norms[j];
        if (norms[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) f.u(i, k) = w(i, j) / norms[j];
        }
        for (std::size_t i = 0; i < n; ++i) f.vt(k, i) = v(i, j);
    }
    return f;
}

}  // namespace

Svd svd(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("svd: expected a matrix, got " + shape_str(a.shape()));
    if (a.rows() >= a.cols()) return svd_tall(a);
    Svd t = svd_tall(transpose(a));
    return Svd{transpose(t.vt), std::move(t.s), transpose(t.u)};
}

std::vector<double> singular_values(const Tensor& a) { return svd(a).s; }

Tensor matmul(const Tensor& a, const Tensor& b) { return ops::gemm(a, b); }

Tensor transpose(const Tensor& a) { return ops::transpose(a); }

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor scaled(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

double frobenius(const Tensor& a) { return std::sqrt(dot(a, a)); }

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ShapeError("dot: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

std::size_t numerical_rank(const Tensor& a, double rel_tol) {
    const auto s = singular_values(a);
    if (s.empty() || s[0] == 0.0) return 0;
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [&](double v) { return v > rel_tol * s[0]; }));
}

Tensor row_space_projector(const Tensor& x, double rel_tol) {
    const Svd f = svd(x);
    const std::size_t n = x.cols();
    Tensor p({n, n});
    if (f.s.empty() || f.s[0] == 0.0) return p;
    for (std::size_t k = 0; k < f.s.size(); ++k) {
        if (f.s[k] <= rel_tol * f.s[0]) break;
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = f.vt(k, i);
            for (std::size_t j = 0; j < n; ++j) p(i, j) += vi * f.vt(k, j);
        }
    }
    return p;
}

Tensor null_space(const Tensor& x, double rel_tol) {
    const std::size_t n = x.cols();
    const Tensor comp = sub(Tensor::identity(n), row_space_projector(x, rel_tol));
    const Svd f = svd(comp);
    std::size_t dim = 0;
    while (dim < f.s.size() && f.s[dim] > 0.5) ++dim;
    Tensor basis({n, dim});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < dim; ++k) basis(i, k) = f.u(i, k);
    return basis;
}

Tensor pinv(const Tensor& a, double rel_tol) {
    const Svd f = svd(a);
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out({n, m});
    if (f.s.empty() || f.s[0] == 0.0) return out;
    for (std::size_t k = 0; k < f.s.size(); ++k) {
        if (f.s[k] <= rel_tol * f.s[0]) break;
        const double inv = 1.0 / f.s[k];
        for (std::size_t i = 0; i < n; ++i) {
            const double vi = f.vt(k, i) * inv;
            for (std::size_t j = 0; j < m; ++j) out(i, j) += vi * f.u(j, k);
        }
    }
    return out;
}

Tensor truncate(const Svd& f, std::size_t k) {
    const std::size_t m = f.u.rows(), n = f.vt.cols();
    Tensor out({m, n});
    k = std::min(k, f.s.size());
    for (std::size_t t = 0; t < k; ++t)
        for (std::size_t i = 0; i < m; ++i) {
            const double ui = f.u(i, t) * f.s[t];
            for (std::size_t j = 0; j < n; ++j) out(i, j) += ui * f.vt(t, j);
        }
    return out;
}

}  // namespace cola::linalg
