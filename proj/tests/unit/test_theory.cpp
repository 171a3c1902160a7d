#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "cola/linalg.hpp"
#include "cola/theory.hpp"
#include "doctest.h"

using namespace cola;
using namespace cola::theory;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t(i, j);
    return m;
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& m) { return m.completeOrthogonalDecomposition().pseudoInverse(); }

// Best ||Y - B A X||_F by alternating least squares from random starts.
double als_oracle(const Tensor& xt, const Tensor& yt, std::size_t r, int restarts, std::uint64_t seed) {
    const Eigen::MatrixXd x = to_eigen(xt), y = to_eigen(yt), xp = pinv(x);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    double best = INFINITY;
    for (int s = 0; s < restarts; ++s) {
        Eigen::MatrixXd a(r, x.rows());
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
        Eigen::MatrixXd b;
        double prev = INFINITY;
        for (int it = 0; it < 3000; ++it) {
            b = y * pinv(a * x);
            a = pinv(b) * y * xp;
            const double err = (y - b * a * x).norm();
            if (prev - err < 1e-15) {
                prev = err;
                break;
            }
            prev = err;
        }
        best = std::min(best, prev);
    }
    return best;
}

Tensor random_hypothesis_x(std::size_t d_in, std::size_t n, std::mt19937_64& rng) {
    while (true) {
        Tensor x = Tensor::randn({d_in, n}, rng);
        if (check_hypotheses(x).ok()) return x;
    }
}

}  // namespace

TEST_SUITE("theory") {

TEST_CASE("projector identities") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 10; ++t) {
        Tensor x = linalg::matmul(Tensor::randn({4, 2}, rng), Tensor::randn({2, 7}, rng));
        Tensor y = Tensor::randn({3, 7}, rng);
        const RowSplit s = split_rows(x, y);
        const Tensor perp = linalg::sub(Tensor::identity(7), s.projector);
        CHECK(linalg::frobenius(linalg::sub(linalg::add(s.projector, perp), Tensor::identity(7))) < 1e-10);
        CHECK(linalg::frobenius(linalg::sub(linalg::matmul(s.projector, s.projector), s.projector)) < 1e-10);
        const double lhs = std::pow(linalg::frobenius(y), 2);
        const double rhs = std::pow(linalg::frobenius(s.y_par), 2) + std::pow(linalg::frobenius(s.y_perp), 2);
        CHECK(std::abs(lhs - rhs) < 1e-10 * lhs);
    }
}

TEST_CASE("identity-case optimum: trivial cases") {
    std::mt19937_64 rng(2);
    Tensor x = Tensor::randn({4, 6}, rng);
    Tensor w = linalg::matmul(Tensor::randn({3, 1}, rng), Tensor::randn({1, 4}, rng));
    CHECK(e_id({x, linalg::matmul(w, x), 1}) < 1e-12);
    Tensor k = linalg::null_space(x);  // 6 x 2
    Tensor y = linalg::matmul(Tensor::randn({3, 2}, rng), linalg::transpose(k));
    CHECK(e_id({x, y, 2}) == doctest::Approx(linalg::frobenius(y)).epsilon(1e-12));
}

TEST_CASE("identity-case optimum matches the alternating least squares oracle") {
    std::mt19937_64 rng(3);
    {
        Tensor x = Tensor::randn({4, 6}, rng), y = Tensor::randn({3, 6}, rng);
        CHECK(std::abs(e_id({x, y, 1}) - als_oracle(x, y, 1, 50, 11)) < 1e-6);
    }
    for (int t = 0; t < 20; ++t) {
        const std::size_t d_in = 1 + rng() % 6, d_out = 1 + rng() % 6, n = 2 + rng() % 7;
        const std::size_t r = 1 + rng() % std::min<std::size_t>(3, std::min(d_in, d_out));
        Tensor x = Tensor::randn({d_in, n}, rng), y = Tensor::randn({d_out, n}, rng);
        CAPTURE(t);
        CHECK(std::abs(e_id({x, y, r}) - als_oracle(x, y, r, 50, 100 + t)) < 1e-6);
        const Factors f = e_id_factors({x, y, r});
        CHECK(std::abs(objective({x, y, r}, f.a, f.b) - e_id({x, y, r})) < 1e-9);
    }
}

TEST_CASE("nonlinear upper bound") {
    std::mt19937_64 rng(4);
    Tensor x = Tensor::randn({3, 7}, rng), y = Tensor::randn({4, 7}, rng);
    const double eid = e_id({x, y, 2});
    CHECK(std::abs(e_sigma_upper({x, y, 2, ActivationKind::Identity}).value - eid) < 1e-6);
    const Fit t = e_sigma_upper({x, y, 2, ActivationKind::Tanh});
    CHECK(t.value <= eid + 1e-6);
    CHECK(t.discarded == 0);

    Tensor a0 = Tensor::randn({2, 3}, rng), b0 = Tensor::randn({4, 2}, rng);
    Tensor h = linalg::matmul(a0, x);
    for (double& v : h.data()) v = activate(ActivationKind::Tanh, v);
    const Tensor planted = linalg::matmul(b0, h);
    CHECK(e_sigma_upper({x, planted, 2, ActivationKind::Tanh}).value <= 1e-6);
}

TEST_CASE("nonlinear never loses to identity on random instances") {
    std::mt19937_64 rng(5);
    for (auto sigma : {ActivationKind::Tanh, ActivationKind::SiLU}) {
        for (int t = 0; t < 10; ++t) {
            const std::size_t d_in = 2 + rng() % 4, d_out = 2 + rng() % 4, n = 3 + rng() % 5;
            Problem p{Tensor::randn({d_in, n}, rng), Tensor::randn({d_out, n}, rng), 1 + rng() % 2, sigma};
            FitOptions fo;
            fo.seed = std::uint64_t(t);
            CHECK(e_sigma_upper(p, fo).value <= e_id(p) + 1e-6);
        }
    }
}

TEST_CASE("activation jets at zero") {
    const ZeroJet s = zero_jet(ActivationKind::SiLU);
    CHECK(s.value == 0.0);
    CHECK(s.d1 == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(s.d2 == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(std::abs(zero_jet(ActivationKind::Tanh).d2) < 1e-12);
    CHECK(zero_jet(ActivationKind::GELU).d2 == doctest::Approx(0.7978845608028654).epsilon(1e-5));
}

TEST_CASE("outside feature: worked example and preconditions") {
    const Tensor x = Tensor::matrix(2, 3, {1, 0, 1, 0, 1, 1});
    for (auto sigma : {ActivationKind::SiLU, ActivationKind::GELU}) {
        const OutsideFeature f = find_outside_feature(x, sigma);
        CHECK(f.residual > 1e-6);
        CHECK(std::abs(f.g) > 0.0);
        CHECK(linalg::frobenius(linalg::matmul(x, f.w)) < 1e-10);
    }
    // tanh''(0) = 0 fails the curvature precondition
    CHECK_THROWS_AS(find_outside_feature(x, ActivationKind::Tanh), PreconditionError);
    CHECK_THROWS_AS(find_outside_feature(x, ActivationKind::Identity), PreconditionError);
    CHECK_THROWS_AS(find_outside_feature(Tensor::matrix(2, 3, {1, 1, 0, 2, 2, 1}), ActivationKind::SiLU),
                    PreconditionError);
    CHECK_THROWS_AS(find_outside_feature(Tensor::matrix(2, 3, {1, 0, 1, 0, 0, 1}), ActivationKind::SiLU),
                    PreconditionError);
    CHECK_THROWS_AS(find_outside_feature(Tensor::matrix(2, 2, {1, 0, 0, 1}), ActivationKind::SiLU),
                    PreconditionError);
}

TEST_CASE("outside feature on random instances") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
        const std::size_t d_in = 1 + rng() % 5;
        const Tensor x = random_hypothesis_x(d_in, d_in + 2, rng);
        CHECK(find_outside_feature(x, t % 2 ? ActivationKind::GELU : ActivationKind::SiLU, t).residual > 1e-6);
    }
}

TEST_CASE("strict improvement: extreme case") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 20; ++t) {
        const std::size_t d_in = 2 + rng() % 4;
        const Tensor x = random_hypothesis_x(d_in, d_in + 2, rng);
        const Certificate c = strict_improvement_extreme(x, ActivationKind::SiLU, 1 + t % 2, 3, t);
        CAPTURE(c.render());
        CHECK(c.verdict == Verdict::Pass);
        CHECK(c.get("E_sigma_upper") <= 1e-9);
        CHECK(c.get("E_id") > 1e-3);
        CHECK(c.get("condition_lhs") < c.get("condition_rhs"));
    }
}

TEST_CASE("strict improvement: targets inside and near the row space") {
    std::mt19937_64 rng(8);
    const Tensor x = random_hypothesis_x(3, 5, rng);
    const OutsideFeature f = find_outside_feature(x, ActivationKind::SiLU, 1);
    const Tensor wx = linalg::matmul(Tensor::randn({4, 3}, rng), x);

    const Certificate inside = strict_improvement_certificate(x, wx, 1, ActivationKind::SiLU, f, 1e-9);
    CHECK(std::isfinite(inside.get("condition_lhs")));
    CHECK(std::isfinite(inside.get("condition_rhs")));
    if (inside.get("condition_lhs") >= inside.get("condition_rhs")) CHECK(inside.verdict == Verdict::Diagnostic);

    const Tensor w = Tensor::randn({4, 1}, rng);
    const Tensor mixed = linalg::add(linalg::matmul(w, f.v), linalg::scaled(wx, 1e-3));
    const Certificate c = strict_improvement_certificate(x, mixed, 1, ActivationKind::SiLU, f, 1e-9);
    CHECK(c.get("condition_lhs") < c.get("condition_rhs"));
    CHECK(c.verdict == Verdict::Pass);
    CHECK(c.render().find("verdict=pass") != std::string::npos);
}

TEST_CASE("recovery bound diagnostics") {
    RecoveryOptions o;
    o.seed = 9;
    const RecoveryResult clean = recovery_diagnostic(o);
    CHECK(clean.certificate.verdict == Verdict::Pass);
    CHECK(clean.delta <= 1e-4);
    CHECK(clean.e_sigma <= 1e-6);

    double prev = -1.0;
    for (double v : {0.0, 0.01, 0.03, 0.1, 0.3}) {
        o.v_noise = v;
        const RecoveryResult res = recovery_diagnostic(o);
        CHECK(res.bound >= prev);
        prev = res.bound;
        // alpha = 1: s_{r_1 + 1} and s_{> r_1} vanish
        const double reduced = std::sqrt(double(o.r + res.rank_y)) *
                                   (2.0 * v * std::sqrt(double(o.n + o.d_out)) + res.certificate.get("epsilon")) +
                               res.e_sigma;
        CHECK(res.bound == doctest::Approx(reduced).epsilon(1e-12));
        if (v > 0) CHECK(res.certificate.verdict == Verdict::Diagnostic);
    }
}

TEST_CASE("concentrated spectrum: bound comparison against the constant") {
    RecoveryOptions o;
    o.d_in = 6;
    o.d_out = 20;
    o.n = 30;
    o.r = 2;
    o.v_noise = 0.01;
    o.seed = 10;
    o.alpha = 0.95;
    const RecoveryResult a = recovery_diagnostic(o);
    o.alpha = 1.0;
    const RecoveryResult full = recovery_diagnostic(o);
    CHECK(a.r_alpha == 2);
    CHECK(full.rank_y == 20);
    // both bounds are affine in C; alpha = 0.95 has the smaller slope
    auto gap = [&](double c) { return a.certificate.get("bound_C=" + std::to_string(int(c))) -
                                      full.certificate.get("bound_C=" + std::to_string(int(c))); };
    const double slope = (gap(4) - gap(1)) / 3.0;
    CHECK(slope < 0.0);
    const double c_star = 1.0 - gap(1) / slope;
    MESSAGE("alpha = 0.95 bound is tighter for C > " << c_star);
    CHECK(c_star > 0.0);
    CHECK(gap(4) < 0.0);
    CHECK(doctest::Approx(gap(2)) == gap(1) + slope);
}

}
