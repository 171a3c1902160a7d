#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cola/activation.hpp"
#include "cola/tensor.hpp"

// Numerical checks of the approximation results for Y ~ B sigma(A X).
namespace cola::theory {

// Relative threshold for numerical rank and row-space membership.
inline constexpr double kRankTol = 1e-6;

class PreconditionError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

class NotFound : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct Problem {
    Tensor x;  // d_in x n
    Tensor y;  // d_out x n
    std::size_t r = 1;
    ActivationKind sigma = ActivationKind::Identity;

    void validate() const;
};

// Y = Y_par + Y_perp with Y_par = Y P_X (rows projected onto row(X)).
struct RowSplit {
    Tensor projector;  // n x n
    Tensor y_par;
    Tensor y_perp;
};
RowSplit split_rows(const Tensor& x, const Tensor& y);

// s_{>k}(Z): root of the squared singular values past the k-th.
double tail_norm(const Tensor& z, std::size_t k);

// Closed-form optimum of ||Y - B A X||_F over rank-r factors.
double e_id(const Problem& p);

struct Factors {
    Tensor a;  // r x d_in
    Tensor b;  // d_out x r
};
// A minimiser of the identity problem: B A X is the rank-r truncation of Y_par.
Factors e_id_factors(const Problem& p);

// ||Y - B sigma(A X)||_F evaluated directly.
double objective(const Problem& p, const Tensor& a, const Tensor& b);

struct FitOptions {
    std::size_t random_restarts = 4;
    std::size_t adam_steps = 300;
    double adam_lr = 1e-2;
    std::size_t lbfgs_iterations = 2000;
    // Warm starts A = tau A_id, B = B_id / (sigma'(0) tau).
    std::vector<double> taus{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
    std::uint64_t seed = 0;
};

struct Fit {
    double value = 0.0;
    Factors factors;
    std::string start;  // which start produced the value
    std::size_t attempted = 0;
    std::size_t discarded = 0;
};

// Upper bound on E_sigma(r): best of multi-start Adam followed by L-BFGS.
// Gradients come from the autograd tape.
Fit e_sigma_upper(const Problem& p, const FitOptions& opts = {});

struct Hypotheses {
    bool distinct_columns = false;
    bool nonzero_columns = false;
    bool more_columns_than_rank = false;
    std::size_t rank = 0;
    bool ok() const { return distinct_columns && nonzero_columns && more_columns_than_rank; }
    std::string describe() const;
};
Hypotheses check_hypotheses(const Tensor& x);

// sigma(0), sigma'(0), sigma''(0) by central differences with step h.
struct ZeroJet {
    double value, d1, d2;
};
ZeroJet zero_jet(ActivationKind sigma, double h = 1e-3);

struct OutsideFeature {
    Tensor u;       // d_in x 1
    Tensor v;       // 1 x n, sigma(u^T X)
    Tensor w;       // n x 1 kernel vector with X diag(w) X^T != 0
    double residual = 0.0;  // ||P_perp v|| / ||v||
    double g = 0.0;         // sigma(u^T X) w
    std::string how;
};

// Constructive search for a feature sigma(u^T X) outside row(X).
// Throws PreconditionError when the hypotheses fail and NotFound when the search gives up.
OutsideFeature find_outside_feature(const Tensor& x, ActivationKind sigma, std::uint64_t seed = 0);

enum class Verdict { Pass, Fail, Diagnostic };
std::string verdict_name(Verdict v);

struct Certificate {
    std::string statement;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> quantities;
    std::vector<std::pair<std::string, double>> tolerances;
    Verdict verdict = Verdict::Diagnostic;
    std::string note;

    double get(const std::string& key) const;
    void put(const std::string& key, double value) { quantities.emplace_back(key, value); }
    std::string render() const;
};

// Evaluates the sufficient condition ||P_{v perp}(Y)||^2 < ||Y_perp||^2 + s_{>r}(Y_par)^2
// and bounds E_sigma(r) by the explicit construction A e_1 = u, B e_1 = Y v^T / ||v||^2.
// Pass when the condition holds and the construction beats E_id by more than tol;
// Diagnostic when the condition fails.
Certificate strict_improvement_certificate(const Tensor& x, const Tensor& y, std::size_t r, ActivationKind sigma,
                                 const OutsideFeature& f, double tol, std::uint64_t seed = 0);

// Rows of Y in span{v}: Y = w v with random w of length d_out.
Certificate strict_improvement_extreme(const Tensor& x, ActivationKind sigma, std::size_t r, std::size_t d_out,
                             std::uint64_t seed);

struct RecoveryOptions {
    std::size_t d_in = 4, d_out = 6, n = 16, r = 2;
    double v_noise = 0.0;
    double alpha = 1.0;
    ActivationKind sigma = ActivationKind::SiLU;
    std::vector<double> constants{1.0, 2.0, 4.0};
    double reference_constant = 2.0;
    std::uint64_t seed = 0;
    FitOptions fit;
};

struct RecoveryResult {
    Certificate certificate;
    double delta = 0.0;
    double e_sigma = 0.0;
    double bound = 0.0;  // at the reference constant
    std::size_t r_alpha = 0;
    std::size_t rank_y = 0;
    bool reliable = true;
};

// r_alpha(Y) uses the effective-rank definition on Y's singular values.
double recovery_bound(std::size_t r, std::size_t r_alpha, double c, double v, std::size_t n, std::size_t d_out,
                      double eps, double s_next, double s_tail, double e_sigma);

// Planted instance Y = B_true sigma(A_true X) + v Z with Z fixed by the seed.
RecoveryResult recovery_diagnostic(const RecoveryOptions& o);

}  // namespace cola::theory
