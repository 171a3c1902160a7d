#include "cola/verify.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "cola/linalg.hpp"

namespace cola::theory {

using linalg::frobenius;
using linalg::matmul;
using linalg::pinv;
using linalg::sub;

std::size_t SuiteResult::count(Verdict v) const {
    std::size_t k = 0;
    for (const auto& c : certificates) k += c.verdict == v;
    return k;
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"dominance", "identity-optimum", "outside-feature", "strict-improvement", "recovery"};
    return names;
}

double als_error(const Problem& p, std::size_t restarts, std::uint64_t seed) {
    p.validate();
    const Tensor xp = pinv(p.x);
    std::mt19937_64 rng(seed);
    double best = INFINITY;
    for (std::size_t s = 0; s < restarts; ++s) {
        Tensor a = Tensor::randn({p.r, p.x.rows()}, rng);
        double prev = INFINITY;
        for (int it = 0; it < 3000; ++it) {
            const Tensor b = matmul(p.y, pinv(matmul(a, p.x)));
            a = matmul(matmul(pinv(b), p.y), xp);
            const double err = frobenius(sub(p.y, matmul(b, matmul(a, p.x))));
            const bool done = prev - err < 1e-15;
            prev = err;
            if (done) break;
        }
        best = std::min(best, prev);
    }
    return best;
}

namespace {

Tensor hypothesis_x(std::size_t d_in, std::size_t n, std::mt19937_64& rng) {
    while (true) {
        Tensor x = Tensor::randn({d_in, n}, rng);
        if (check_hypotheses(x).ok()) return x;
    }
}

Certificate dominance_instance(std::mt19937_64& rng, ActivationKind sigma, std::uint64_t seed) {
    const std::size_t d_in = 2 + rng() % 5, d_out = 2 + rng() % 5, n = 3 + rng() % 6, r = 1 + rng() % 2;
    Problem p{Tensor::randn({d_in, n}, rng), Tensor::randn({d_out, n}, rng), r, sigma};
    FitOptions fo;
    fo.seed = seed;
    const Fit fit = e_sigma_upper(p, fo);
    const double eid = e_id(p);
    Certificate c;
    c.statement = "nonlinear-dominates/" + std::string(activation_name(sigma));
    c.seed = seed;
    c.put("d_in", double(d_in));
    c.put("d_out", double(d_out));
    c.put("n", double(n));
    c.put("r", double(r));
    c.put("E_sigma_upper", fit.value);
    c.put("E_id", eid);
    c.put("gap", fit.value - eid);
    c.tolerances = {{"gap", 1e-6}};
    c.verdict = fit.value <= eid + 1e-6 ? Verdict::Pass : Verdict::Fail;
    c.note = "best start " + fit.start;
    return c;
}

Certificate identity_optimum_instance(std::mt19937_64& rng, std::uint64_t seed) {
    const std::size_t d_in = 1 + rng() % 6, d_out = 1 + rng() % 6, n = 2 + rng() % 7;
    const std::size_t r = 1 + rng() % std::min<std::size_t>(3, std::min(d_in, d_out));
    Problem p{Tensor::randn({d_in, n}, rng), Tensor::randn({d_out, n}, rng), r, ActivationKind::Identity};
    const double closed = e_id(p);
    const double als = als_error(p, 50, seed);
    Certificate c;
    c.statement = "identity-optimum";
    c.seed = seed;
    c.put("E_id", closed);
    c.put("ALS", als);
    c.put("abs_diff", std::abs(closed - als));
    c.tolerances = {{"abs_diff", 1e-6}};
    c.verdict = std::abs(closed - als) < 1e-6 ? Verdict::Pass : Verdict::Fail;
    return c;
}

Certificate outside_feature_instance(std::mt19937_64& rng, std::size_t i, std::uint64_t seed) {
    const std::size_t d_in = 1 + rng() % 5;
    const Tensor x = hypothesis_x(d_in, d_in + 2, rng);
    const ActivationKind sigma = i % 2 ? ActivationKind::GELU : ActivationKind::SiLU;
    Certificate c;
    c.statement = "outside-feature/" + std::string(activation_name(sigma));
    c.seed = seed;
    c.put("d_in", double(d_in));
    c.tolerances = {{"residual", 1e-6}};
    try {
        const OutsideFeature f = find_outside_feature(x, sigma, seed);
        c.put("residual", f.residual);
        c.put("g", f.g);
        c.verdict = f.residual > 1e-6 ? Verdict::Pass : Verdict::Fail;
        c.note = f.how;
    } catch (const std::exception& e) {
        c.verdict = Verdict::Fail;
        c.note = e.what();
    }
    return c;
}

}  // namespace

SuiteResult run_suite(const std::string& name, std::uint64_t seed, std::size_t instances) {
    SuiteResult out;
    out.name = name;
    std::mt19937_64 rng(seed);
    auto size = [&](std::size_t dflt) { return instances ? instances : dflt; };
    if (name == "dominance") {
        for (auto sigma : {ActivationKind::Tanh, ActivationKind::SiLU})
            for (std::size_t i = 0; i < size(50); ++i)
                out.certificates.push_back(dominance_instance(rng, sigma, seed * 1000 + i));
    } else if (name == "identity-optimum") {
        for (std::size_t i = 0; i < size(20); ++i) out.certificates.push_back(identity_optimum_instance(rng, seed * 1000 + i));
    } else if (name == "outside-feature") {
        for (std::size_t i = 0; i < size(20); ++i)
            out.certificates.push_back(outside_feature_instance(rng, i, seed * 1000 + i));
    } else if (name == "strict-improvement") {
        for (std::size_t i = 0; i < size(20); ++i) {
            const std::size_t d_in = 2 + rng() % 4;
            const Tensor x = hypothesis_x(d_in, d_in + 2, rng);
            Certificate c = strict_improvement_extreme(x, ActivationKind::SiLU, 1 + i % 2, 3, seed * 1000 + i);
            // the extreme case asserts E_sigma <= 1e-9 and E_id > 1e-3 on top of the verdict
            if (c.verdict == Verdict::Pass && !(c.get("E_sigma_upper") <= 1e-9 && c.get("E_id") > 1e-3))
                c.verdict = Verdict::Fail;
            c.tolerances.emplace_back("E_sigma_upper", 1e-9);
            c.tolerances.emplace_back("E_id_min", 1e-3);
            out.certificates.push_back(std::move(c));
        }
    } else if (name == "recovery") {
        for (double v : {0.0, 0.01, 0.1}) {
            RecoveryOptions o;
            o.seed = seed;
            o.v_noise = v;
            out.certificates.push_back(recovery_diagnostic(o).certificate);
        }
    } else {
        throw std::invalid_argument("unknown suite '" + name + "'");
    }
    return out;
}

}  // namespace cola::theory
