#include "cola/theory.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <glog/logging.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "cola/linalg.hpp"
#include "cola/ops.hpp"
#include "cola/optim.hpp"
#include "cola/spectral.hpp"
#include "cola/tape.hpp"

namespace cola::theory {

using linalg::frobenius;
using linalg::matmul;
using linalg::sub;
using linalg::transpose;

namespace {

Tensor apply(ActivationKind k, Tensor t) {
    for (double& v : t.data()) v = activate(k, v);
    return t;
}

Tensor column(const Tensor& m, std::size_t j) {
    Tensor c({m.rows(), 1});
    for (std::size_t i = 0; i < m.rows(); ++i) c(i, 0) = m(i, j);
    return c;
}

double sq(double v) { return v * v; }

// 0.5 ||B sigma(A X) - Y||^2 and its gradient through the tape.
double half_sq_loss(const Problem& p, Parameter& a, Parameter& b) {
    Tape tape;
    Var x = tape.constant(p.x);
    Var y = tape.constant(p.y);
    Var ax = ops::matmul(tape.parameter(a), x);
    Var res = ops::sub(ops::matmul(tape.parameter(b), ops::activation(ax, p.sigma)), y);
    Var loss = ops::scale(ops::sum(ops::mul(res, res)), 0.5);
    const double v = loss.value().item();
    tape.backward(loss);
    return v;
}

class Objective final : public ceres::FirstOrderFunction {
 public:
    Objective(const Problem& p) : p_(p), a_("A", Tensor({p.r, p.x.rows()})), b_("B", Tensor({p.y.rows(), p.r})) {}

    bool Evaluate(const double* theta, double* cost, double* gradient) const override {
        unpack(theta);
        a_.zero_grad();
        b_.zero_grad();
        *cost = half_sq_loss(p_, a_, b_);
        if (!std::isfinite(*cost)) return false;
        if (gradient) {
            std::copy(a_.grad.ptr(), a_.grad.ptr() + a_.grad.size(), gradient);
            std::copy(b_.grad.ptr(), b_.grad.ptr() + b_.grad.size(), gradient + a_.grad.size());
        }
        return true;
    }
    int NumParameters() const override { return static_cast<int>(a_.value.size() + b_.value.size()); }

    void unpack(const double* theta) const {
        std::copy(theta, theta + a_.value.size(), a_.value.ptr());
        std::copy(theta + a_.value.size(), theta + NumParameters(), b_.value.ptr());
    }

 private:
    const Problem& p_;
    mutable Parameter a_, b_;
};

std::vector<double> pack(const Factors& f) {
    std::vector<double> t(f.a.ptr(), f.a.ptr() + f.a.size());
    t.insert(t.end(), f.b.ptr(), f.b.ptr() + f.b.size());
    return t;
}

Factors unpack(const Problem& p, const std::vector<double>& t) {
    Factors f{Tensor({p.r, p.x.rows()}), Tensor({p.y.rows(), p.r})};
    std::copy(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(f.a.size()), f.a.ptr());
    std::copy(t.begin() + static_cast<std::ptrdiff_t>(f.a.size()), t.end(), f.b.ptr());
    return f;
}

Factors lbfgs(const Problem& p, const Factors& start, std::size_t iterations) {
    // the solver reports degenerate line-search polynomials through glog
    static const bool quiet = [] {
        FLAGS_minloglevel = google::GLOG_ERROR;
        return true;
    }();
    (void)quiet;
    std::vector<double> theta = pack(start);
    ceres::GradientProblem problem(new Objective(p));
    ceres::GradientProblemSolver::Options o;
    o.line_search_direction_type = ceres::LBFGS;
    o.max_num_iterations = static_cast<int>(iterations);
    o.function_tolerance = 1e-20;
    o.gradient_tolerance = 1e-20;
    o.parameter_tolerance = 1e-20;
    o.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(o, problem, theta.data(), &summary);
    return unpack(p, theta);
}

Factors adam(const Problem& p, Factors start, std::size_t steps, double lr) {
    std::vector<Parameter> ps;
    ps.emplace_back("A", std::move(start.a), false);
    ps.emplace_back("B", std::move(start.b), false);
    AdamW opt(ps, AdamWConfig{0.9, 0.999, 1e-8, 0.0});
    for (std::size_t s = 0; s < steps; ++s) {
        for (auto& q : ps) q.zero_grad();
        if (!std::isfinite(half_sq_loss(p, ps[0], ps[1]))) break;
        opt.step(ps, lr);
    }
    return {std::move(ps[0].value), std::move(ps[1].value)};
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

void Problem::validate() const {
    if (x.rank() != 2 || y.rank() != 2) throw ShapeError("theory problem needs matrices");
    if (x.cols() != y.cols()) throw ShapeError("X and Y must have the same number of columns");
    if (r < 1) throw std::invalid_argument("rank r must be at least 1");
}

RowSplit split_rows(const Tensor& x, const Tensor& y) {
    RowSplit s;
    s.projector = linalg::row_space_projector(x, kRankTol);
    s.y_par = matmul(y, s.projector);
    s.y_perp = sub(y, s.y_par);
    return s;
}

double tail_norm(const Tensor& z, std::size_t k) {
    const auto s = linalg::singular_values(z);
    double t = 0.0;
    for (std::size_t j = k; j < s.size(); ++j) t += s[j] * s[j];
    return std::sqrt(t);
}

double e_id(const Problem& p) {
    p.validate();
    const RowSplit s = split_rows(p.x, p.y);
    const double perp = frobenius(s.y_perp);
    return std::sqrt(perp * perp + sq(tail_norm(s.y_par, p.r)));
}

Factors e_id_factors(const Problem& p) {
    p.validate();
    const RowSplit s = split_rows(p.x, p.y);
    const auto f = linalg::svd(s.y_par);
    const Tensor xpinv = linalg::pinv(p.x, kRankTol);
    Factors out{Tensor({p.r, p.x.rows()}), Tensor({p.y.rows(), p.r})};
    const std::size_t k = std::min(p.r, f.s.size());
    Tensor vt_r({p.r, p.x.cols()});
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < p.y.rows(); ++i) out.b(i, j) = f.u(i, j) * f.s[j];
        for (std::size_t c = 0; c < p.x.cols(); ++c) vt_r(j, c) = f.vt(j, c);
    }
    out.a = matmul(vt_r, xpinv);
    return out;
}

double objective(const Problem& p, const Tensor& a, const Tensor& b) {
    return frobenius(sub(p.y, matmul(b, apply(p.sigma, matmul(a, p.x)))));
}

Fit e_sigma_upper(const Problem& p, const FitOptions& opts) {
    p.validate();
    Fit best;
    best.value = std::numeric_limits<double>::infinity();
    auto consider = [&](const Factors& f, const std::string& start) {
        ++best.attempted;
        const double v = objective(p, f.a, f.b);
        if (!std::isfinite(v)) {
            ++best.discarded;
            return;
        }
        if (v < best.value) {
            best.value = v;
            best.factors = f;
            best.start = start;
        }
    };

    const double d1 = activation_info(p.sigma).d1_at_zero;
    if (d1 != 0.0) {
        const Factors id = e_id_factors(p);
        for (double tau : opts.taus) {
            Factors warm{linalg::scaled(id.a, tau), linalg::scaled(id.b, 1.0 / (d1 * tau))};
            const std::string name = "tau=" + fmt(tau);
            consider(warm, name);
            consider(lbfgs(p, warm, opts.lbfgs_iterations), name + "+lbfgs");
            if (p.sigma == ActivationKind::Identity) break;
        }
    }
    std::mt19937_64 rng(opts.seed);
    for (std::size_t k = 0; k < opts.random_restarts; ++k) {
        Factors f{Tensor::randn({p.r, p.x.rows()}, rng, 1.0 / std::sqrt(double(p.x.rows()))),
                  Tensor::randn({p.y.rows(), p.r}, rng, 1.0 / std::sqrt(double(p.r)))};
        f = adam(p, std::move(f), opts.adam_steps, opts.adam_lr);
        const std::string name = "random#" + std::to_string(k);
        consider(f, name + "+adam");
        consider(lbfgs(p, f, opts.lbfgs_iterations), name + "+adam+lbfgs");
    }
    if (!std::isfinite(best.value)) throw std::runtime_error("every restart diverged");
    return best;
}

std::string Hypotheses::describe() const {
    std::string s;
    if (!distinct_columns) s += "X has identical columns; ";
    if (!nonzero_columns) s += "X has a zero column; ";
    if (!more_columns_than_rank) s += "X has no more columns than its rank (" + std::to_string(rank) + "); ";
    return s.empty() ? "hypotheses hold" : s.substr(0, s.size() - 2);
}

Hypotheses check_hypotheses(const Tensor& x) {
    Hypotheses h;
    const std::size_t n = x.cols();
    double scale = 0.0;
    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        norms[j] = frobenius(column(x, j));
        scale = std::max(scale, norms[j]);
    }
    const double tol = 1e-12 * std::max(scale, 1e-300);
    h.nonzero_columns = std::all_of(norms.begin(), norms.end(), [&](double v) { return v > tol; });
    h.distinct_columns = true;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (frobenius(sub(column(x, i), column(x, j))) <= tol) h.distinct_columns = false;
    h.rank = scale > 0.0 ? linalg::numerical_rank(x, kRankTol) : 0;
    h.more_columns_than_rank = n > h.rank;
    return h;
}

ZeroJet zero_jet(ActivationKind sigma, double h) {
    const double p = activate(sigma, h), z = activate(sigma, 0.0), m = activate(sigma, -h);
    return {z, (p - m) / (2 * h), (p - 2 * z + m) / (h * h)};
}

namespace {

// Weight of w in X diag(w) X^T relative to ||X||^2 ||w||.
double curvature(const Tensor& x, const Tensor& w, Tensor* m_out = nullptr) {
    Tensor xw = x;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) xw(i, j) *= w(j, 0);
    Tensor m = matmul(xw, transpose(x));
    const double rel = frobenius(m) / (sq(frobenius(x)) * frobenius(w));
    if (m_out) *m_out = std::move(m);
    return rel;
}

bool next_subset(std::vector<std::size_t>& idx, std::size_t n) {
    const std::size_t k = idx.size();
    for (std::size_t i = k; i-- > 0;) {
        if (idx[i] < n - k + i) {
            ++idx[i];
            for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
            return true;
        }
    }
    return false;
}

}  // namespace

OutsideFeature find_outside_feature(const Tensor& x, ActivationKind sigma, std::uint64_t seed) {
    const Hypotheses h = check_hypotheses(x);
    if (!h.ok()) throw PreconditionError(h.describe());
    const ZeroJet jet = zero_jet(sigma);
    if (std::abs(jet.value) > 1e-12) throw PreconditionError("sigma(0) != 0");
    if (std::abs(jet.d1) < 1e-6) throw PreconditionError("sigma'(0) = 0");
    if (std::abs(jet.d2) < 1e-4) throw PreconditionError("sigma''(0) = 0 (finite difference " + fmt(jet.d2) + ")");

    const std::size_t n = x.cols();
    const double kCurv = 1e-8;
    std::mt19937_64 rng(seed);

    Tensor w, m;
    std::string how;
    const Tensor kernel = linalg::null_space(x, kRankTol);
    for (std::size_t j = 0; j < kernel.cols() && w.empty(); ++j) {
        Tensor c = column(kernel, j);
        if (curvature(x, c, &m) > kCurv) {
            w = c;
            how = "kernel basis vector " + std::to_string(j);
        }
    }
    for (int t = 0; t < 32 && w.empty() && kernel.cols() > 0; ++t) {
        Tensor c = matmul(kernel, Tensor::randn({kernel.cols(), 1}, rng));
        if (curvature(x, c, &m) > kCurv) {
            w = c;
            how = "random kernel combination";
        }
    }
    for (std::size_t k = 1; k <= std::min<std::size_t>(6, n) && w.empty(); ++k) {
        std::vector<std::size_t> idx(k);
        for (std::size_t i = 0; i < k; ++i) idx[i] = i;
        do {
            Tensor sub_x({x.rows(), k});
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < k; ++j) sub_x(i, j) = x(i, idx[j]);
            const Tensor ks = linalg::null_space(sub_x, kRankTol);
            for (std::size_t c = 0; c < ks.cols() && w.empty(); ++c) {
                Tensor full({n, 1});
                for (std::size_t j = 0; j < k; ++j) full(idx[j], 0) = ks(j, c);
                if (curvature(x, full, &m) > kCurv) {
                    w = full;
                    how = "minimal support of size " + std::to_string(k);
                }
            }
        } while (w.empty() && next_subset(idx, n));
    }
    if (w.empty()) throw NotFound("no kernel vector with X diag(w) X^T != 0 within support size 6");

    const Tensor pperp = sub(Tensor::identity(n), linalg::row_space_projector(x, kRankTol));
    double col_scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) col_scale = std::max(col_scale, frobenius(column(x, j)));

    OutsideFeature best;
    best.w = w;
    auto consider = [&](Tensor u, const std::string& source) {
        Tensor v = apply(sigma, matmul(transpose(u), x));
        const double vn = frobenius(v);
        if (!(vn > 0.0) || !std::isfinite(vn)) return;
        const double res = frobenius(matmul(v, pperp)) / vn;
        if (res > best.residual) {
            best.residual = res;
            best.g = matmul(v, w).item();
            best.u = std::move(u);
            best.v = std::move(v);
            best.how = how + "; u from " + source;
        }
    };
    const std::vector<double> scales{0.1, 0.3, 1.0, 3.0};
    // second-order direction: sigma(t u^T X) w ~ t^2 sigma''(0)/2 u^T X diag(w) X^T u
    const auto f = linalg::svd(m);
    for (double s : scales) consider(linalg::scaled(column(f.u, 0), s / col_scale), "curvature direction");
    for (int t = 0; t < 64; ++t) {
        Tensor u = Tensor::randn({x.rows(), 1}, rng);
        u = linalg::scaled(u, 1.0 / frobenius(u));
        for (double s : scales) consider(linalg::scaled(u, s / col_scale), "random direction");
    }
    if (!(best.residual > 1e-6)) throw NotFound("no direction u found with sigma(u^T X) outside row(X)");
    return best;
}

std::string verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        case Verdict::Diagnostic: return "diagnostic";
    }
    return "diagnostic";
}

double Certificate::get(const std::string& key) const {
    for (const auto& [k, v] : quantities)
        if (k == key) return v;
    throw std::out_of_range("certificate has no quantity '" + key + "'");
}

std::string Certificate::render() const {
    std::ostringstream os;
    char buf[64];
    os << "[" << statement << "] seed=" << seed << " verdict=" << verdict_name(verdict) << '\n';
    for (const auto& [k, v] : quantities) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        os << "  " << k << " = " << buf << '\n';
    }
    for (const auto& [k, v] : tolerances) {
        std::snprintf(buf, sizeof buf, "%.3g", v);
        os << "  tol " << k << " = " << buf << '\n';
    }
    if (!note.empty()) os << "  note: " << note << '\n';
    return os.str();
}

Certificate strict_improvement_certificate(const Tensor& x, const Tensor& y, std::size_t r, ActivationKind sigma,
                                 const OutsideFeature& f, double tol, std::uint64_t seed) {
    Problem p{x, y, r, sigma};
    p.validate();
    Certificate c;
    c.statement = "strict-improvement";
    c.seed = seed;
    const RowSplit s = split_rows(x, y);
    const double eid = e_id(p);
    const double vv = sq(frobenius(f.v));
    const Tensor yv = matmul(y, transpose(f.v));  // d_out x 1
    const Tensor y_on_v = linalg::scaled(matmul(yv, f.v), 1.0 / vv);
    const double lhs = sq(frobenius(sub(y, y_on_v)));
    const double rhs = sq(frobenius(s.y_perp)) + sq(tail_norm(s.y_par, r));

    Tensor a({r, x.rows()}), b({y.rows(), r});
    for (std::size_t i = 0; i < x.rows(); ++i) a(0, i) = f.u(i, 0);
    for (std::size_t i = 0; i < y.rows(); ++i) b(i, 0) = yv(i, 0) / vv;
    const double esig = objective(p, a, b);

    c.put("E_id", eid);
    c.put("E_sigma_upper", esig);
    c.put("condition_lhs", lhs);
    c.put("condition_rhs", rhs);
    c.put("feature_residual", f.residual);
    c.put("norm_Y", frobenius(y));
    c.tolerances = {{"E_sigma_margin", tol}, {"rank", kRankTol}, {"row_space", kRankTol}};
    if (lhs < rhs) {
        c.verdict = esig + tol < eid ? Verdict::Pass : Verdict::Fail;
        c.note = "condition holds; E_sigma bounded by the rank-one construction";
    } else {
        c.verdict = Verdict::Diagnostic;
        c.note = "sufficient condition fails; no claim";
    }
    return c;
}

Certificate strict_improvement_extreme(const Tensor& x, ActivationKind sigma, std::size_t r, std::size_t d_out,
                             std::uint64_t seed) {
    const OutsideFeature f = find_outside_feature(x, sigma, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    const Tensor w = Tensor::randn({d_out, 1}, rng);
    const Tensor y = matmul(w, f.v);
    Certificate c = strict_improvement_certificate(x, y, r, sigma, f, 1e-9, seed);
    c.statement = "strict-improvement/extreme";
    return c;
}

double recovery_bound(std::size_t r, std::size_t r_alpha, double c, double v, std::size_t n, std::size_t d_out,
                      double eps, double s_next, double s_tail, double e_sigma) {
    return std::sqrt(double(r + r_alpha)) * (c * v * std::sqrt(double(n + d_out)) + eps + s_next) + s_tail + e_sigma;
}

RecoveryResult recovery_diagnostic(const RecoveryOptions& o) {
    std::mt19937_64 rng(o.seed);
    const Tensor x = Tensor::randn({o.d_in, o.n}, rng);
    const Tensor a_true = Tensor::randn({o.r, o.d_in}, rng, 1.0 / std::sqrt(double(o.d_in)));
    const Tensor b_true = Tensor::randn({o.d_out, o.r}, rng, 1.0 / std::sqrt(double(o.r)));
    const Tensor z = Tensor::randn({o.d_out, o.n}, rng);
    const Tensor planted = matmul(b_true, apply(o.sigma, matmul(a_true, x)));
    const Tensor g = linalg::scaled(z, o.v_noise);
    const Tensor y = linalg::add(planted, g);
    const auto eps_sv = linalg::singular_values(sub(sub(y, planted), g));
    const double eps = eps_sv.empty() ? 0.0 : eps_sv[0];

    Problem p{x, y, o.r, o.sigma};
    FitOptions fo = o.fit;
    fo.seed = o.seed + 1;
    const Fit fit = e_sigma_upper(p, fo);
    const double delta = frobenius(sub(planted, matmul(fit.factors.b, apply(o.sigma, matmul(fit.factors.a, x)))));

    auto s = linalg::singular_values(y);
    for (double& v : s)
        if (v <= kRankTol * s[0]) v = 0.0;
    const std::size_t rank_y = spectral::effective_rank(s, 1.0, kRankTol);
    const std::size_t r_alpha = spectral::effective_rank(s, o.alpha, kRankTol);
    auto tail_at = [&](std::size_t k) {
        double t = 0.0;
        for (std::size_t j = k; j < s.size(); ++j) t += s[j] * s[j];
        return std::sqrt(t);
    };
    const double s_next = r_alpha < s.size() ? s[r_alpha] : 0.0;
    const double s_tail = tail_at(r_alpha);

    RecoveryResult out;
    out.delta = delta;
    out.e_sigma = fit.value;
    out.r_alpha = r_alpha;
    out.rank_y = rank_y;
    out.bound = recovery_bound(o.r, r_alpha, o.reference_constant, o.v_noise, o.n, o.d_out, eps, s_next, s_tail,
                               fit.value);
    out.reliable = fit.value <= e_id(p) + 1e-6;

    Certificate& c = out.certificate;
    c.statement = "recovery-bound";
    c.seed = o.seed;
    c.put("v_noise", o.v_noise);
    c.put("alpha", o.alpha);
    c.put("Delta", delta);
    c.put("E_sigma_upper", fit.value);
    c.put("epsilon", eps);
    c.put("rank_Y", double(rank_y));
    c.put("r_alpha_Y", double(r_alpha));
    c.put("s_r_alpha_plus_1", s_next);
    c.put("s_tail_r_alpha", s_tail);
    c.put("noise_term_per_C", o.v_noise * std::sqrt(double(o.n + o.d_out)));
    if (o.v_noise > 0.0) {
        const auto gs = linalg::singular_values(g);
        c.put("G_spectral_ratio", gs[0] / (o.v_noise * std::sqrt(double(o.n + o.d_out))));
    }
    for (double cc : o.constants)
        c.put("bound_C=" + fmt(cc), recovery_bound(o.r, r_alpha, cc, o.v_noise, o.n, o.d_out, eps, s_next, s_tail,
                                                    fit.value));
    c.tolerances = {{"Delta_noise_free", 1e-4}, {"E_sigma_noise_free", 1e-6}, {"rank", kRankTol}};
    if (o.v_noise == 0.0) {
        c.verdict = (delta <= 1e-4 && fit.value <= 1e-6) ? Verdict::Pass : Verdict::Fail;
        c.note = "noise-free planted recovery";
    } else {
        c.verdict = Verdict::Diagnostic;
        c.note = std::string("constant C unknown; bounds reported only") + (out.reliable ? "" : "; optimizer unreliable");
    }
    return out;
}

}  // namespace cola::theory
