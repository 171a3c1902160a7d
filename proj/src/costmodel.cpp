#include "cola/costmodel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace cola::cost {

std::string method_name(Method m) {
    switch (m) {
        case Method::FullRank: return "full";
        case Method::CoLA: return "cola";
        case Method::LoRA: return "lora";
        case Method::SLTrain: return "sltrain";
        case Method::GaLore: return "galore";
    }
    return "full";
}

Method method_from_name(const std::string& s) {
    for (Method m : all_methods())
        if (method_name(m) == s) return m;
    if (s == "relora") return Method::LoRA;
    throw std::invalid_argument("unknown method '" + s + "' (full, cola, lora, sltrain, galore)");
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> m{Method::FullRank, Method::CoLA, Method::LoRA, Method::SLTrain,
                                       Method::GaLore};
    return m;
}

void CostQuery::validate() const {
    if (n == 0 || d == 0 || d_ff == 0 || h == 0 || n_layer == 0) {
        throw std::invalid_argument("cost query extents must be positive");
    }
    if (method != Method::FullRank && r == 0) {
        throw std::invalid_argument("rank r is required for method " + method_name(method));
    }
    if (sltrain_density < 0.0 || sltrain_density > 1.0) {
        throw std::invalid_argument("sltrain density must lie in [0, 1]");
    }
}

namespace {

LayerFlops full_layer(const CostQuery& q) {
    const std::uint64_t n = q.n, d = q.d, f = q.d_ff;
    const std::uint64_t fwd = 8 * n * d * d + 4 * n * n * d + 6 * n * d * f;
    return {fwd, 2 * fwd, 0};
}

LayerFlops cola_layer(const CostQuery& q) {
    const std::uint64_t n = q.n, d = q.d, f = q.d_ff, r = q.r;
    const std::uint64_t fwd = 16 * n * d * r + 4 * n * n * d + 6 * n * r * (d + f);
    return {fwd, 2 * fwd, 0};
}

// Linear parameters of one layer.
std::uint64_t full_params(const CostQuery& q) { return 4 * q.d * q.d + 3 * q.d * q.d_ff; }
std::uint64_t cola_params(const CostQuery& q) { return 8 * q.d * q.r + 3 * q.r * (q.d + q.d_ff); }

}  // namespace

LayerFlops layer_flops(const CostQuery& q) {
    q.validate();
    const std::uint64_t n = q.n, d = q.d, f = q.d_ff, r = q.r;
    switch (q.method) {
        case Method::FullRank:
            return full_layer(q);
        case Method::CoLA:
            return cola_layer(q);
        case Method::LoRA: {
            // Frozen full-rank path: forward plus the activation half of
            // its backward, on top of the trainable low-rank path.
            LayerFlops c = cola_layer(q);
            c.forward += 8 * n * d * d + 4 * n * n * d + 6 * n * d * f;
            c.backward += 8 * n * d * d + 8 * n * n * d + 6 * n * d * f;
            return c;
        }
        case Method::SLTrain: {
            // Dense weights rebuilt from BA (+ sparse part) each step.
            LayerFlops c = full_layer(q);
            c.forward += 8 * d * d * r + 6 * d * f * r;
            c.backward += 16 * d * d * r + 12 * d * f * r;
            return c;
        }
        case Method::GaLore: {
            LayerFlops c = full_layer(q);
            c.optimizer_extra = 16 * d * d * r + 12 * d * f * r;
            return c;
        }
    }
    return {};
}

std::uint64_t state_memory(const CostQuery& q) { return flops(q).state_memory_scalars; }

CostReport flops(const CostQuery& q) {
    q.validate();
    CostReport rep;
    rep.method = q.method;
    const LayerFlops lf = layer_flops(q);
    rep.flops_forward = lf.forward * q.n_layer;
    rep.flops_backward = lf.backward * q.n_layer;
    rep.flops_optimizer_extra = lf.optimizer_extra * q.n_layer;
    rep.flops_total = rep.flops_forward + rep.flops_backward + rep.flops_optimizer_extra;

    CostQuery fq = q;
    fq.method = Method::FullRank;
    rep.ratio_vs_fullrank =
        static_cast<double>(rep.flops_total) / static_cast<double>(full_layer(fq).total() * q.n_layer);

    const std::uint64_t embed = 2 * q.vocab * q.d;
    const std::uint64_t norms = q.d * (2 * q.n_layer + 1);
    const std::uint64_t dense = embed + norms;
    std::uint64_t total = 0, trainable = 0, optimizer = 0;
    switch (q.method) {
        case Method::FullRank:
            total = trainable = full_params(q) * q.n_layer + dense;
            optimizer = 2 * trainable;
            break;
        case Method::CoLA:
            total = trainable = cola_params(q) * q.n_layer + dense;
            optimizer = 2 * trainable;
            break;
        case Method::LoRA:
            trainable = cola_params(q) * q.n_layer + dense;
            total = trainable + full_params(q) * q.n_layer;
            optimizer = 2 * trainable;
            break;
        case Method::SLTrain: {
            const auto sparse = static_cast<std::uint64_t>(
                std::llround(q.sltrain_density * static_cast<double>(full_params(q))));
            total = trainable = (cola_params(q) + sparse) * q.n_layer + dense;
            optimizer = 2 * trainable;
            break;
        }
        case Method::GaLore: {
            total = trainable = full_params(q) * q.n_layer + dense;
            // rank-r moments along the larger side of each matrix
            const std::uint64_t per_layer = q.r * (4 * q.d + 3 * std::max(q.d, q.d_ff));
            optimizer = 2 * (per_layer * q.n_layer + dense);
            break;
        }
    }
    rep.param_count = total;
    rep.trainable_params = trainable;
    rep.state_memory_scalars = total + trainable + optimizer;
    return rep;
}

double breakeven_rank(double d, double d_ff) {
    if (d <= 0 || d_ff <= 0) throw std::invalid_argument("breakeven_rank: d and d_ff must be positive");
    return (24.0 * d * d + 18.0 * d * d_ff) / (48.0 * d + 18.0 * (d + d_ff));
}

namespace act {

double m_full(double n, double d, double h) { return 20 * n * d + 2 * n * n * h; }

double m_cola(double n, double d, double h, double r, SigmaPlacement placement) {
    switch (placement) {
        case SigmaPlacement::LowRankOnly: return 17.5 * n * d + 2 * n * n * h + 14 * n * r;
        case SigmaPlacement::Both: return 20 * n * d + 2 * n * n * h + 14 * n * r;
        case SigmaPlacement::FullRankOnly: return 20 * n * d + 2 * n * n * h + 7 * n * r;
        case SigmaPlacement::LowRankReduced: return 17.5 * n * d + 2 * n * n * h + 8 * n * r;
    }
    return 0;
}

double m_vanilla(double n, double d) { return n * d; }
double m_colam(double n, double d, double r) { return 2 * n * d + 7 * n * r; }
double r_vanilla(double n, double d) { return 23 * n * d * d + 4 * n * n * d; }
double r_colam(double n, double d, double r) { return 18.5 * n * d * r + 4 * n * n * d; }
double r_vanilla_cola(double n, double d, double d_ff, double r) {
    return 16 * n * d * r + 4 * n * n * d + 6 * n * r * (d + d_ff);
}

}  // namespace act

CounterCheck validate_against_counters(const ModelConfig& cfg, std::size_t n) {
    ModelConfig c = cfg;
    c.max_seq_len = std::max(c.max_seq_len, n);
    LanguageModel model(c);
    const ModelConfig& rc = model.config();
    std::vector<std::int64_t> seq(n);
    for (std::size_t t = 0; t < n; ++t) seq[t] = static_cast<std::int64_t>((7 * t + 3) % rc.vocab);
    Batch b;
    b.tokens = seq;
    b.targets.assign(n, -1);
    for (std::size_t t = 0; t + 1 < n; ++t) b.targets[t] = seq[t + 1];
    if (n == 1) b.targets[0] = seq[0];
    b.seq_len = n;

    Tape tape;
    tape.backward(model.loss(tape, b));

    CounterCheck out;
    out.variant = rc.variant;
    for (std::size_t i = 0; i < rc.n_layer; ++i) {
        const FlopCounters f = tape.scope_flops(static_cast<int>(i));
        out.measured_forward += f.forward;
        out.measured_backward += f.backward;
    }
    CostQuery q;
    q.n = n;
    q.d = rc.d;
    q.d_ff = rc.d_ff;
    q.r = rc.r;
    q.h = rc.heads;
    q.n_layer = rc.n_layer;
    q.method = rc.variant == Variant::CoLA ? Method::CoLA : Method::FullRank;
    const LayerFlops lf = layer_flops(q);
    out.formula_forward = lf.forward * rc.n_layer;
    out.formula_backward = lf.backward * rc.n_layer;
    return out;
}

std::string csv_header() {
    return "method,n,d,d_ff,r,h,n_layer,flops_forward,flops_backward,flops_optimizer_extra,"
           "flops_total,param_count,state_memory_scalars,ratio_vs_fullrank\n";
}

std::string csv_row(const CostQuery& q, const CostReport& r) {
    std::ostringstream os;
    char ratio[32];
    std::snprintf(ratio, sizeof ratio, "%.17g", r.ratio_vs_fullrank);
    os << method_name(r.method) << ',' << q.n << ',' << q.d << ',' << q.d_ff << ',' << q.r << ','
       << q.h << ',' << q.n_layer << ',' << r.flops_forward << ',' << r.flops_backward << ','
       << r.flops_optimizer_extra << ',' << r.flops_total << ',' << r.param_count << ','
       << r.state_memory_scalars << ',' << ratio << '\n';
    return os.str();
}

std::string render_table(const std::vector<std::pair<CostQuery, CostReport>>& rows) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-8s %20s %20s %20s %20s %14s %8s\n", "method", "forward",
                  "backward", "optimizer", "total", "params", "ratio");
    os << line;
    for (const auto& [q, r] : rows) {
        std::snprintf(line, sizeof line, "%-8s %20llu %20llu %20llu %20llu %14llu %8.4f\n",
                      method_name(r.method).c_str(), (unsigned long long)r.flops_forward,
                      (unsigned long long)r.flops_backward, (unsigned long long)r.flops_optimizer_extra,
                      (unsigned long long)r.flops_total, (unsigned long long)r.param_count,
                      r.ratio_vs_fullrank);
        os << line;
    }
    return os.str();
}

std::vector<std::pair<CostQuery, CostReport>> rank_sweep(CostQuery base,
                                                        const std::vector<std::uint64_t>& ranks,
                                                        const std::vector<Method>& methods) {
    std::vector<std::pair<CostQuery, CostReport>> out;
    for (std::uint64_t r : ranks) {
        for (Method m : methods) {
            CostQuery q = base;
            q.r = r;
            q.method = m;
            out.emplace_back(q, flops(q));
        }
    }
    return out;
}

}  // namespace cola::cost
