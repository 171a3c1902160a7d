#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cola/model.hpp"

namespace cola::cost {

enum class Method { FullRank, CoLA, LoRA, SLTrain, GaLore };

std::string method_name(Method m);
Method method_from_name(const std::string& s);
const std::vector<Method>& all_methods();

struct CostQuery {
    std::uint64_t n = 256;  // tokens per sequence batch
    std::uint64_t d = 0;
    std::uint64_t d_ff = 0;
    std::uint64_t r = 0;  // unused for FullRank
    std::uint64_t h = 1;
    std::uint64_t n_layer = 1;
    std::uint64_t vocab = 0;        // embedding + head counted when nonzero
    double sltrain_density = 0.03;  // sparse fraction of each SLTrain matrix
    Method method = Method::FullRank;

    void validate() const;
};

struct CostReport {
    Method method = Method::FullRank;
    std::uint64_t flops_forward = 0;
    std::uint64_t flops_backward = 0;
    std::uint64_t flops_optimizer_extra = 0;
    std::uint64_t flops_total = 0;
    std::uint64_t param_count = 0;
    std::uint64_t trainable_params = 0;
    std::uint64_t state_memory_scalars = 0;  // model + grad + optimizer
    double ratio_vs_fullrank = 1.0;

    double state_memory_bytes(double bytes_per_scalar) const {
        return static_cast<double>(state_memory_scalars) * bytes_per_scalar;
    }
};

// Per-layer GEMM flops of one method, forward and backward, no n_layer factor.
struct LayerFlops {
    std::uint64_t forward = 0;
    std::uint64_t backward = 0;
    std::uint64_t optimizer_extra = 0;
    std::uint64_t total() const { return forward + backward + optimizer_extra; }
};
LayerFlops layer_flops(const CostQuery& q);

CostReport flops(const CostQuery& q);
std::uint64_t state_memory(const CostQuery& q);
double breakeven_rank(double d, double d_ff);

// Per-block activation memory and recompute closed forms. They assume
// d_ff = 2.5 d; callers check that precondition.
namespace act {
double m_full(double n, double d, double h);
double m_cola(double n, double d, double h, double r, SigmaPlacement placement);
double m_vanilla(double n, double d);
double m_colam(double n, double d, double r);
double r_vanilla(double n, double d);
double r_colam(double n, double d, double r);
// Whole-block replay of a CoLA block (one forward).
double r_vanilla_cola(double n, double d, double d_ff, double r);
}  // namespace act

struct CounterCheck {
    Variant variant;
    std::uint64_t measured_forward = 0;
    std::uint64_t measured_backward = 0;
    std::uint64_t formula_forward = 0;
    std::uint64_t formula_backward = 0;
    bool exact() const {
        return measured_forward == formula_forward && measured_backward == formula_backward;
    }
    std::uint64_t measured_total() const { return measured_forward + measured_backward; }
    std::uint64_t formula_total() const { return formula_forward + formula_backward; }
};

// Runs one forward+backward over a single sequence of n tokens and compares
// the block GEMM counters with n_layer times the per-layer formula.
CounterCheck validate_against_counters(const ModelConfig& cfg, std::size_t n);

std::string csv_header();
std::string csv_row(const CostQuery& q, const CostReport& r);
std::string render_table(const std::vector<std::pair<CostQuery, CostReport>>& rows);

// One report per rank for each of the given methods (Fig. 1 style sweep).
std::vector<std::pair<CostQuery, CostReport>> rank_sweep(CostQuery base,
                                                        const std::vector<std::uint64_t>& ranks,
                                                        const std::vector<Method>& methods);

}  // namespace cola::cost
