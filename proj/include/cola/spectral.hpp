#pragma once

#include <string>
#include <vector>

#include "cola/model.hpp"

namespace cola::spectral {

// Singular values below this fraction of the largest count as zero.
inline constexpr double kZeroTol = 1e-10;
// Energy targets within this relative slack count as reached.
inline constexpr double kEnergySlack = 1e-12;
inline constexpr std::size_t kMaxColumns = 4096;

struct SpectrumReport {
    std::string site;
    std::vector<double> singular_values;  // descending
    double alpha = 0.95;
    std::size_t effective_rank = 0;
    std::size_t full_dim = 0;  // min(rows, cols) of the analysed matrix
    std::size_t columns = 0;   // columns analysed after subsampling
    std::vector<double> energy;  // cumulative fraction of squared singular values
};

// Minimal k whose leading k squared singular values hold an alpha share of the total.
// Values at or below zero_tol * s_1 are treated as zero.
std::size_t effective_rank(const std::vector<double>& singular_values, double alpha, double zero_tol = kZeroTol);
std::size_t effective_rank(const Tensor& c, double alpha);

SpectrumReport analyze(const std::string& site, const Tensor& c, double alpha = 0.95,
                       std::size_t max_columns = kMaxColumns, std::uint64_t seed = 0);

// Keeps max_columns columns drawn without replacement, in their original order.
Tensor subsample_columns(const Tensor& c, std::size_t max_columns, std::uint64_t seed);

// One report per capture site; activations are stacked over every token of eval_data.
std::vector<SpectrumReport> analyze_model(LanguageModel& model, const std::vector<Batch>& eval_data,
                                          double alpha = 0.95, std::size_t max_columns = kMaxColumns,
                                          std::uint64_t seed = 0);

// Rows: site,index,singular_value,cumulative_energy; then site,r_alpha,<rank>,<alpha> per site.
std::string to_csv(const std::vector<SpectrumReport>& reports);

}  // namespace cola::spectral
