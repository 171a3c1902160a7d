#include "cola/spectral.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "cola/linalg.hpp"

namespace cola::spectral {

std::size_t effective_rank(const std::vector<double>& s, double alpha, double zero_tol) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in (0, 1]");
    if (s.empty() || s[0] <= 0.0) throw std::invalid_argument("effective rank of a zero matrix is undefined");
    const double cut = zero_tol * s[0];
    double total = 0.0;
    for (double v : s)
        if (v > cut) total += v * v;
    const double target = alpha * total * (1.0 - kEnergySlack);
    double cum = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k] <= cut) return k;
        cum += s[k] * s[k];
        if (cum >= target) return k + 1;
    }
    return s.size();
}

std::size_t effective_rank(const Tensor& c, double alpha) {
    return effective_rank(linalg::singular_values(c), alpha);
}

Tensor subsample_columns(const Tensor& c, std::size_t max_columns, std::uint64_t seed) {
    const std::size_t n = c.cols();
    if (n <= max_columns) return c;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < max_columns; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(max_columns);
    std::sort(idx.begin(), idx.end());
    Tensor out({c.rows(), max_columns});
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < max_columns; ++j) out(i, j) = c(i, idx[j]);
    return out;
}

SpectrumReport analyze(const std::string& site, const Tensor& c, double alpha, std::size_t max_columns,
                       std::uint64_t seed) {
    const Tensor m = subsample_columns(c, max_columns, seed);
    SpectrumReport r;
    r.site = site;
    r.alpha = alpha;
    r.columns = m.cols();
    r.full_dim = std::min(m.rows(), m.cols());
    r.singular_values = linalg::singular_values(m);
    r.effective_rank = effective_rank(r.singular_values, alpha);
    double total = 0.0;
    for (double v : r.singular_values) total += v * v;
    double cum = 0.0;
    for (double v : r.singular_values) {
        cum += v * v;
        r.energy.push_back(cum / total);
    }
    return r;
}

std::vector<SpectrumReport> analyze_model(LanguageModel& model, const std::vector<Batch>& eval_data, double alpha,
                                          std::size_t max_columns, std::uint64_t seed) {
    const auto sites = model.capture_sites();
    const Capture cap = capture_activations(model, eval_data, sites);
    std::vector<SpectrumReport> out;
    for (const auto& s : sites) out.push_back(analyze(s, cap.at(s), alpha, max_columns, seed));
    return out;
}

std::string to_csv(const std::vector<SpectrumReport>& reports) {
    std::ostringstream os;
    os << "site,index,singular_value,cumulative_energy\n";
    char buf[128];
    for (const auto& r : reports) {
        for (std::size_t i = 0; i < r.singular_values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", i + 1, r.singular_values[i], r.energy[i]);
            os << r.site << ',' << buf << '\n';
        }
        std::snprintf(buf, sizeof buf, "%zu,%.17g", r.effective_rank, r.alpha);
        os << r.site << ",r_alpha," << buf << '\n';
    }
    return os.str();
}

}  // namespace cola::spectral
