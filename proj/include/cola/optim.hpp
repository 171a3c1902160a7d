#pragma once

#include <vector>

#include "cola/tensor.hpp"

namespace cola {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Adam with decoupled weight decay; decay is skipped for parameters with decay == false.
class AdamW {
 public:
    AdamW(const std::vector<Parameter>& params, AdamWConfig cfg);

    void step(std::vector<Parameter>& params, double lr);
    std::size_t steps_taken() const { return t_; }

    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void set_steps_taken(std::size_t t) { t_ = t; }

 private:
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
};

// Linear warmup to peak, then cosine decay to floor_ratio * peak at total_steps.
struct LrSchedule {
    double peak = 1e-3;
    std::size_t total_steps = 1;
    double warmup_fraction = 0.1;
    double floor_ratio = 0.1;

    double at(std::size_t step) const;  // step is 0-based
};

// Scales gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(std::vector<Parameter>& params, double max_norm);

}  // namespace cola
