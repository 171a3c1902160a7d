#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cola/config.hpp"
#include "cola/data.hpp"
#include "cola/optim.hpp"

namespace cola {

class TrainingError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct MetricsRow {
    std::size_t step = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    std::uint64_t tokens_seen = 0;
    std::uint64_t cumulative_gemm_flops = 0;
    std::uint64_t saved_activation_scalars = 0;

    static std::string csv_header();
    std::string csv() const;
};

// Mean next-token cross-entropy over the batches, no gradients.
double mean_loss(LanguageModel& model, const std::vector<Batch>& batches);
// exp(mean cross-entropy) over every window of the stream.
double perplexity(LanguageModel& model, const std::vector<std::int64_t>& stream, std::size_t seq_len,
                  std::size_t sequences = 8);

class Trainer {
 public:
    Trainer(TrainConfig cfg, Corpus corpus);

    // One optimizer step; evaluates when the step hits eval_every or the last step.
    MetricsRow step();
    // Runs to cfg.steps, writing metrics and checkpoints under out_dir when persist is set.
    std::vector<MetricsRow> run(bool persist = true, const std::function<void(const MetricsRow&)>& on_row = {});

    double val_loss();

    void save(const std::string& dir) const;
    // Restores model, optimizer and counters written by save().
    void resume(const std::string& dir);

    const TrainConfig& config() const { return cfg_; }
    LanguageModel& model() { return model_; }
    std::size_t steps_done() const { return step_; }
    const std::vector<MetricsRow>& history() const { return history_; }

    static std::string model_file(const std::string& dir) { return dir + "/model.cola"; }
    static std::string state_file(const std::string& dir) { return dir + "/trainer.state"; }
    static std::string metrics_file(const std::string& dir) { return dir + "/metrics.csv"; }

 private:
    Batch batch_for_step(std::size_t step) const;

    TrainConfig cfg_;
    Corpus corpus_;
    LanguageModel model_;
    AdamW opt_;
    LrSchedule sched_;
    std::vector<Batch> val_batches_;
    std::size_t step_ = 0;
    std::uint64_t tokens_seen_ = 0;
    std::uint64_t flops_ = 0;
    std::vector<MetricsRow> history_;
};

}  // namespace cola
