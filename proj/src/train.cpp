#include "cola/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cola/io.hpp"

namespace cola {

namespace fs = std::filesystem;

std::string MetricsRow::csv_header() {
    return "step,train_loss,val_loss,tokens_seen,cumulative_gemm_flops,saved_activation_scalars";
}

std::string MetricsRow::csv() const {
    char buf[256];
    char val[40] = "";
    if (val_loss) std::snprintf(val, sizeof val, "%.17g", *val_loss);
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%s,%llu,%llu,%llu", step, train_loss, val,
                  static_cast<unsigned long long>(tokens_seen), static_cast<unsigned long long>(cumulative_gemm_flops),
                  static_cast<unsigned long long>(saved_activation_scalars));
    return buf;
}

double mean_loss(LanguageModel& model, const std::vector<Batch>& batches) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& b : batches) {
        std::size_t n = 0;
        for (auto t : b.targets) n += t >= 0;
        if (n == 0) continue;
        Tape tape;
        total += model.loss(tape, b).value().item() * static_cast<double>(n);
        count += n;
    }
    if (count == 0) throw std::invalid_argument("no targets to evaluate");
    return total / static_cast<double>(count);
}

double perplexity(LanguageModel& model, const std::vector<std::int64_t>& stream, std::size_t seq_len,
                  std::size_t sequences) {
    for (auto t : stream)
        if (t < 0 || static_cast<std::size_t>(t) >= model.config().vocab)
            throw std::invalid_argument("token " + std::to_string(t) + " outside the model vocabulary");
    return std::exp(mean_loss(model, sequential_batches(stream, sequences, seq_len)));
}

Trainer::Trainer(TrainConfig cfg, Corpus corpus)
    : cfg_(std::move(cfg)),
      corpus_(std::move(corpus)),
      model_((cfg_.validate(), cfg_.model)),
      opt_(model_.parameters(), AdamWConfig{0.9, 0.999, 1e-8, cfg_.weight_decay}) {
    sched_.peak = cfg_.learning_rate;
    sched_.total_steps = cfg_.steps;
    sched_.warmup_fraction = cfg_.warmup_fraction;
    const std::size_t t = cfg_.sequence_length();
    if (corpus_.train.size() < 10 * cfg_.batch_tokens || corpus_.train.size() < t + 1)
        throw TrainingError("training split has " + std::to_string(corpus_.train.size()) +
                            " tokens; need at least 10 x batch_tokens = " + std::to_string(10 * cfg_.batch_tokens));
    if (corpus_.val.size() < t + 1) throw TrainingError("validation split is shorter than one sequence");
    val_batches_ = sequential_batches(corpus_.val, cfg_.sequences_per_step(), t, cfg_.eval_tokens);
}

Batch Trainer::batch_for_step(std::size_t step) const {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                      static_cast<std::uint32_t>(step), 0x5eedu};
    std::mt19937_64 rng(seq);
    return random_batch(corpus_.train, cfg_.sequences_per_step(), cfg_.sequence_length(), rng);
}

double Trainer::val_loss() { return mean_loss(model_, val_batches_); }

MetricsRow Trainer::step() {
    if (step_ >= cfg_.steps) throw TrainingError("training already finished");
    const Batch b = batch_for_step(step_);
    Tape tape;
    tape.set_policy(CheckpointPolicy{cfg_.checkpoint_policy}.retention());
    model_.zero_grad();
    Var loss = model_.loss(tape, b);
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) throw TrainingError("non-finite loss at step " + std::to_string(step_ + 1));
    tape.backward(loss);
    const double gnorm = clip_grad_norm(model_.parameters(), cfg_.grad_clip);
    if (!std::isfinite(gnorm)) throw TrainingError("non-finite gradient at step " + std::to_string(step_ + 1));
    std::vector<Tensor> before;
    for (const auto& p : model_.parameters()) before.push_back(p.value);
    opt_.step(model_.parameters(), sched_.at(step_));
    for (const auto& p : model_.parameters())
        for (double w : p.value.data())
            if (!std::isfinite(w)) {
                for (std::size_t i = 0; i < before.size(); ++i) model_.parameters()[i].value = std::move(before[i]);
                throw TrainingError("update produced non-finite weights at step " + std::to_string(step_ + 1));
            }
    ++step_;

    std::size_t predicted = 0;
    for (auto t : b.targets) predicted += t >= 0;
    tokens_seen_ += predicted;
    flops_ += tape.flops().total();

    MetricsRow row;
    row.step = step_;
    row.train_loss = lv;
    row.tokens_seen = tokens_seen_;
    row.cumulative_gemm_flops = flops_;
    row.saved_activation_scalars = tape.saved_scalars();
    if ((cfg_.eval_every && step_ % cfg_.eval_every == 0) || step_ == cfg_.steps) row.val_loss = val_loss();
    history_.push_back(row);
    return row;
}

void Trainer::save(const std::string& dir) const {
    fs::create_directories(dir);
    save_model(model_, model_file(dir));
    std::ostringstream text;
    text << "adam_steps=" << opt_.steps_taken() << '\n'
         << "flops=" << flops_ << '\n'
         << "step=" << step_ << '\n'
         << "tokens_seen=" << tokens_seen_ << '\n';
    std::vector<NamedTensor> ts;
    const auto& ps = model_.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        ts.push_back({"m." + ps[i].name, opt_.first_moments()[i]});
        ts.push_back({"v." + ps[i].name, opt_.second_moments()[i]});
    }
    std::ofstream os(state_file(dir), std::ios::binary);
    if (!os) throw TrainingError("cannot write " + state_file(dir));
    write_tensor_file(os, "COLA1-STATE", text.str(), ts);
}

void Trainer::resume(const std::string& dir) {
    LanguageModel loaded = load_model(model_file(dir));
    if (loaded.config().to_kv() != model_.config().to_kv())
        throw TrainingError("checkpoint model config does not match the training config");
    model_ = std::move(loaded);
    std::ifstream is(state_file(dir), std::ios::binary);
    if (!is) throw TrainingError("cannot read " + state_file(dir));
    std::string text;
    std::vector<NamedTensor> ts;
    read_tensor_file(is, "COLA1-STATE", text, ts);
    auto kv = parse_kv_lines(text);
    const auto& ps = model_.parameters();
    if (ts.size() != 2 * ps.size()) throw FormatError("optimizer state does not match the model");
    for (std::size_t i = 0; i < ps.size(); ++i) {
        opt_.first_moments()[i] = ts[2 * i].value;
        opt_.second_moments()[i] = ts[2 * i + 1].value;
    }
    opt_.set_steps_taken(std::stoull(kv.at("adam_steps")));
    step_ = std::stoull(kv.at("step"));
    tokens_seen_ = std::stoull(kv.at("tokens_seen"));
    flops_ = std::stoull(kv.at("flops"));
    history_.clear();
}

std::vector<MetricsRow> Trainer::run(bool persist, const std::function<void(const MetricsRow&)>& on_row) {
    std::ofstream metrics;
    if (persist) {
        std::error_code ec;
        fs::create_directories(cfg_.out_dir, ec);
        const std::string path = metrics_file(cfg_.out_dir);
        // keep rows up to the resumed step so a resumed run reproduces an uninterrupted file
        std::vector<std::string> kept;
        if (step_ > 0) {
            std::ifstream old(path);
            std::string line;
            std::getline(old, line);
            while (std::getline(old, line))
                if (std::stoull(line.substr(0, line.find(','))) <= step_) kept.push_back(line);
        }
        metrics.open(path, std::ios::trunc);
        if (!metrics) throw TrainingError("cannot write to out_dir " + cfg_.out_dir);
        metrics << MetricsRow::csv_header() << '\n';
        for (const auto& l : kept) metrics << l << '\n';
        metrics.flush();
    }
    std::vector<MetricsRow> rows;
    while (step_ < cfg_.steps) {
        MetricsRow row;
        try {
            row = step();
        } catch (const TrainingError&) {
            // parameters are untouched by the failing step
            if (persist) save(cfg_.out_dir);
            throw;
        }
        rows.push_back(row);
        if (persist) {
            metrics << row.csv() << '\n';
            metrics.flush();
            if ((cfg_.eval_every && step_ % cfg_.eval_every == 0) || step_ == cfg_.steps) save(cfg_.out_dir);
        }
        if (on_row) on_row(row);
    }
    return rows;
}

}  // namespace cola
