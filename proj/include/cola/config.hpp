#pragma once

#include <map>
#include <string>
#include <vector>

#include "cola/checkpoint.hpp"
#include "cola/model.hpp"

namespace cola {

// `key = value` lines, `#` starts a comment, keys may be dotted (model.d).
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> parse_config_file(const std::string& path);
// "key=value" override as given on the command line.
std::pair<std::string, std::string> parse_override(const std::string& s);

struct TrainConfig {
    ModelConfig model;
    std::size_t steps = 200;
    std::size_t batch_tokens = 256;
    std::size_t seq_len = 0;  // 0 selects model.max_seq_len
    double learning_rate = 1e-3;
    double warmup_fraction = 0.1;
    double weight_decay = 0.01;
    double grad_clip = 0.5;
    std::size_t eval_every = 100;  // 0 evaluates only at the end
    std::size_t eval_tokens = 8192;
    std::string data_path;
    double val_fraction = 0.1;
    PolicyKind checkpoint_policy = PolicyKind::None;
    std::string out_dir = "out";
    std::uint64_t seed = 0;

    std::size_t sequence_length() const { return seq_len ? seq_len : model.max_seq_len; }
    std::size_t sequences_per_step() const;

    void validate() const;
    // Keys: model.<field>, or a training field with optional "train." prefix.
    // model.seed follows seed unless given explicitly.
    static TrainConfig from_map(const std::map<std::string, std::string>& kv);
    std::string to_text() const;
};

}  // namespace cola
