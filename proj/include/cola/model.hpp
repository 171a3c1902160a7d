#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cola/activation.hpp"
#include "cola/ops.hpp"
#include "cola/tape.hpp"

namespace cola {

enum class Variant { FullRank, CoLA };

// Where nonlinearities sit in a CoLA model.
//   LowRankOnly    B sigma(A x) in every layer, gate activation removed
//   Both           B sigma(A x) in every layer, gate activation kept
//   FullRankOnly   B A x in every layer, gate activation kept
//   LowRankReduced B sigma(A x) in the gate only, B A x elsewhere
enum class SigmaPlacement { LowRankOnly, Both, FullRankOnly, LowRankReduced };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);
std::string placement_name(SigmaPlacement p);
SigmaPlacement placement_from_name(const std::string& s);

class ConfigError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
    std::size_t d = 64;
    std::size_t d_ff = 0;  // 0 selects 5d/2
    std::size_t heads = 4;
    std::size_t n_layer = 4;
    std::size_t r = 0;  // 0 selects d/4
    std::size_t vocab = 257;
    std::size_t max_seq_len = 64;
    Variant variant = Variant::FullRank;
    SigmaPlacement sigma_placement = SigmaPlacement::LowRankOnly;
    ActivationKind activation = ActivationKind::SiLU;
    std::uint64_t seed = 0;

    // Copy with defaults filled in; throws ConfigError on invalid settings.
    ModelConfig resolved() const;
    void validate() const;

    // Canonical sorted key=value lines.
    std::string to_kv() const;
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
    // Applies one key; returns false when the key is not a model key.
    bool set(const std::string& key, const std::string& value);
};

struct ParamBreakdown {
    std::uint64_t token_embedding = 0;
    std::uint64_t positional = 0;
    std::uint64_t block_linear = 0;  // all blocks
    std::uint64_t norms = 0;
    std::uint64_t head = 0;
    std::uint64_t total() const { return token_embedding + positional + block_linear + norms + head; }
};

// Closed-form count for a (resolved) configuration.
ParamBreakdown parameter_breakdown(const ModelConfig& cfg);
// Linear-map parameters of one block.
std::uint64_t block_linear_params(const ModelConfig& cfg);

// h = B sigma(A x); records the pre-activation A x as a bottleneck.
Var cola_forward(Tape& tape, Parameter& a, Parameter& b, std::optional<ActivationKind> sigma, Var x,
                 Var* bottleneck_out = nullptr);

using Capture = std::map<std::string, Tensor>;

struct Batch {
    std::vector<std::int64_t> tokens;   // B * seq_len, sequence-major
    std::vector<std::int64_t> targets;  // same length, -1 ignored
    std::size_t seq_len = 0;
    std::size_t sequences() const { return seq_len ? tokens.size() / seq_len : 0; }
};

// Next-token targets for each sequence of a flat token list.
Batch make_lm_batch(const std::vector<std::vector<std::int64_t>>& sequences);

class LanguageModel {
 public:
    explicit LanguageModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    Parameter& param(const std::string& name);
    const Parameter& param(const std::string& name) const;
    std::uint64_t parameter_count() const;
    void zero_grad();

    // Names of the seven linear maps of block i.
    static std::vector<std::string> layer_names(std::size_t block);
    bool low_rank() const { return cfg_.variant == Variant::CoLA; }
    bool layer_has_mid_sigma(const std::string& layer) const;
    bool gate_has_sigma() const;

    // Block i on a d x (B*seq_len) input, wrapped in tape scope i.
    Var block_forward(Tape& tape, std::size_t i, Var x, std::size_t seq_len,
                      Capture* capture = nullptr);
    Var logits(Tape& tape, const Batch& batch, Capture* capture = nullptr);
    Var loss(Tape& tape, const Batch& batch, Capture* capture = nullptr);

    std::vector<std::string> capture_sites() const;

 private:
    Var linear(Tape& tape, const std::string& layer, Var x, Capture* capture);
    std::size_t add_param(std::string name, Tensor value, bool decay);

    ModelConfig cfg_;
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

// Stacks activations over every batch; columns are tokens.
Capture capture_activations(LanguageModel& model, const std::vector<Batch>& data,
                            const std::vector<std::string>& sites);

}  // namespace cola
