#include "cola/config.hpp"

#include <charconv>
#include <sstream>

#include "cola/data.hpp"

namespace cola {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": cannot parse '" + v + "'");
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    return parse_config_text(read_file(path));
}

std::pair<std::string, std::string> parse_override(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + s + "' is not key=value");
    return {trim(s.substr(0, eq)), trim(s.substr(eq + 1))};
}

std::size_t TrainConfig::sequences_per_step() const {
    const std::size_t t = sequence_length();
    return batch_tokens >= t ? batch_tokens / t : 1;
}

void TrainConfig::validate() const {
    model.validate();
    if (steps < 1) throw ConfigError("steps must be at least 1");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("warmup_fraction must be in [0, 1)");
    if (!(val_fraction > 0.0 && val_fraction <= 0.5)) throw ConfigError("val_fraction must be in (0, 0.5]");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_tokens < 1) throw ConfigError("batch_tokens must be positive");
    if (sequence_length() < 1 || sequence_length() > model.max_seq_len)
        throw ConfigError("seq_len must be in [1, model.max_seq_len]");
    CheckpointPolicy{checkpoint_policy}.check_compatible(model);
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    bool model_seed = false;
    std::map<std::string, std::string> model_keys;
    for (const auto& [raw, v] : kv) {
        if (raw.rfind("model.", 0) == 0) {
            model_keys[raw.substr(6)] = v;
            if (raw == "model.seed") model_seed = true;
            continue;
        }
        const std::string k = raw.rfind("train.", 0) == 0 ? raw.substr(6) : raw;
        if (k == "steps") c.steps = parse_number<std::size_t>(raw, v);
        else if (k == "batch_tokens") c.batch_tokens = parse_number<std::size_t>(raw, v);
        else if (k == "seq_len") c.seq_len = parse_number<std::size_t>(raw, v);
        else if (k == "learning_rate" || k == "lr") c.learning_rate = parse_number<double>(raw, v);
        else if (k == "warmup_fraction") c.warmup_fraction = parse_number<double>(raw, v);
        else if (k == "weight_decay") c.weight_decay = parse_number<double>(raw, v);
        else if (k == "grad_clip") c.grad_clip = parse_number<double>(raw, v);
        else if (k == "eval_every") c.eval_every = parse_number<std::size_t>(raw, v);
        else if (k == "eval_tokens") c.eval_tokens = parse_number<std::size_t>(raw, v);
        else if (k == "data_path" || k == "data") c.data_path = v;
        else if (k == "val_fraction") c.val_fraction = parse_number<double>(raw, v);
        else if (k == "checkpoint_policy") c.checkpoint_policy = policy_from_name(v);
        else if (k == "out_dir") c.out_dir = v;
        else if (k == "seed") c.seed = parse_number<std::uint64_t>(raw, v);
        else throw ConfigError("unknown config key '" + raw + "'");
    }
    c.model.vocab = kByteVocab;
    for (const auto& [k, v] : model_keys)
        if (!c.model.set(k, v)) throw ConfigError("unknown config key 'model." + k + "'");
    if (!model_seed) c.model.seed = c.seed;
    c.model = c.model.resolved();
    return c;
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "batch_tokens = " << batch_tokens << '\n'
       << "checkpoint_policy = " << policy_name(checkpoint_policy) << '\n'
       << "data_path = " << data_path << '\n'
       << "eval_every = " << eval_every << '\n'
       << "eval_tokens = " << eval_tokens << '\n'
       << "grad_clip = " << grad_clip << '\n'
       << "learning_rate = " << learning_rate << '\n';
    std::istringstream mk(model.to_kv());
    std::string line;
    while (std::getline(mk, line)) {
        const auto eq = line.find('=');
        os << "model." << line.substr(0, eq) << " = " << line.substr(eq + 1) << '\n';
    }
    os << "out_dir = " << out_dir << '\n'
       << "seed = " << seed << '\n'
       << "seq_len = " << seq_len << '\n'
       << "steps = " << steps << '\n'
       << "val_fraction = " << val_fraction << '\n'
       << "warmup_fraction = " << warmup_fraction << '\n'
       << "weight_decay = " << weight_decay << '\n';
    return os.str();
}

}  // namespace cola
