#include "cola/data.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

namespace cola {

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::vector<std::int64_t> to_tokens(const std::string& bytes) {
    std::vector<std::int64_t> t(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = static_cast<unsigned char>(bytes[i]);
    return t;
}

Corpus Corpus::from_bytes(const std::string& bytes, double val_fraction) {
    if (!(val_fraction > 0.0 && val_fraction <= 0.5)) throw std::invalid_argument("val_fraction must be in (0, 0.5]");
    const auto tokens = to_tokens(bytes);
    const auto n_val = static_cast<std::size_t>(static_cast<double>(tokens.size()) * val_fraction);
    Corpus c;
    c.train.assign(tokens.begin(), tokens.end() - static_cast<std::ptrdiff_t>(n_val));
    c.val.assign(tokens.end() - static_cast<std::ptrdiff_t>(n_val), tokens.end());
    return c;
}

Corpus Corpus::from_file(const std::string& path, double val_fraction) {
    return from_bytes(read_file(path), val_fraction);
}

Batch window_batch(const std::vector<std::int64_t>& stream, const std::vector<std::size_t>& starts,
                   std::size_t seq_len) {
    Batch b;
    b.seq_len = seq_len;
    for (auto s : starts) {
        if (s + seq_len + 1 > stream.size()) throw std::out_of_range("window runs past the end of the stream");
        b.tokens.insert(b.tokens.end(), stream.begin() + s, stream.begin() + s + seq_len);
        b.targets.insert(b.targets.end(), stream.begin() + s + 1, stream.begin() + s + seq_len + 1);
    }
    return b;
}

Batch random_batch(const std::vector<std::int64_t>& stream, std::size_t sequences, std::size_t seq_len,
                   std::mt19937_64& rng) {
    if (stream.size() < seq_len + 1) throw std::invalid_argument("stream shorter than one window");
    std::uniform_int_distribution<std::size_t> pick(0, stream.size() - seq_len - 1);
    std::vector<std::size_t> starts(sequences);
    for (auto& s : starts) s = pick(rng);
    return window_batch(stream, starts, seq_len);
}

std::vector<Batch> sequential_batches(const std::vector<std::int64_t>& stream, std::size_t sequences,
                                      std::size_t seq_len, std::size_t max_tokens) {
    std::vector<Batch> out;
    std::vector<std::size_t> starts;
    std::size_t used = 0;
    for (std::size_t s = 0; s + seq_len + 1 <= stream.size(); s += seq_len) {
        if (max_tokens && used + seq_len > max_tokens) break;
        starts.push_back(s);
        used += seq_len;
        if (starts.size() == sequences) {
            out.push_back(window_batch(stream, starts, seq_len));
            starts.clear();
        }
    }
    if (!starts.empty()) out.push_back(window_batch(stream, starts, seq_len));
    return out;
}

}  // namespace cola
