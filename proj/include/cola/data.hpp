#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cola/model.hpp"

namespace cola {

// Byte-level corpus: tokens 0..255, 256 reserved as padding.
inline constexpr std::size_t kByteVocab = 257;

struct Corpus {
    std::vector<std::int64_t> train;
    std::vector<std::int64_t> val;

    // Last val_fraction of the bytes become the validation split.
    static Corpus from_bytes(const std::string& bytes, double val_fraction);
    static Corpus from_file(const std::string& path, double val_fraction);
};

std::string read_file(const std::string& path);
std::vector<std::int64_t> to_tokens(const std::string& bytes);

// seq_len tokens per sequence, each predicting the following byte.
Batch window_batch(const std::vector<std::int64_t>& stream, const std::vector<std::size_t>& starts,
                   std::size_t seq_len);
Batch random_batch(const std::vector<std::int64_t>& stream, std::size_t sequences, std::size_t seq_len,
                   std::mt19937_64& rng);
// Consecutive non-overlapping windows, at most max_tokens predicted tokens in total (0 = all).
std::vector<Batch> sequential_batches(const std::vector<std::int64_t>& stream, std::size_t sequences,
                                      std::size_t seq_len, std::size_t max_tokens = 0);

}  // namespace cola
