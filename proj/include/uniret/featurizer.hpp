#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "uniret/linalg.hpp"

namespace uniret {

/// Deterministic hashed bag-of-tokens text features. Stands in for a
/// pretrained text tower: pure function of the input string and this config,
/// identical across platforms (FNV-1a hashing, no vocabulary files).
struct TextFeaturizer {
    std::size_t dim = 256;       // output dimension
    std::size_t n_hash_seeds = 2; // buckets per token
    std::size_t max_tokens = 77;  // truncation length
};

/// Lowercase, strip punctuation, split on whitespace. ASCII letters are
/// lowercased; bytes >= 0x80 pass through so UTF-8 content stays intact.
std::vector<std::string> tokenize(std::string_view text);

/// Hashed bag-of-tokens vector: each of the first max_tokens tokens adds a
/// signed unit into n_hash_seeds buckets. L2-normalized unless all-zero.
Vec featurize_text(const TextFeaturizer& f, std::string_view text);

} // namespace uniret
