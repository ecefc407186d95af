#include "uniret/featurizer.hpp"

#include <cctype>

#include "uniret/rng.hpp"

namespace uniret {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        bool keep = (c >= 0x80) || std::isalnum(c);
        if (keep) {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                                   : static_cast<char>(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

Vec featurize_text(const TextFeaturizer& f, std::string_view text) {
    Vec v(f.dim, 0.0);
    std::vector<std::string> tokens = tokenize(text);
    std::size_t n = std::min(tokens.size(), f.max_tokens);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t s = 0; s < f.n_hash_seeds; ++s) {
            std::uint64_t h = fnv1a64(tokens[t], s);
            std::size_t bucket = static_cast<std::size_t>(h % f.dim);
            double sign = ((h >> 32) & 1ULL) ? 1.0 : -1.0;
            v[bucket] += sign;
        }
    }
    double norm = l2_norm(v);
    if (norm > 0.0) scale(v, 1.0 / norm);
    return v;
}

} // namespace uniret
