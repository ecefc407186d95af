#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uniret/linalg.hpp"

namespace uniret {

enum class Modality { Text, Image };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// One retrievable item: a text passage, or an image record carrying a
/// pixel-feature vector, a caption (body) and detected object tags.
struct SourceDoc {
    std::string id;
    Modality modality = Modality::Text;
    std::string body;                     // passage text, or image caption
    Vec image_features;                   // image docs only, dimension d_img
    std::vector<std::string> object_tags; // image docs only, possibly empty
};

struct Query {
    std::string id;
    std::string text;
    std::vector<std::string> relevant_ids; // non-empty, deduplicated, file order
    std::optional<Modality> answer_modality;
};

class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<SourceDoc> docs, std::size_t d_img);

    const std::vector<SourceDoc>& docs() const { return docs_; }
    std::size_t size() const { return docs_.size(); }
    std::size_t d_img() const { return d_img_; }

    const SourceDoc* find(const std::string& id) const;
    bool contains(const std::string& id) const { return find(id) != nullptr; }

private:
    std::vector<SourceDoc> docs_;
    std::size_t d_img_ = 0;
    std::unordered_map<std::string, std::size_t> id_to_row_;
};

/// Load a JSONL corpus file: one doc object per line. Rejects duplicate ids,
/// dimension mismatches and modality/field inconsistencies, with line numbers.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Load queries and resolve every relevant_id against the corpus.
std::vector<Query> load_queries(const std::filesystem::path& path, const Corpus& corpus);
void save_queries(const std::vector<Query>& queries, const std::filesystem::path& path);

/// Validate an in-memory query set against a corpus (same checks as load).
void validate_queries(const std::vector<Query>& queries, const Corpus& corpus);

struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::size_t n_text = 100;
    std::size_t n_image = 100;
    std::size_t n_queries = 50;
    double image_query_fraction = 0.516;
    std::size_t d_img = 32;
};

/// Deterministic synthetic benchmark with planted signal: each query shares
/// a few rare vocabulary tokens with its relevant doc, text docs and queries
/// share topic tokens, and image docs carry a group token in the query plus a
/// matching low-rank direction in image_features. Distractors draw from a
/// disjoint common vocabulary, so the contrastive objective is learnable by
/// linear heads at desk scale.
std::pair<Corpus, std::vector<Query>> generate_synthetic(const SyntheticSpec& spec);

} // namespace uniret
