#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "uniret/corpus.hpp"
#include "uniret/linalg.hpp"

namespace uniret {

struct RankedEntry {
    std::string doc_id;
    double score = 0.0; // cosine in [-1, 1] (or a fused score downstream)
    Modality modality = Modality::Text;
};

/// Scores non-increasing, ties broken by ascending doc_id, no duplicates.
struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;
};

/// Frozen store of L2-normalized embeddings with exact top-K cosine search.
/// Rows that were zero before normalization are flagged and score 0 against
/// every query. Immutable after build; concurrent searches are safe.
class DenseIndex {
public:
    static DenseIndex build(const Mat& embeddings, std::vector<std::string> ids,
                            std::vector<Modality> modalities);

    std::size_t size() const { return rows_.rows; }
    std::size_t dim() const { return rows_.cols; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<Modality>& modalities() const { return modalities_; }
    const std::unordered_set<std::size_t>& zero_rows() const { return zero_rows_; }

    RankedList search(const Vec& query_emb, std::size_t k,
                      const std::string& query_id = {}) const;
    RankedList search_filtered(const Vec& query_emb, std::size_t k, Modality modality,
                               const std::string& query_id = {}) const;

    void save(const std::filesystem::path& path) const;
    static DenseIndex load(const std::filesystem::path& path);

    /// One JSON line per doc (id, modality, vector) for external plotting.
    void export_embeddings(const std::filesystem::path& path) const;

private:
    RankedList top_k(const Vec& query_emb, std::size_t k, std::optional<Modality> filter,
                     const std::string& query_id) const;

    Mat rows_; // normalized
    std::vector<std::string> ids_;
    std::vector<Modality> modalities_;
    std::unordered_set<std::size_t> zero_rows_;
};

} // namespace uniret
