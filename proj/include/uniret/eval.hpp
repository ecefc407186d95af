#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "uniret/corpus.hpp"
#include "uniret/index.hpp"
#include "uniret/jsonio.hpp"

namespace uniret {

/// 1/rank of the first relevant entry within the top K, else 0.
double mrr_at_k(const RankedList& ranked, const std::unordered_set<std::string>& relevant,
                std::size_t k);

/// Binary-gain NDCG: DCG with 1/log2(rank+1) discounts over relevant hits in
/// the top K, normalized by the ideal DCG placing all relevant docs first.
double ndcg_at_k(const RankedList& ranked, const std::unordered_set<std::string>& relevant,
                 std::size_t k);

/// |top-K ∩ relevant| / |relevant|.
double recall_at_k(const RankedList& ranked, const std::unordered_set<std::string>& relevant,
                   std::size_t k);

/// Mean over lists of the fraction of Image entries within the top K.
double modality_ratio_at_k(const std::vector<RankedList>& lists, std::size_t k = 10);

struct MetricRow {
    double mrr10 = 0.0, mrr20 = 0.0;
    double ndcg10 = 0.0, ndcg20 = 0.0;
    double recall20 = 0.0, recall100 = 0.0;
};

struct EvalReport {
    std::map<std::string, MetricRow> per_query;
    MetricRow aggregates;
    std::size_t n_queries = 0;
    // Aggregates restricted to queries annotated with each answer modality.
    std::map<std::string, MetricRow> breakdown_by_answer_modality;
    std::map<std::string, std::size_t> breakdown_counts;
    double image_ratio_at_10 = 0.0;
    // Image-answerable queries grouped by the relevant image's raw caption
    // length (whitespace tokens), bounds half-open: [0,b0), [b0,b1), [b1,inf).
    std::map<std::string, MetricRow> caption_length_groups;
    std::map<std::string, std::size_t> caption_length_counts;
};

/// Score a retrieval run. Every run query must exist in `queries`; queries
/// missing from the run score 0 on all metrics. Caption-length grouping
/// covers image-annotated queries only.
EvalReport evaluate_run(const std::vector<RankedList>& run, const std::vector<Query>& queries,
                        const Corpus& corpus,
                        std::array<std::size_t, 2> caption_length_bounds = {10, 20});

/// Line-oriented run file: query_id doc_id rank score tag. Ranks are 1-based
/// and dense per query.
void save_run(const std::vector<RankedList>& run, const std::filesystem::path& path,
              const std::string& tag);
std::vector<RankedList> load_run(const std::filesystem::path& path, const Corpus& corpus);

json report_to_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::filesystem::path& path);

} // namespace uniret
