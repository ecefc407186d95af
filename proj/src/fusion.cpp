#include "uniret/fusion.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

#include "uniret/featurizer.hpp"

namespace uniret {

RankedList reciprocal_rank_fuse(const FusionInput& input, std::size_t k, double rank_constant) {
    if (k < 1) fail("validation", "fusion K must be >= 1");
    if (rank_constant < 0.0) fail("validation", "rank constant must be >= 0");

    std::unordered_set<std::string> text_ids;
    for (const RankedEntry& e : input.text_list.entries) text_ids.insert(e.doc_id);
    for (const RankedEntry& e : input.image_list.entries)
        if (text_ids.count(e.doc_id))
            fail("overlap", "doc \"" + e.doc_id + "\" appears in both fusion inputs");

    // Ordered map gives the ascending-id tie-break for free.
    std::map<std::string, std::pair<double, Modality>> fused;
    auto add_list = [&](const RankedList& list) {
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            const RankedEntry& e = list.entries[i];
            double score = 1.0 / (rank_constant + static_cast<double>(i + 1));
            auto [it, inserted] = fused.emplace(e.doc_id, std::make_pair(score, e.modality));
            if (!inserted) it->second.first += score;
        }
    };
    add_list(input.text_list);
    add_list(input.image_list);

    std::vector<RankedEntry> entries;
    entries.reserve(fused.size());
    for (const auto& [id, sm] : fused) entries.push_back({id, sm.first, sm.second});
    std::stable_sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        return a.score > b.score; // equal scores keep ascending-id map order
    });
    if (entries.size() > k) entries.resize(k);

    RankedList out;
    out.query_id = !input.text_list.query_id.empty() ? input.text_list.query_id
                                                     : input.image_list.query_id;
    out.entries = std::move(entries);
    return out;
}

std::vector<RankedList> oracle_route(const std::vector<Query>& queries, const DenseIndex& index,
                                     const UniversalEncoder& enc, const TextFeaturizer& featurizer,
                                     std::size_t k) {
    std::vector<RankedList> out;
    out.reserve(queries.size());
    for (const Query& q : queries) {
        if (!q.answer_modality)
            fail("validation", "oracle routing needs answer_modality on query \"" + q.id + "\"");
        Vec q_emb = encode_query(enc, featurize_text(featurizer, q.text));
        out.push_back(index.search_filtered(q_emb, k, *q.answer_modality, q.id));
    }
    return out;
}

} // namespace uniret
