#pragma once

#include <vector>

#include "uniret/corpus.hpp"
#include "uniret/encoder.hpp"
#include "uniret/index.hpp"

namespace uniret {

/// Per-modality retriever outputs for one query. The two lists must hold
/// disjoint id sets (text-only / image-only retrievers).
struct FusionInput {
    RankedList text_list;
    RankedList image_list;
};

/// Divide-and-conquer fusion: score(d) = sum over lists containing d of
/// 1/(rank_constant + rank), with rank_constant 0 by default (pure rank
/// reciprocals). Top-K by fused score, ties by ascending id; reported scores
/// are the fused values, not cosines.
RankedList reciprocal_rank_fuse(const FusionInput& input, std::size_t k,
                                double rank_constant = 0.0);

/// Upper-bound baseline: search only the annotated answer modality per query.
std::vector<RankedList> oracle_route(const std::vector<Query>& queries, const DenseIndex& index,
                                     const UniversalEncoder& enc, const TextFeaturizer& featurizer,
                                     std::size_t k);

} // namespace uniret
