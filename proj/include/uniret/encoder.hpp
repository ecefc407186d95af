#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>

#include "uniret/corpus.hpp"
#include "uniret/featurizer.hpp"
#include "uniret/linalg.hpp"

namespace uniret {

/// Affine projection into the shared output space: h = W x + b.
struct ProjectionHead {
    Mat W; // [D_out x D_in]
    Vec b; // [D_out]

    Vec apply(const Vec& x) const;
};

/// Two trainable heads mapping raw text and image features into one
/// universal D-dimensional space. Queries, passages and captions all go
/// through the shared text head; image pixel features go through the image
/// head and the two contributions sum.
struct UniversalEncoder {
    ProjectionHead text_head;  // [D x D_txt]
    ProjectionHead image_head; // [D x D_img]
    std::uint64_t init_seed = 0;

    std::size_t out_dim() const { return text_head.W.rows; }
    std::size_t text_dim() const { return text_head.W.cols; }
    std::size_t image_dim() const { return image_head.W.cols; }
};

/// Fresh encoder with W entries i.i.d. uniform in [-1/sqrt(D_in), +1/sqrt(D_in)]
/// and zero biases, from a seeded generator.
UniversalEncoder make_encoder(std::size_t d, std::size_t d_txt, std::size_t d_img,
                              std::uint64_t seed);

Vec encode_query(const UniversalEncoder& enc, const Vec& query_features);
Vec encode_text_passage(const UniversalEncoder& enc, const Vec& passage_features);
Vec encode_image(const UniversalEncoder& enc, const Vec& pixel_features,
                 const Vec& caption_features);

/// image doc id -> reformulated caption used in place of the raw one.
using ExpansionMap = std::unordered_map<std::string, std::string>;

/// Embed every doc: text docs through the text head on their body, image docs
/// as image-head(features) + text-head(caption), with the expanded caption
/// when the map supplies one. Row order follows corpus order.
Mat encode_corpus(const UniversalEncoder& enc, const Corpus& corpus,
                  const TextFeaturizer& featurizer, const ExpansionMap* expansion = nullptr);

/// Versioned JSON checkpoint; save(load(f)) is byte-identical to f.
void save_checkpoint(const UniversalEncoder& enc, const std::filesystem::path& path);
UniversalEncoder load_checkpoint(const std::filesystem::path& path);

} // namespace uniret
