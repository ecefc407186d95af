#include "uniret/encoder.hpp"

#include <cmath>

#include "uniret/jsonio.hpp"
#include "uniret/rng.hpp"

namespace uniret {

Vec ProjectionHead::apply(const Vec& x) const {
    Vec out = matvec(W, x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

namespace {

ProjectionHead init_head(std::size_t d_out, std::size_t d_in, RngStream& rng) {
    ProjectionHead head;
    head.W = Mat(d_out, d_in);
    head.b = Vec(d_out, 0.0);
    double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (double& w : head.W.data) w = rng.uniform(-bound, bound);
    return head;
}

} // namespace

UniversalEncoder make_encoder(std::size_t d, std::size_t d_txt, std::size_t d_img,
                              std::uint64_t seed) {
    if (d < 1 || d_txt < 1 || d_img < 1)
        fail("validation", "encoder dimensions must be >= 1");
    RngStream rng(seed);
    UniversalEncoder enc;
    RngStream text_rng = rng.fork("text-head");
    RngStream image_rng = rng.fork("image-head");
    enc.text_head = init_head(d, d_txt, text_rng);
    enc.image_head = init_head(d, d_img, image_rng);
    enc.init_seed = seed;
    return enc;
}

Vec encode_query(const UniversalEncoder& enc, const Vec& query_features) {
    if (query_features.size() != enc.text_dim())
        fail("dimension-mismatch", "query features have " + std::to_string(query_features.size()) +
                                       " entries, text head expects " +
                                       std::to_string(enc.text_dim()));
    return enc.text_head.apply(query_features);
}

Vec encode_text_passage(const UniversalEncoder& enc, const Vec& passage_features) {
    // Same shared text head as queries.
    return encode_query(enc, passage_features);
}

Vec encode_image(const UniversalEncoder& enc, const Vec& pixel_features,
                 const Vec& caption_features) {
    if (pixel_features.size() != enc.image_dim())
        fail("dimension-mismatch", "pixel features have " + std::to_string(pixel_features.size()) +
                                       " entries, image head expects " +
                                       std::to_string(enc.image_dim()));
    if (caption_features.size() != enc.text_dim())
        fail("dimension-mismatch",
             "caption features have " + std::to_string(caption_features.size()) +
                 " entries, text head expects " + std::to_string(enc.text_dim()));
    Vec img = enc.image_head.apply(pixel_features);
    Vec cap = enc.text_head.apply(caption_features);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += cap[i];
    return img;
}

Mat encode_corpus(const UniversalEncoder& enc, const Corpus& corpus,
                  const TextFeaturizer& featurizer, const ExpansionMap* expansion) {
    if (expansion) {
        for (const auto& [id, _] : *expansion) {
            const SourceDoc* doc = corpus.find(id);
            if (!doc) fail("unknown-id", "expansion references missing doc \"" + id + "\"");
            if (doc->modality != Modality::Image)
                fail("validation", "expansion references non-image doc \"" + id + "\"");
        }
    }
    Mat table(corpus.size(), enc.out_dim());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const SourceDoc& doc = corpus.docs()[i];
        Vec row;
        if (doc.modality == Modality::Text) {
            row = encode_text_passage(enc, featurize_text(featurizer, doc.body));
        } else {
            const std::string* caption = &doc.body;
            if (expansion) {
                auto it = expansion->find(doc.id);
                if (it != expansion->end()) caption = &it->second;
            }
            row = encode_image(enc, doc.image_features, featurize_text(featurizer, *caption));
        }
        for (std::size_t j = 0; j < row.size(); ++j) table.at(i, j) = row[j];
    }
    return table;
}

namespace {

json head_to_json(const ProjectionHead& head) {
    json j;
    j["rows"] = head.W.rows;
    j["cols"] = head.W.cols;
    j["W"] = head.W.data;
    j["b"] = head.b;
    return j;
}

ProjectionHead head_from_json(const json& j) {
    ProjectionHead head;
    head.W.rows = j.at("rows").get<std::size_t>();
    head.W.cols = j.at("cols").get<std::size_t>();
    head.W.data = j.at("W").get<std::vector<double>>();
    head.b = j.at("b").get<Vec>();
    if (head.W.data.size() != head.W.rows * head.W.cols || head.b.size() != head.W.rows)
        fail("parse", "checkpoint head has inconsistent shapes");
    if (!all_finite(head.W) || !all_finite(head.b))
        fail("validation", "checkpoint head has non-finite entries");
    return head;
}

constexpr int kCheckpointVersion = 1;

} // namespace

void save_checkpoint(const UniversalEncoder& enc, const std::filesystem::path& path) {
    json j;
    j["format"] = "uniret-checkpoint";
    j["version"] = kCheckpointVersion;
    j["d"] = enc.out_dim();
    j["d_txt"] = enc.text_dim();
    j["d_img"] = enc.image_dim();
    j["init_seed"] = enc.init_seed;
    j["text_head"] = head_to_json(enc.text_head);
    j["image_head"] = head_to_json(enc.image_head);
    write_text_file(path, j.dump(2) + "\n");
}

UniversalEncoder load_checkpoint(const std::filesystem::path& path) {
    json j = load_json(path);
    try {
        if (j.at("format").get<std::string>() != "uniret-checkpoint")
            fail("parse", path.string() + ": not a checkpoint file");
        if (j.at("version").get<int>() != kCheckpointVersion)
            fail("parse", path.string() + ": unsupported checkpoint version");
        UniversalEncoder enc;
        enc.text_head = head_from_json(j.at("text_head"));
        enc.image_head = head_from_json(j.at("image_head"));
        enc.init_seed = j.at("init_seed").get<std::uint64_t>();
        if (enc.text_head.W.rows != j.at("d").get<std::size_t>() ||
            enc.image_head.W.rows != enc.text_head.W.rows)
            fail("parse", path.string() + ": head output dimensions disagree");
        if (enc.text_head.W.cols != j.at("d_txt").get<std::size_t>() ||
            enc.image_head.W.cols != j.at("d_img").get<std::size_t>())
            fail("parse", path.string() + ": head input dimensions disagree");
        return enc;
    } catch (const json::exception& e) {
        fail("parse", path.string() + ": " + e.what());
    }
}

} // namespace uniret
