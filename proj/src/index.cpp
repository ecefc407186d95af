#include "uniret/index.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "uniret/jsonio.hpp"

namespace uniret {

DenseIndex DenseIndex::build(const Mat& embeddings, std::vector<std::string> ids,
                             std::vector<Modality> modalities) {
    if (ids.size() != embeddings.rows || modalities.size() != embeddings.rows)
        fail("validation", "index inputs disagree on row count");
    if (!all_finite(embeddings)) fail("validation", "index embeddings contain NaN/Inf");

    std::unordered_set<std::string> seen;
    for (const std::string& id : ids)
        if (!seen.insert(id).second)
            fail("duplicate-id", "index id \"" + id + "\" appears more than once");

    DenseIndex index;
    index.rows_ = embeddings;
    index.ids_ = std::move(ids);
    index.modalities_ = std::move(modalities);
    for (std::size_t i = 0; i < index.rows_.rows; ++i) {
        double* row = index.rows_.row(i);
        double norm = 0.0;
        for (std::size_t j = 0; j < index.rows_.cols; ++j) norm += row[j] * row[j];
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            index.zero_rows_.insert(i);
        } else {
            for (std::size_t j = 0; j < index.rows_.cols; ++j) row[j] /= norm;
        }
    }
    return index;
}

RankedList DenseIndex::top_k(const Vec& query_emb, std::size_t k,
                             std::optional<Modality> filter, const std::string& query_id) const {
    if (k < 1) fail("validation", "search K must be >= 1");
    if (query_emb.size() != rows_.cols)
        fail("dimension-mismatch", "query embedding has " + std::to_string(query_emb.size()) +
                                       " entries, index dimension is " +
                                       std::to_string(rows_.cols));
    double qnorm = l2_norm(query_emb);
    if (qnorm == 0.0) fail("zero-vector", "query embedding is zero; cosine undefined");

    std::vector<std::size_t> candidates;
    candidates.reserve(rows_.rows);
    std::vector<double> scores(rows_.rows, 0.0);
    for (std::size_t i = 0; i < rows_.rows; ++i) {
        if (filter && modalities_[i] != *filter) continue;
        if (!zero_rows_.count(i)) {
            const double* row = rows_.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < rows_.cols; ++j) s += row[j] * query_emb[j];
            scores[i] = s / qnorm;
        }
        candidates.push_back(i);
    }

    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids_[a] < ids_[b];
    };
    std::size_t take = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), better);
    candidates.resize(take);

    RankedList out;
    out.query_id = query_id;
    out.entries.reserve(take);
    for (std::size_t i : candidates)
        out.entries.push_back({ids_[i], scores[i], modalities_[i]});
    return out;
}

RankedList DenseIndex::search(const Vec& query_emb, std::size_t k,
                              const std::string& query_id) const {
    return top_k(query_emb, k, std::nullopt, query_id);
}

RankedList DenseIndex::search_filtered(const Vec& query_emb, std::size_t k, Modality modality,
                                       const std::string& query_id) const {
    return top_k(query_emb, k, modality, query_id);
}

namespace {
constexpr int kIndexVersion = 1;
}

void DenseIndex::save(const std::filesystem::path& path) const {
    json j;
    j["format"] = "uniret-index";
    j["version"] = kIndexVersion;
    j["n"] = rows_.rows;
    j["d"] = rows_.cols;
    j["rows"] = rows_.data;
    j["ids"] = ids_;
    std::vector<std::string> mods;
    mods.reserve(modalities_.size());
    for (Modality m : modalities_) mods.push_back(to_string(m));
    j["modalities"] = mods;
    std::vector<std::size_t> zeros(zero_rows_.begin(), zero_rows_.end());
    std::sort(zeros.begin(), zeros.end());
    j["zero_rows"] = zeros;
    write_text_file(path, j.dump() + "\n");
}

DenseIndex DenseIndex::load(const std::filesystem::path& path) {
    json j = load_json(path);
    try {
        if (j.at("format").get<std::string>() != "uniret-index")
            fail("parse", path.string() + ": not an index snapshot");
        if (j.at("version").get<int>() != kIndexVersion)
            fail("parse", path.string() + ": unsupported index version");
        DenseIndex index;
        index.rows_.rows = j.at("n").get<std::size_t>();
        index.rows_.cols = j.at("d").get<std::size_t>();
        index.rows_.data = j.at("rows").get<std::vector<double>>();
        index.ids_ = j.at("ids").get<std::vector<std::string>>();
        for (const auto& m : j.at("modalities"))
            index.modalities_.push_back(modality_from_string(m.get<std::string>()));
        for (const auto& z : j.at("zero_rows"))
            index.zero_rows_.insert(z.get<std::size_t>());
        if (index.rows_.data.size() != index.rows_.rows * index.rows_.cols ||
            index.ids_.size() != index.rows_.rows ||
            index.modalities_.size() != index.rows_.rows)
            fail("parse", path.string() + ": inconsistent index shapes");
        return index;
    } catch (const json::exception& e) {
        fail("parse", path.string() + ": " + e.what());
    }
}

void DenseIndex::export_embeddings(const std::filesystem::path& path) const {
    std::string out;
    for (std::size_t i = 0; i < rows_.rows; ++i) {
        json j;
        j["id"] = ids_[i];
        j["modality"] = to_string(modalities_[i]);
        j["vector"] = std::vector<double>(rows_.row(i), rows_.row(i) + rows_.cols);
        out += j.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

} // namespace uniret
