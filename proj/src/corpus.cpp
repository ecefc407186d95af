#include "uniret/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "uniret/jsonio.hpp"
#include "uniret/rng.hpp"

namespace uniret {

std::string to_string(Modality m) {
    return m == Modality::Text ? "text" : "image";
}

Modality modality_from_string(const std::string& s) {
    if (s == "text") return Modality::Text;
    if (s == "image") return Modality::Image;
    fail("parse", "unknown modality \"" + s + "\" (expected \"text\" or \"image\")");
}

Corpus::Corpus(std::vector<SourceDoc> docs, std::size_t d_img)
    : docs_(std::move(docs)), d_img_(d_img) {
    id_to_row_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        auto [it, inserted] = id_to_row_.emplace(docs_[i].id, i);
        if (!inserted) fail("duplicate-id", "doc id \"" + docs_[i].id + "\" appears more than once");
    }
}

const SourceDoc* Corpus::find(const std::string& id) const {
    auto it = id_to_row_.find(id);
    return it == id_to_row_.end() ? nullptr : &docs_[it->second];
}

namespace {

SourceDoc parse_doc(const json& j, const std::filesystem::path& path, std::size_t line_no,
                    std::size_t& d_img) {
    auto where = [&] { return path.string() + " line " + std::to_string(line_no); };
    SourceDoc doc;
    try {
        doc.id = j.at("id").get<std::string>();
        doc.modality = modality_from_string(j.at("modality").get<std::string>());
        doc.body = j.value("body", std::string());
        if (j.contains("object_tags")) doc.object_tags = j.at("object_tags").get<std::vector<std::string>>();
        if (j.contains("image_features")) doc.image_features = j.at("image_features").get<Vec>();
    } catch (const json::exception& e) {
        fail("parse", where() + ": " + e.what());
    }

    if (doc.modality == Modality::Text) {
        if (!doc.image_features.empty())
            fail("validation", where() + ": text doc \"" + doc.id + "\" carries image_features");
        if (!doc.object_tags.empty())
            fail("validation", where() + ": text doc \"" + doc.id + "\" carries object_tags");
        if (doc.body.empty())
            fail("validation", where() + ": text doc \"" + doc.id + "\" has empty body");
    } else {
        if (doc.image_features.empty())
            fail("validation", where() + ": image doc \"" + doc.id + "\" lacks image_features");
        if (!all_finite(doc.image_features))
            fail("validation", where() + ": image doc \"" + doc.id + "\" has non-finite features");
        if (d_img == 0) d_img = doc.image_features.size();
        if (doc.image_features.size() != d_img)
            fail("dimension-mismatch", where() + ": image doc \"" + doc.id + "\" has " +
                                           std::to_string(doc.image_features.size()) +
                                           " features, expected " + std::to_string(d_img));
    }
    return doc;
}

} // namespace

Corpus load_corpus(const std::filesystem::path& path) {
    std::vector<SourceDoc> docs;
    std::unordered_set<std::string> seen;
    std::size_t d_img = 0;
    for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
        SourceDoc doc = parse_doc(j, path, line_no, d_img);
        if (!seen.insert(doc.id).second)
            fail("duplicate-id", path.string() + " line " + std::to_string(line_no) +
                                     ": doc id \"" + doc.id + "\" appears more than once");
        docs.push_back(std::move(doc));
    });
    return Corpus(std::move(docs), d_img);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::string out;
    for (const SourceDoc& doc : corpus.docs()) {
        json j;
        j["id"] = doc.id;
        j["modality"] = to_string(doc.modality);
        j["body"] = doc.body;
        if (doc.modality == Modality::Image) {
            j["image_features"] = doc.image_features;
            if (!doc.object_tags.empty()) j["object_tags"] = doc.object_tags;
        }
        out += j.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

namespace {

Query parse_query(const json& j, const std::filesystem::path& path, std::size_t line_no) {
    auto where = [&] { return path.string() + " line " + std::to_string(line_no); };
    Query q;
    try {
        q.id = j.at("id").get<std::string>();
        q.text = j.at("text").get<std::string>();
        std::vector<std::string> raw = j.at("relevant_ids").get<std::vector<std::string>>();
        std::unordered_set<std::string> seen;
        for (std::string& id : raw)
            if (seen.insert(id).second) q.relevant_ids.push_back(std::move(id));
        if (j.contains("answer_modality") && !j.at("answer_modality").is_null())
            q.answer_modality = modality_from_string(j.at("answer_modality").get<std::string>());
    } catch (const json::exception& e) {
        fail("parse", where() + ": " + e.what());
    }
    if (q.relevant_ids.empty())
        fail("validation", where() + ": query \"" + q.id + "\" has no relevant_ids");
    return q;
}

} // namespace

void validate_queries(const std::vector<Query>& queries, const Corpus& corpus) {
    std::unordered_set<std::string> seen;
    for (const Query& q : queries) {
        if (!seen.insert(q.id).second)
            fail("duplicate-id", "query id \"" + q.id + "\" appears more than once");
        if (q.relevant_ids.empty())
            fail("validation", "query \"" + q.id + "\" has no relevant_ids");
        for (const std::string& rid : q.relevant_ids) {
            const SourceDoc* doc = corpus.find(rid);
            if (!doc)
                fail("unresolved-qrel",
                     "query \"" + q.id + "\" references missing doc \"" + rid + "\"");
            if (q.answer_modality && doc->modality != *q.answer_modality)
                fail("validation", "query \"" + q.id + "\" is annotated " +
                                       to_string(*q.answer_modality) + " but relevant doc \"" +
                                       rid + "\" is " + to_string(doc->modality));
        }
    }
}

std::vector<Query> load_queries(const std::filesystem::path& path, const Corpus& corpus) {
    std::vector<Query> queries;
    for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
        queries.push_back(parse_query(j, path, line_no));
    });
    validate_queries(queries, corpus);
    return queries;
}

void save_queries(const std::vector<Query>& queries, const std::filesystem::path& path) {
    std::string out;
    for (const Query& q : queries) {
        json j;
        j["id"] = q.id;
        j["text"] = q.text;
        j["relevant_ids"] = q.relevant_ids;
        if (q.answer_modality) j["answer_modality"] = to_string(*q.answer_modality);
        out += j.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

namespace {

// Fixture vocabulary layout. Topic tokens tie text queries to their relevant
// passages, group tokens tie image queries to a planted feature direction,
// rare tokens are unique per query and pin down the exact relevant doc.
constexpr std::size_t kCommonVocab = 180;
constexpr std::size_t kTopics = 16;
constexpr std::size_t kGroups = 12;
constexpr std::size_t kSubLevels = 3; // subtopics per topic, subgroups per group
constexpr double kFeatureScale = 2.0;
constexpr double kFeatureNoise = 0.12;

std::string common_token(std::size_t i) { return "w" + std::to_string(i); }
std::string topic_token(std::size_t i) { return "top" + std::to_string(i); }
std::string group_token(std::size_t i) { return "grp" + std::to_string(i); }

// The sub-level vocabulary is asymmetric: queries and docs use different
// token surfaces for the same latent subtopic, so the pairing contributes
// nothing lexically and must be learned. Query/doc vocabulary mismatch is
// what makes fine-grained negatives informative.
std::string doc_subtopic_token(std::size_t topic, std::size_t s) {
    return "stp" + std::to_string(topic) + "x" + std::to_string(s);
}
std::string query_subtopic_token(std::size_t topic, std::size_t s) {
    return "qst" + std::to_string(topic) + "x" + std::to_string(s);
}
std::string doc_subgroup_token(std::size_t group, std::size_t s) {
    return "sgr" + std::to_string(group) + "x" + std::to_string(s);
}
std::string query_subgroup_token(std::size_t group, std::size_t s) {
    return "qsg" + std::to_string(group) + "x" + std::to_string(s);
}

std::string pad4(std::size_t n) {
    std::string s = std::to_string(n);
    while (s.size() < 4) s.insert(s.begin(), '0');
    return s;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) s += ' ';
        s += tokens[i];
    }
    return s;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> draw_common(RngStream& rng, std::size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(common_token(rng.uniform_int(kCommonVocab)));
    return out;
}

void insert_at_random_positions(std::vector<std::string>& body,
                                const std::vector<std::string>& extra, RngStream& rng) {
    for (const std::string& tok : extra) {
        std::size_t pos = rng.uniform_int(body.size() + 1);
        body.insert(body.begin() + static_cast<std::ptrdiff_t>(pos), tok);
    }
}

} // namespace

std::pair<Corpus, std::vector<Query>> generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_text < 1 || spec.n_image < 1 || spec.n_queries < 1)
        fail("validation", "synthetic counts must be >= 1");
    if (spec.image_query_fraction < 0.0 || spec.image_query_fraction > 1.0)
        fail("validation", "image_query_fraction must be in [0,1]");
    if (spec.d_img < 1) fail("validation", "d_img must be >= 1");

    std::size_t n_image_q =
        static_cast<std::size_t>(std::llround(spec.image_query_fraction * spec.n_queries));
    std::size_t n_text_q = spec.n_queries - n_image_q;
    if (n_image_q > spec.n_image)
        fail("validation", "need " + std::to_string(n_image_q) + " image docs for image queries");
    if (n_text_q > spec.n_text)
        fail("validation", "need " + std::to_string(n_text_q) + " text docs for text queries");

    RngStream root(spec.seed);

    // Planted feature directions, one unit vector per group.
    RngStream dir_rng = root.fork("directions");
    std::vector<Vec> directions(kGroups);
    for (Vec& u : directions) {
        u.resize(spec.d_img);
        for (double& x : u) x = dir_rng.normal();
        double n = l2_norm(u);
        scale(u, 1.0 / n);
    }

    std::vector<SourceDoc> docs;
    docs.reserve(spec.n_text + spec.n_image);
    std::vector<std::size_t> text_topic(spec.n_text), image_group(spec.n_image);
    std::vector<std::size_t> text_subtopic(spec.n_text), image_subgroup(spec.n_image);

    RngStream text_rng = root.fork("text-docs");
    for (std::size_t i = 0; i < spec.n_text; ++i) {
        std::size_t topic = text_rng.uniform_int(kTopics);
        std::size_t sub = text_rng.uniform_int(kSubLevels);
        text_topic[i] = topic;
        text_subtopic[i] = sub;
        std::vector<std::string> body = draw_common(text_rng, 15 + text_rng.uniform_int(16));
        std::vector<std::string> planted{topic_token(topic), topic_token(topic)};
        for (int rep = 0; rep < 3; ++rep) planted.push_back(doc_subtopic_token(topic, sub));
        insert_at_random_positions(body, planted, text_rng);
        SourceDoc doc;
        doc.id = "txt" + pad4(i);
        doc.modality = Modality::Text;
        doc.body = join_tokens(body);
        docs.push_back(std::move(doc));
    }

    RngStream img_rng = root.fork("image-docs");
    for (std::size_t i = 0; i < spec.n_image; ++i) {
        std::size_t group = img_rng.uniform_int(kGroups);
        std::size_t sub = img_rng.uniform_int(kSubLevels);
        image_group[i] = group;
        image_subgroup[i] = sub;
        SourceDoc doc;
        doc.id = "img" + pad4(i);
        doc.modality = Modality::Image;
        std::vector<std::string> caption = draw_common(img_rng, 2 + img_rng.uniform_int(23));
        std::vector<std::string> planted{group_token(group), group_token(group)};
        for (int rep = 0; rep < 3; ++rep) planted.push_back(doc_subgroup_token(group, sub));
        insert_at_random_positions(caption, planted, img_rng);
        doc.body = join_tokens(caption);
        doc.object_tags = draw_common(img_rng, 2);
        doc.image_features.resize(spec.d_img);
        for (std::size_t d = 0; d < spec.d_img; ++d)
            doc.image_features[d] =
                kFeatureScale * directions[group][d] + kFeatureNoise * img_rng.normal();
        docs.push_back(std::move(doc));
    }

    // Spread answer modalities across query indices so prefix splits stay mixed.
    std::vector<char> is_image_query(spec.n_queries, 0);
    for (std::size_t i = 0; i < n_image_q; ++i) is_image_query[i] = 1;
    RngStream assign_rng = root.fork("query-modality");
    assign_rng.shuffle(is_image_query);

    // Each query gets its own relevant doc, drawn without replacement.
    std::vector<std::size_t> text_order(spec.n_text), image_order(spec.n_image);
    for (std::size_t i = 0; i < spec.n_text; ++i) text_order[i] = i;
    for (std::size_t i = 0; i < spec.n_image; ++i) image_order[i] = i;
    RngStream pick_rng = root.fork("query-targets");
    pick_rng.shuffle(text_order);
    pick_rng.shuffle(image_order);

    std::vector<Query> queries;
    queries.reserve(spec.n_queries);
    RngStream q_rng = root.fork("queries");
    std::size_t next_text = 0, next_image = 0;
    for (std::size_t qi = 0; qi < spec.n_queries; ++qi) {
        std::size_t n_rare = 2 + q_rng.uniform_int(3);
        std::vector<std::string> rare;
        for (std::size_t r = 0; r < n_rare; ++r)
            rare.push_back("qt" + std::to_string(qi) + "x" + std::to_string(r));

        Query q;
        q.id = "q" + pad4(qi);
        std::vector<std::string> text = draw_common(q_rng, 2 + q_rng.uniform_int(2));

        if (is_image_query[qi]) {
            std::size_t doc_row = spec.n_text + image_order[next_image++];
            SourceDoc& doc = docs[doc_row];
            std::vector<std::string> caption = split_ws(doc.body);
            insert_at_random_positions(caption, rare, q_rng);
            doc.body = join_tokens(caption);
            doc.object_tags.insert(doc.object_tags.begin(), rare.begin(), rare.end());
            // Doubled so the modality-routing token carries real weight.
            std::size_t g = image_group[doc_row - spec.n_text];
            text.push_back(group_token(g));
            text.push_back(group_token(g));
            text.push_back(query_subgroup_token(g, image_subgroup[doc_row - spec.n_text]));
            text.push_back(query_subgroup_token(g, image_subgroup[doc_row - spec.n_text]));
            q.answer_modality = Modality::Image;
            q.relevant_ids = {doc.id};
        } else {
            std::size_t doc_row = text_order[next_text++];
            SourceDoc& doc = docs[doc_row];
            std::vector<std::string> body = split_ws(doc.body);
            insert_at_random_positions(body, rare, q_rng);
            doc.body = join_tokens(body);
            text.push_back(topic_token(text_topic[doc_row]));
            text.push_back(topic_token(text_topic[doc_row]));
            text.push_back(query_subtopic_token(text_topic[doc_row], text_subtopic[doc_row]));
            text.push_back(query_subtopic_token(text_topic[doc_row], text_subtopic[doc_row]));
            q.answer_modality = Modality::Text;
            q.relevant_ids = {doc.id};
        }
        text.insert(text.end(), rare.begin(), rare.end());
        q_rng.shuffle(text);
        q.text = join_tokens(text);
        queries.push_back(std::move(q));
    }

    Corpus corpus(std::move(docs), spec.d_img);
    validate_queries(queries, corpus);
    return {std::move(corpus), std::move(queries)};
}

} // namespace uniret
