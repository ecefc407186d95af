#include "uniret/verbalize.hpp"

#include <algorithm>

namespace uniret {

VerbalizationInput build_verbalization_input(const SourceDoc& doc, VerbalizationMode mode,
                                             const Query* related_query) {
    if (doc.modality != Modality::Image)
        fail("validation", "verbalization inputs are built from image docs, got \"" + doc.id + "\"");
    VerbalizationInput input;
    input.image_id = doc.id;
    input.mode = mode;
    using K = InputSegment::Kind;
    input.layout.push_back({K::Cls, {}});
    if (mode == VerbalizationMode::CaptionStyle) {
        input.layout.push_back({K::Text, doc.body});
        input.layout.push_back({K::Sep, {}});
        for (const std::string& tag : doc.object_tags) input.layout.push_back({K::Tag, tag});
    } else {
        if (!related_query)
            fail("validation", "query-style verbalization input needs a related query");
        input.layout.push_back({K::Text, related_query->text});
        input.layout.push_back({K::Sep, {}});
        input.layout.push_back({K::Text, doc.body});
    }
    input.layout.push_back({K::Sep, {}});
    input.layout.push_back({K::FeatureRef, {}});
    return input;
}

json verbalization_input_to_json(const VerbalizationInput& input) {
    json segments = json::array();
    for (const InputSegment& seg : input.layout) {
        switch (seg.kind) {
            case InputSegment::Kind::Cls: segments.push_back(json{{"kind", "cls"}}); break;
            case InputSegment::Kind::Sep: segments.push_back(json{{"kind", "sep"}}); break;
            case InputSegment::Kind::Text:
                segments.push_back(json{{"kind", "text"}, {"text", seg.text}});
                break;
            case InputSegment::Kind::Tag:
                segments.push_back(json{{"kind", "tag"}, {"text", seg.text}});
                break;
            case InputSegment::Kind::FeatureRef:
                segments.push_back(json{{"kind", "features"}, {"ref", input.image_id}});
                break;
        }
    }
    return json{{"image_id", input.image_id},
                {"mode", input.mode == VerbalizationMode::CaptionStyle ? "caption" : "query"},
                {"segments", segments}};
}

Verbalization template_verbalize(const SourceDoc& doc) {
    if (doc.modality != Modality::Image)
        fail("validation", "template verbalization needs an image doc, got \"" + doc.id + "\"");
    std::vector<std::string> tags = doc.object_tags;
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());

    Verbalization v;
    v.image_id = doc.id;
    v.provenance = Provenance::Template;
    if (tags.empty()) {
        v.text = "an image";
        return v;
    }
    v.text = "an image containing ";
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (i > 0) v.text += (i + 1 == tags.size()) ? " and " : ", ";
        v.text += tags[i];
    }
    return v;
}

std::unordered_map<std::string, Verbalization> load_external_verbalizations(
    const std::filesystem::path& path, const Corpus* corpus,
    std::vector<std::string>* warnings) {
    std::unordered_map<std::string, Verbalization> out;
    for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
        Verbalization v;
        try {
            v.image_id = j.at("image_id").get<std::string>();
            v.text = j.at("text").get<std::string>();
        } catch (const json::exception& e) {
            fail("parse", path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
        v.provenance = Provenance::External;
        if (corpus) {
            const SourceDoc* doc = corpus->find(v.image_id);
            if (!doc)
                fail("unknown-id", path.string() + " line " + std::to_string(line_no) +
                                       ": image \"" + v.image_id + "\" not in corpus");
            if (doc->modality != Modality::Image)
                fail("validation", path.string() + " line " + std::to_string(line_no) + ": doc \"" +
                                       v.image_id + "\" is not an image");
        }
        auto [it, inserted] = out.emplace(v.image_id, v);
        if (!inserted) {
            if (warnings)
                warnings->push_back("duplicate verbalization for \"" + v.image_id +
                                    "\" at line " + std::to_string(line_no) + "; last wins");
            it->second = v;
        }
    });
    return out;
}

void save_verbalizations(const std::vector<Verbalization>& verbs,
                         const std::filesystem::path& path, const std::string& mode) {
    std::string out;
    for (const Verbalization& v : verbs) {
        json j{{"image_id", v.image_id}, {"text", v.text}, {"mode", mode}};
        out += j.dump();
        out += '\n';
    }
    write_text_file(path, out);
}

std::string expand_caption(const std::string& caption, const Verbalization& v, bool force) {
    if (!force && caption.find("[SEP]") != std::string::npos)
        fail("already-expanded",
             "caption already contains [SEP]; refusing to expand twice without force");
    if (caption.empty()) return "[SEP] " + v.text;
    return caption + " [SEP] " + v.text;
}

ExpansionMap build_expansion_map(const Corpus& corpus,
                                 const std::unordered_map<std::string, Verbalization>& verbs,
                                 bool force) {
    ExpansionMap map;
    for (const auto& [id, v] : verbs) {
        const SourceDoc* doc = corpus.find(id);
        if (!doc) fail("unknown-id", "verbalization references missing doc \"" + id + "\"");
        if (doc->modality != Modality::Image)
            fail("validation", "verbalization references non-image doc \"" + id + "\"");
        map.emplace(id, expand_caption(doc->body, v, force));
    }
    return map;
}

ExpansionMap template_expansion_map(const Corpus& corpus, bool force) {
    ExpansionMap map;
    for (const SourceDoc& doc : corpus.docs()) {
        if (doc.modality != Modality::Image) continue;
        map.emplace(doc.id, expand_caption(doc.body, template_verbalize(doc), force));
    }
    return map;
}

} // namespace uniret
