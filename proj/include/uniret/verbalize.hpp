#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "uniret/corpus.hpp"
#include "uniret/encoder.hpp"
#include "uniret/jsonio.hpp"

namespace uniret {

enum class VerbalizationMode { CaptionStyle, QueryStyle };

/// One ordered piece of a generator input: the [CLS]/[SEP] markers, a text
/// span, one object tag, or a reference to the doc's image features (features
/// are referenced, never inlined).
struct InputSegment {
    enum class Kind { Cls, Sep, Text, Tag, FeatureRef };
    Kind kind;
    std::string text; // Text/Tag payload
};

/// Serialized input for an external verbalization generator. CaptionStyle
/// lays out [CLS]; caption; [SEP]; tags...; [SEP]; features. QueryStyle lays
/// out [CLS]; query; [SEP]; caption; [SEP]; features.
struct VerbalizationInput {
    std::string image_id;
    VerbalizationMode mode;
    std::vector<InputSegment> layout;
};

enum class Provenance { Template, External };

struct Verbalization {
    std::string image_id;
    std::string text;
    Provenance provenance = Provenance::Template;
};

VerbalizationInput build_verbalization_input(const SourceDoc& doc, VerbalizationMode mode,
                                             const Query* related_query = nullptr);

json verbalization_input_to_json(const VerbalizationInput& input);

/// Deterministic generator stand-in: "an image containing a, b and c" from
/// the sorted, deduplicated object tags; "an image" when there are none.
Verbalization template_verbalize(const SourceDoc& doc);

/// JSONL records {image_id, text, mode?}. Duplicate ids: last wins, with a
/// warning collected into `warnings`. When a corpus is supplied, ids must
/// resolve to image docs in it.
std::unordered_map<std::string, Verbalization> load_external_verbalizations(
    const std::filesystem::path& path, const Corpus* corpus = nullptr,
    std::vector<std::string>* warnings = nullptr);

void save_verbalizations(const std::vector<Verbalization>& verbs,
                         const std::filesystem::path& path, const std::string& mode);

/// Caption expansion: caption + " [SEP] " + verbalization text ("[SEP] ..."
/// when the caption is empty). A caption that already contains the separator
/// token is rejected unless force is set; double expansion is never silent.
std::string expand_caption(const std::string& caption, const Verbalization& v, bool force = false);

/// Apply expansion across a corpus: image doc id -> reformulated caption.
ExpansionMap build_expansion_map(const Corpus& corpus,
                                 const std::unordered_map<std::string, Verbalization>& verbs,
                                 bool force = false);

/// Expansion map from the deterministic template, covering every image doc.
ExpansionMap template_expansion_map(const Corpus& corpus, bool force = false);

} // namespace uniret
