#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "uniret/error.hpp"
#include "uniret/featurizer.hpp"
#include "uniret/verbalize.hpp"

using namespace uniret;
namespace fs = std::filesystem;

namespace {

SourceDoc image_doc(std::string id, std::string caption, std::vector<std::string> tags) {
    return {std::move(id), Modality::Image, std::move(caption), {1.0, 2.0}, std::move(tags)};
}

fs::path temp_file(const std::string& name, const std::string& content) {
    fs::path path = fs::temp_directory_path() / ("uniret_verb_" + name);
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

} // namespace

TEST_CASE("caption-style input follows [CLS]; C; [SEP]; tags; [SEP]; features") {
    SourceDoc doc = image_doc("img1", "a b", {"x", "y"});
    VerbalizationInput input = build_verbalization_input(doc, VerbalizationMode::CaptionStyle);
    using K = InputSegment::Kind;
    // [CLS]; "a b"; [SEP]; "x"; "y"; [SEP]; features
    REQUIRE(input.layout.size() == 7);
    CHECK(input.layout[0].kind == K::Cls);
    CHECK(input.layout[1].kind == K::Text);
    CHECK(input.layout[1].text == "a b");
    CHECK(input.layout[2].kind == K::Sep);
    CHECK(input.layout[3].kind == K::Tag);
    CHECK(input.layout[3].text == "x");
    CHECK(input.layout[4].kind == K::Tag);
    CHECK(input.layout[4].text == "y");
    CHECK(input.layout[5].kind == K::Sep);
    CHECK(input.layout[6].kind == K::FeatureRef);

    json j = verbalization_input_to_json(input);
    CHECK(j.at("mode") == "caption");
    CHECK(j.at("segments").back().at("ref") == "img1");
}

TEST_CASE("query-style input follows [CLS]; q; [SEP]; C; [SEP]; features") {
    SourceDoc doc = image_doc("img1", "cap", {});
    Query q{"q1", "q?", {"img1"}, Modality::Image};
    VerbalizationInput input =
        build_verbalization_input(doc, VerbalizationMode::QueryStyle, &q);
    using K = InputSegment::Kind;
    REQUIRE(input.layout.size() == 6);
    CHECK(input.layout[1].text == "q?");
    CHECK(input.layout[3].text == "cap");
    CHECK(input.layout[5].kind == K::FeatureRef);
}

TEST_CASE("query-style without a query and text docs are rejected") {
    SourceDoc doc = image_doc("img1", "cap", {});
    CHECK_THROWS_AS(build_verbalization_input(doc, VerbalizationMode::QueryStyle), Error);
    SourceDoc text{"t1", Modality::Text, "body", {}, {}};
    CHECK_THROWS_AS(build_verbalization_input(text, VerbalizationMode::CaptionStyle), Error);
}

TEST_CASE("template verbalization sorts, deduplicates and joins tags") {
    CHECK(template_verbalize(image_doc("i", "", {"flower", "leaves"})).text ==
          "an image containing flower and leaves");
    CHECK(template_verbalize(image_doc("i", "", {})).text == "an image");
    CHECK(template_verbalize(image_doc("i", "", {"b", "a", "a"})).text ==
          "an image containing a and b");
    CHECK(template_verbalize(image_doc("i", "", {"c", "a", "b"})).text ==
          "an image containing a, b and c");
    CHECK(template_verbalize(image_doc("i", "", {"solo"})).text == "an image containing solo");
    SourceDoc text{"t1", Modality::Text, "body", {}, {}};
    CHECK_THROWS_AS(template_verbalize(text), Error);
}

TEST_CASE("expand_caption concatenates with the [SEP] token") {
    Verbalization v{"i", "new facts", Provenance::Template};
    CHECK(expand_caption("old cap", v) == "old cap [SEP] new facts");
    CHECK(expand_caption("", v) == "[SEP] new facts");
}

TEST_CASE("double expansion is rejected unless forced") {
    Verbalization v{"i", "more", Provenance::Template};
    std::string once = expand_caption("cap", v);
    CHECK_THROWS_AS(expand_caption(once, v), Error);
    CHECK(expand_caption(once, v, true) == "cap [SEP] more [SEP] more");
    // The empty-caption form is detected too.
    CHECK_THROWS_AS(expand_caption(expand_caption("", v), v), Error);
}

TEST_CASE("expansion changes hashed features iff it adds tokens") {
    TextFeaturizer f{128, 2, 77};
    Verbalization adds{"i", "brand new tokens", Provenance::Template};
    std::string cap = "plain caption";
    CHECK(featurize_text(f, expand_caption(cap, adds)) != featurize_text(f, cap));

    // Distinct verbalizations keep distinct features on this vocabulary.
    Verbalization other{"i", "different fresh words", Provenance::Template};
    CHECK(featurize_text(f, expand_caption(cap, adds)) !=
          featurize_text(f, expand_caption(cap, other)));
}

TEST_CASE("external verbalizations load, validate and last-win on duplicates") {
    auto path = temp_file("ext.jsonl",
                          "{\"image_id\":\"img1\",\"text\":\"a purple flower\"}\n"
                          "{\"image_id\":\"img2\",\"text\":\"first\"}\n"
                          "{\"image_id\":\"img2\",\"text\":\"second\",\"mode\":\"caption\"}\n");
    std::vector<std::string> warnings;
    auto verbs = load_external_verbalizations(path, nullptr, &warnings);
    CHECK(verbs.size() == 2);
    CHECK(verbs.at("img1").text == "a purple flower");
    CHECK(verbs.at("img1").provenance == Provenance::External);
    CHECK(verbs.at("img2").text == "second");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("img2") != std::string::npos);

    std::vector<SourceDoc> docs{image_doc("img1", "cap", {})};
    Corpus corpus(std::move(docs), 2);
    CHECK_THROWS_AS(load_external_verbalizations(path, &corpus), Error); // img2 unknown
}

TEST_CASE("expansion maps apply Eq-style concatenation across a corpus") {
    std::vector<SourceDoc> docs;
    docs.push_back(image_doc("img1", "cap one", {"tagb", "taga"}));
    docs.push_back({"t1", Modality::Text, "body", {}, {}});
    Corpus corpus(std::move(docs), 2);

    ExpansionMap templ = template_expansion_map(corpus);
    REQUIRE(templ.size() == 1);
    CHECK(templ.at("img1") == "cap one [SEP] an image containing taga and tagb");

    std::unordered_map<std::string, Verbalization> verbs{
        {"img1", {"img1", "override", Provenance::External}}};
    ExpansionMap ext = build_expansion_map(corpus, verbs);
    CHECK(ext.at("img1") == "cap one [SEP] override");

    std::unordered_map<std::string, Verbalization> bad{
        {"t1", {"t1", "not an image", Provenance::External}}};
    CHECK_THROWS_AS(build_expansion_map(corpus, bad), Error);
}

TEST_CASE("verbalization files round-trip") {
    std::vector<Verbalization> verbs{{"img1", "an image containing cat", Provenance::Template},
                                     {"img2", "an image", Provenance::Template}};
    auto path = fs::temp_directory_path() / "uniret_verb_rt.jsonl";
    save_verbalizations(verbs, path, "template");
    auto loaded = load_external_verbalizations(path);
    CHECK(loaded.size() == 2);
    CHECK(loaded.at("img1").text == "an image containing cat");
}
