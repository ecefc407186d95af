#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "uniret/encoder.hpp"
#include "uniret/error.hpp"
#include "uniret/jsonio.hpp"
#include "uniret/rng.hpp"

using namespace uniret;

namespace {

Vec random_vec(RngStream& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vec v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

UniversalEncoder identity_text_encoder(std::size_t d, std::size_t d_img) {
    UniversalEncoder enc = make_encoder(d, d, d_img, 0);
    enc.text_head.W = Mat(d, d);
    for (std::size_t i = 0; i < d; ++i) enc.text_head.W.at(i, i) = 1.0;
    enc.text_head.b = Vec(d, 0.0);
    return enc;
}

} // namespace

TEST_CASE("identity head returns its input") {
    UniversalEncoder enc = identity_text_encoder(8, 4);
    RngStream rng(5);
    Vec x = random_vec(rng, 8);
    CHECK(encode_query(enc, x) == x);
    CHECK(encode_query(enc, Vec(8, 0.0)) == Vec(8, 0.0));
}

TEST_CASE("encode_query matches a naive dot-product oracle") {
    UniversalEncoder enc = make_encoder(16, 32, 8, 99);
    RngStream rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        Vec x = random_vec(rng, 32);
        Vec got = encode_query(enc, x);
        REQUIRE(got.size() == 16);
        for (std::size_t i = 0; i < 16; ++i) {
            double expect = enc.text_head.b[i];
            for (std::size_t j = 0; j < 32; ++j) expect += enc.text_head.W.at(i, j) * x[j];
            CHECK(got[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("queries and passages share one text head") {
    UniversalEncoder enc = make_encoder(16, 32, 8, 7);
    RngStream rng(2);
    Vec x = random_vec(rng, 32);
    CHECK(encode_query(enc, x) == encode_text_passage(enc, x));
}

TEST_CASE("dimension mismatches are rejected") {
    UniversalEncoder enc = make_encoder(16, 32, 8, 7);
    CHECK_THROWS_AS(encode_query(enc, Vec(31, 0.0)), Error);
    CHECK_THROWS_AS(encode_image(enc, Vec(7, 0.0), Vec(32, 0.0)), Error);
    CHECK_THROWS_AS(encode_image(enc, Vec(8, 0.0), Vec(31, 0.0)), Error);
}

TEST_CASE("image encoding is the sum of the two tower outputs") {
    UniversalEncoder enc = make_encoder(12, 24, 6, 31);
    RngStream rng(4);
    Vec pix = random_vec(rng, 6);
    Vec cap = random_vec(rng, 24);

    Vec sum = encode_image(enc, pix, cap);
    Vec pix_only = encode_image(enc, pix, Vec(24, 0.0)); // text bias still applies
    Vec cap_only = encode_image(enc, Vec(6, 0.0), cap);
    // Eq-sum decomposition: both single-tower calls double-count the biases.
    for (std::size_t i = 0; i < sum.size(); ++i) {
        double expect =
            pix_only[i] + cap_only[i] - enc.text_head.b[i] - enc.image_head.b[i];
        CHECK(sum[i] == doctest::Approx(expect).epsilon(1e-9));
    }

    // With zero biases, zero pixels degenerate to the text tower alone.
    enc.text_head.b = Vec(12, 0.0);
    enc.image_head.b = Vec(12, 0.0);
    CHECK(encode_image(enc, Vec(6, 0.0), cap) == encode_text_passage(enc, cap));
}

TEST_CASE("linearity holds for bias-free heads") {
    UniversalEncoder enc = make_encoder(10, 20, 5, 17);
    enc.text_head.b = Vec(10, 0.0);
    RngStream rng(8);
    Vec x = random_vec(rng, 20), y = random_vec(rng, 20);
    double alpha = 0.7, beta = -1.3;
    Vec combo(20);
    for (std::size_t j = 0; j < 20; ++j) combo[j] = alpha * x[j] + beta * y[j];
    Vec lhs = encode_query(enc, combo);
    Vec ex = encode_query(enc, x), ey = encode_query(enc, y);
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(lhs[i] == doctest::Approx(alpha * ex[i] + beta * ey[i]).epsilon(1e-9));
}

TEST_CASE("encode_corpus rows match per-doc encoding calls") {
    TextFeaturizer f{64, 2, 77};
    UniversalEncoder enc = make_encoder(16, 64, 3, 5);
    std::vector<SourceDoc> docs;
    docs.push_back({"t1", Modality::Text, "alpha beta gamma", {}, {}});
    docs.push_back({"i1", Modality::Image, "a dog outside", {0.5, -1.0, 2.0}, {"dog"}});
    docs.push_back({"t2", Modality::Text, "delta", {}, {}});
    Corpus corpus(std::move(docs), 3);

    Mat table = encode_corpus(enc, corpus, f);
    REQUIRE(table.rows == 3);

    Vec r0 = encode_text_passage(enc, featurize_text(f, "alpha beta gamma"));
    Vec r1 = encode_image(enc, {0.5, -1.0, 2.0}, featurize_text(f, "a dog outside"));
    Vec r2 = encode_text_passage(enc, featurize_text(f, "delta"));
    for (std::size_t j = 0; j < 16; ++j) {
        CHECK(table.at(0, j) == r0[j]);
        CHECK(table.at(1, j) == r1[j]);
        CHECK(table.at(2, j) == r2[j]);
    }
}

TEST_CASE("encode_corpus applies the expansion map to image captions only") {
    TextFeaturizer f{64, 2, 77};
    UniversalEncoder enc = make_encoder(16, 64, 3, 5);
    std::vector<SourceDoc> docs;
    docs.push_back({"i1", Modality::Image, "a dog", {0.5, -1.0, 2.0}, {}});
    Corpus corpus(std::move(docs), 3);

    Mat plain = encode_corpus(enc, corpus, f);
    ExpansionMap expansion{{"i1", "a dog [SEP] an image containing leash"}};
    Mat expanded = encode_corpus(enc, corpus, f, &expansion);
    CHECK(plain.data != expanded.data);

    // Expansion that featurizes identically leaves the row unchanged.
    ExpansionMap same{{"i1", "A DOG!"}};
    Mat same_row = encode_corpus(enc, corpus, f, &same);
    CHECK(plain.data == same_row.data);

    ExpansionMap unknown{{"zz", "nope"}};
    CHECK_THROWS_AS(encode_corpus(enc, corpus, f, &unknown), Error);
}

TEST_CASE("checkpoints are byte-stable across save/load") {
    UniversalEncoder enc = make_encoder(8, 16, 4, 2024);
    auto p1 = std::filesystem::temp_directory_path() / "uniret_test_ckpt1.json";
    auto p2 = std::filesystem::temp_directory_path() / "uniret_test_ckpt2.json";
    save_checkpoint(enc, p1);
    UniversalEncoder loaded = load_checkpoint(p1);
    CHECK(loaded.text_head.W.data == enc.text_head.W.data);
    CHECK(loaded.image_head.W.data == enc.image_head.W.data);
    CHECK(loaded.init_seed == enc.init_seed);
    save_checkpoint(loaded, p2);
    CHECK(read_text_file(p1) == read_text_file(p2));
}

TEST_CASE("fresh encoders are seeded and reproducible") {
    UniversalEncoder a = make_encoder(8, 16, 4, 42);
    UniversalEncoder b = make_encoder(8, 16, 4, 42);
    UniversalEncoder c = make_encoder(8, 16, 4, 43);
    CHECK(a.text_head.W.data == b.text_head.W.data);
    CHECK(a.text_head.W.data != c.text_head.W.data);
    CHECK(a.text_head.b == Vec(8, 0.0));
    double bound = 1.0 / std::sqrt(16.0);
    for (double w : a.text_head.W.data) {
        CHECK(w >= -bound);
        CHECK(w <= bound);
    }
}
