#include <doctest.h>

#include <cmath>

#include "uniret/error.hpp"
#include "uniret/rng.hpp"
#include "uniret/training.hpp"

using namespace uniret;

namespace {

Vec random_vec(RngStream& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vec v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

Vec embed(const UniversalEncoder& enc, const CandidateFeatures& c) {
    return c.modality == Modality::Text
               ? encode_text_passage(enc, c.text_features)
               : encode_image(enc, c.pixel_features, c.text_features);
}

// Forward-only loss through the public encode + loss surface; the
// finite-difference oracle below drives this, independent of the analytic
// gradient path.
double forward_loss(const UniversalEncoder& enc, const ResolvedExample& ex, double tau) {
    Vec q = encode_query(enc, ex.query_features);
    Vec pos = embed(enc, ex.positive);
    std::vector<Vec> negs;
    for (const CandidateFeatures& n : ex.negatives) negs.push_back(embed(enc, n));
    return contrastive_loss(q, pos, negs, tau);
}

ResolvedExample random_example(RngStream& rng, std::size_t d_txt, std::size_t d_img,
                               std::size_t n_negatives) {
    ResolvedExample ex;
    ex.query_features = random_vec(rng, d_txt);
    ex.positive = {Modality::Text, random_vec(rng, d_txt), {}};
    for (std::size_t i = 0; i < n_negatives; ++i) {
        if (i % 2 == 0)
            ex.negatives.push_back({Modality::Image, random_vec(rng, d_txt), random_vec(rng, d_img)});
        else
            ex.negatives.push_back({Modality::Text, random_vec(rng, d_txt), {}});
    }
    // Make sure the positive path also exercises the image head sometimes.
    if (n_negatives % 2 == 0)
        ex.positive = {Modality::Image, random_vec(rng, d_txt), random_vec(rng, d_img)};
    return ex;
}

double grad_norm(const EncoderGradients& g) {
    double s = 0.0;
    for (double x : g.text_W.data) s += x * x;
    for (double x : g.text_b) s += x * x;
    for (double x : g.image_W.data) s += x * x;
    for (double x : g.image_b) s += x * x;
    return std::sqrt(s);
}

} // namespace

TEST_CASE("uniform similarities give ln(1+n) exactly") {
    std::vector<double> negs2{0.3, 0.3};
    CHECK(contrastive_loss_sims(0.3, negs2, 0.05) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(std::abs(contrastive_loss_sims(0.3, negs2, 0.05) - 1.0986122886681098) < 1e-12);

    std::vector<double> negs1{-0.4};
    CHECK(contrastive_loss_sims(-0.4, negs1, 1.7) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("dominant positive at tau=0.01 drives the loss to zero") {
    // loss = log(1 + sum exp((f- - f+)/tau)) = log(1 + n * e^-200)
    std::vector<double> negs{-1.0, -1.0, -1.0};
    double loss = contrastive_loss_sims(1.0, negs, 0.01);
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-15);
}

TEST_CASE("loss stays finite and non-negative at tau=0.01 for any |sims| <= 1") {
    RngStream rng(404);
    for (int trial = 0; trial < 500; ++trial) {
        double pos = rng.uniform(-1.0, 1.0);
        std::vector<double> negs(1 + rng.uniform_int(6));
        for (double& s : negs) s = rng.uniform(-1.0, 1.0);
        double loss = contrastive_loss_sims(pos, negs, 0.01);
        CHECK(std::isfinite(loss));
        CHECK(loss >= 0.0);
        // Upper bound: ln(1+n) + (max_f - f+)/tau.
        double max_f = pos;
        for (double s : negs) max_f = std::max(max_f, s);
        CHECK(loss <= std::log(1.0 + negs.size()) + (max_f - pos) / 0.01 + 1e-9);
    }
}

TEST_CASE("temperature rescaling: loss(sims, tau) == loss(sims/c, tau/c) for binary c") {
    RngStream rng(77);
    for (double c : {2.0, 4.0, 0.5}) {
        for (int trial = 0; trial < 100; ++trial) {
            double pos = rng.uniform(-1.0, 1.0);
            std::vector<double> negs(1 + rng.uniform_int(5)), scaled;
            for (double& s : negs) s = rng.uniform(-1.0, 1.0);
            for (double s : negs) scaled.push_back(s / c);
            double tau = rng.uniform(0.01, 1.0);
            CHECK(contrastive_loss_sims(pos, negs, tau) ==
                  contrastive_loss_sims(pos / c, scaled, tau / c));
        }
    }
}

TEST_CASE("loss is -log softmax(positive) and probabilities sum to 1") {
    RngStream rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        double pos = rng.uniform(-1.0, 1.0);
        std::vector<double> negs(1 + rng.uniform_int(6));
        for (double& s : negs) s = rng.uniform(-1.0, 1.0);
        double tau = rng.uniform(0.02, 1.0);
        auto probs = candidate_probabilities(pos, negs, tau);
        REQUIRE(probs.size() == negs.size() + 1);
        double sum = 0.0;
        for (double p : probs) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(contrastive_loss_sims(pos, negs, tau) ==
              doctest::Approx(-std::log(probs[0])).epsilon(1e-9));
    }
}

TEST_CASE("duplicating a negative doubles its softmax weight pre-normalization") {
    double pos = 0.4, neg = 0.1, tau = 0.2;
    std::vector<double> once{neg}, twice{neg, neg};
    // Two copies at similarity s equal one negative at s + tau*ln2.
    std::vector<double> shifted{neg + tau * std::log(2.0)};
    CHECK(contrastive_loss_sims(pos, twice, tau) ==
          doctest::Approx(contrastive_loss_sims(pos, shifted, tau)).epsilon(1e-12));

    auto p2 = candidate_probabilities(pos, twice, tau);
    CHECK(p2[1] == doctest::Approx(p2[2]).epsilon(1e-12));
    double z = std::exp(pos / tau) + 2.0 * std::exp(neg / tau);
    CHECK(p2[1] + p2[2] == doctest::Approx(2.0 * std::exp(neg / tau) / z).epsilon(1e-12));
    CHECK(contrastive_loss_sims(pos, twice, tau) >
          contrastive_loss_sims(pos, once, tau));
}

TEST_CASE("invalid loss inputs are rejected") {
    std::vector<double> negs{0.1};
    CHECK_THROWS_AS(contrastive_loss_sims(0.2, negs, 0.0), Error);
    CHECK_THROWS_AS(contrastive_loss_sims(0.2, negs, -0.1), Error);
    CHECK_THROWS_AS(contrastive_loss_sims(0.2, {}, 0.1), Error);
    CHECK_THROWS_AS(contrastive_loss({0.0, 0.0}, {1.0, 0.0}, {{0.0, 1.0}}, 0.1), Error);
    CHECK_THROWS_AS(contrastive_loss({1.0, 0.0}, {0.0, 0.0}, {{0.0, 1.0}}, 0.1), Error);
    CHECK_THROWS_AS(contrastive_loss({1.0, 0.0}, {1.0, 0.0}, {{0.0, 0.0}}, 0.1), Error);
}

TEST_CASE("analytic gradients match central finite differences") {
    RngStream rng(5150);
    const double h = 1e-5;
    const std::size_t d = 8, d_txt = 12, d_img = 6;

    for (int config = 0; config < 4; ++config) {
        UniversalEncoder enc = make_encoder(d, d_txt, d_img, 100 + config);
        // Non-zero biases so their gradients are exercised too.
        for (double& b : enc.text_head.b) b = rng.uniform(-0.1, 0.1);
        for (double& b : enc.image_head.b) b = rng.uniform(-0.1, 0.1);
        ResolvedExample ex = random_example(rng, d_txt, d_img, 3 + config % 2);
        double tau = 0.5;

        EncoderGradients analytic = loss_gradients(enc, ex, tau);
        CHECK(analytic.loss == doctest::Approx(forward_loss(enc, ex, tau)).epsilon(1e-12));

        auto check_coord = [&](auto get_param, double analytic_g) {
            UniversalEncoder plus = enc, minus = enc;
            *get_param(plus) += h;
            *get_param(minus) -= h;
            double fd = (forward_loss(plus, ex, tau) - forward_loss(minus, ex, tau)) / (2.0 * h);
            double rel = std::abs(analytic_g - fd) / (std::abs(analytic_g) + 1e-8);
            CHECK(rel < 1e-4);
        };

        for (int sample = 0; sample < 30; ++sample) {
            std::size_t iw = rng.uniform_int(d * d_txt);
            check_coord([iw](UniversalEncoder& e) { return &e.text_head.W.data[iw]; },
                        analytic.text_W.data[iw]);
            std::size_t ib = rng.uniform_int(d);
            check_coord([ib](UniversalEncoder& e) { return &e.text_head.b[ib]; },
                        analytic.text_b[ib]);
            std::size_t jw = rng.uniform_int(d * d_img);
            check_coord([jw](UniversalEncoder& e) { return &e.image_head.W.data[jw]; },
                        analytic.image_W.data[jw]);
            std::size_t jb = rng.uniform_int(d);
            check_coord([jb](UniversalEncoder& e) { return &e.image_head.b[jb]; },
                        analytic.image_b[jb]);
        }
    }
}

TEST_CASE("gradients vanish when the softmax is saturated at the optimum") {
    const std::size_t d = 6;
    UniversalEncoder enc = make_encoder(d, d, 4, 3);
    enc.text_head.W = Mat(d, d);
    for (std::size_t i = 0; i < d; ++i) enc.text_head.W.at(i, i) = 1.0;
    enc.text_head.b = Vec(d, 0.0);

    RngStream rng(88);
    Vec x = random_vec(rng, d);
    Vec neg_x = x;
    scale(neg_x, -1.0);

    ResolvedExample ex;
    ex.query_features = x;
    ex.positive = {Modality::Text, x, {}};
    ex.negatives = {{Modality::Text, neg_x, {}}, {Modality::Text, neg_x, {}}};
    double tau = 0.1;

    EncoderGradients g = loss_gradients(enc, ex, tau);
    CHECK(g.loss < 1e-8);
    CHECK(grad_norm(g) < 1e-6 * (1.0 / tau));
}

TEST_CASE("duplicated negatives also pass the finite-difference oracle") {
    RngStream rng(9001);
    UniversalEncoder enc = make_encoder(6, 10, 4, 55);
    ResolvedExample ex;
    ex.query_features = random_vec(rng, 10);
    ex.positive = {Modality::Text, random_vec(rng, 10), {}};
    CandidateFeatures dup{Modality::Image, random_vec(rng, 10), random_vec(rng, 4)};
    ex.negatives = {dup, dup};
    double tau = 0.3;
    const double h = 1e-5;

    EncoderGradients analytic = loss_gradients(enc, ex, tau);
    for (int sample = 0; sample < 40; ++sample) {
        std::size_t iw = rng.uniform_int(enc.text_head.W.data.size());
        UniversalEncoder plus = enc, minus = enc;
        plus.text_head.W.data[iw] += h;
        minus.text_head.W.data[iw] -= h;
        double fd = (forward_loss(plus, ex, tau) - forward_loss(minus, ex, tau)) / (2.0 * h);
        CHECK(std::abs(analytic.text_W.data[iw] - fd) /
                  (std::abs(analytic.text_W.data[iw]) + 1e-8) <
              1e-4);
    }
}

TEST_CASE("image-path gradient reaches both heads") {
    RngStream rng(31337);
    UniversalEncoder enc = make_encoder(6, 10, 4, 56);
    ResolvedExample ex;
    ex.query_features = random_vec(rng, 10);
    ex.positive = {Modality::Image, random_vec(rng, 10), random_vec(rng, 4)};
    ex.negatives = {{Modality::Text, random_vec(rng, 10), {}}};
    EncoderGradients g = loss_gradients(enc, ex, 0.5);
    double image_norm = 0.0;
    for (double x : g.image_W.data) image_norm += x * x;
    double text_norm = 0.0;
    for (double x : g.text_W.data) text_norm += x * x;
    CHECK(image_norm > 0.0);
    CHECK(text_norm > 0.0);
}
