#include <doctest.h>

#include "uniret/error.hpp"
#include "uniret/training.hpp"

using namespace uniret;

namespace {

struct LoopFixture {
    Corpus corpus = Corpus({}, 0);
    std::vector<Query> train_q, val_q;
    TextFeaturizer featurizer{128, 2, 77};
    UniversalEncoder enc;

    explicit LoopFixture(std::uint64_t seed = 7) {
        SyntheticSpec spec;
        spec.seed = seed;
        spec.n_text = 40;
        spec.n_image = 40;
        spec.n_queries = 24;
        spec.d_img = 16;
        auto [c, q] = generate_synthetic(spec);
        corpus = std::move(c);
        train_q.assign(q.begin(), q.begin() + 16);
        val_q.assign(q.begin() + 16, q.end());
        enc = make_encoder(32, featurizer.dim, spec.d_img, 1);
    }
};

TrainConfig quick_config() {
    TrainConfig cfg;
    cfg.max_epochs = 4;
    cfg.batch_size = 8;
    cfg.eval_every_steps = 4;
    cfg.seed = 5;
    return cfg;
}

} // namespace

TEST_CASE("learning_rate = 0 leaves parameters bit-identical") {
    LoopFixture fx;
    TrainConfig cfg = quick_config();
    cfg.learning_rate = 0.0;
    for (OptimizerKind opt : {OptimizerKind::AdamW, OptimizerKind::SGD}) {
        cfg.optimizer = opt;
        TrainResult result = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg,
                                   NegativePolicy::parse("inbatch-balanced"));
        CHECK(result.final.text_head.W.data == fx.enc.text_head.W.data);
        CHECK(result.final.text_head.b == fx.enc.text_head.b);
        CHECK(result.final.image_head.W.data == fx.enc.image_head.W.data);
        CHECK(result.final.image_head.b == fx.enc.image_head.b);
    }
}

TEST_CASE("identical seed and config reproduce identical logs and parameters") {
    LoopFixture fx;
    TrainConfig cfg = quick_config();
    NegativePolicy policy = NegativePolicy::parse("inbatch-balanced");
    TrainResult a = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg, policy);
    TrainResult b = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg, policy);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i] == b.log[i]);
    CHECK(a.final.text_head.W.data == b.final.text_head.W.data);
    CHECK(a.best_mrr10 == b.best_mrr10);

    TrainConfig other = cfg;
    other.seed = 6;
    TrainResult c = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, other, policy);
    CHECK(a.final.text_head.W.data != c.final.text_head.W.data);
}

TEST_CASE("inbatch training improves validation MRR@10 on the planted fixture") {
    LoopFixture fx;
    TrainConfig cfg;
    cfg.max_epochs = 30;
    cfg.batch_size = 8;
    cfg.eval_every_steps = 20;
    cfg.seed = 5;
    TrainResult result = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg,
                               NegativePolicy::parse("inbatch-balanced"));
    CHECK(result.best_mrr10 > result.initial_mrr10);
}

TEST_CASE("hard-negative training runs and logs mining events") {
    LoopFixture fx;
    TrainConfig cfg = quick_config();
    cfg.max_epochs = 3;
    NegativePolicy policy = NegativePolicy::parse("hard-balanced 1");
    policy.pool_size = 40;

    SUBCASE("re-mined per epoch") {
        cfg.remine = RemineSchedule::PerEpoch;
        TrainResult result =
            train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg, policy);
        std::size_t mines = 0;
        for (const json& e : result.log)
            if (e.at("event") == "mine") ++mines;
        CHECK(mines == 3);
    }
    SUBCASE("mined once") {
        cfg.remine = RemineSchedule::Once;
        TrainResult result =
            train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg, policy);
        std::size_t mines = 0;
        for (const json& e : result.log)
            if (e.at("event") == "mine") ++mines;
        CHECK(mines == 1);
    }
    SUBCASE("with in-batch extras") {
        cfg.add_inbatch = true;
        TrainResult result =
            train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg, policy);
        CHECK(result.log.size() > 0);
    }
}

TEST_CASE("the log carries steps, evals and the retrieved-image ratio") {
    LoopFixture fx;
    TrainConfig cfg = quick_config();
    TrainResult result = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg,
                               NegativePolicy::parse("inbatch-random"));
    bool saw_step = false, saw_eval = false;
    for (const json& e : result.log) {
        if (e.at("event") == "step") {
            saw_step = true;
            CHECK(e.at("loss").get<double>() >= 0.0);
        }
        if (e.at("event") == "eval") {
            saw_eval = true;
            CHECK(e.contains("mrr10"));
            CHECK(e.contains("image_ratio10"));
        }
    }
    CHECK(saw_step);
    CHECK(saw_eval);
    // First event is the untrained baseline eval at step 0.
    CHECK(result.log.front().at("event") == "eval");
    CHECK(result.log.front().at("step") == 0);
}

TEST_CASE("early stopping halts after patience evaluations without improvement") {
    LoopFixture fx;
    TrainConfig cfg = quick_config();
    cfg.learning_rate = 0.0; // nothing ever improves
    cfg.max_epochs = 50;
    cfg.eval_every_steps = 2;
    cfg.early_stop_patience = 3;
    TrainResult result = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg,
                               NegativePolicy::parse("inbatch-balanced"));
    std::size_t evals = 0;
    for (const json& e : result.log)
        if (e.at("event") == "eval") ++evals;
    // Baseline eval + exactly `patience` non-improving evals.
    CHECK(evals == 1 + cfg.early_stop_patience);
}

TEST_CASE("multi-relevant queries resample their positive per epoch") {
    LoopFixture fx;
    // Give one query two relevant docs; the invariant positive ∉ negatives
    // must hold throughout, and training must still run.
    fx.train_q[0].relevant_ids.push_back(fx.train_q[1].relevant_ids[0]);
    fx.train_q[0].answer_modality.reset();
    TrainConfig cfg = quick_config();
    TrainResult result = train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, cfg,
                               NegativePolicy::parse("inbatch-balanced"));
    CHECK(result.log.size() > 0);
}

TEST_CASE("invalid configurations are rejected") {
    LoopFixture fx;
    TrainConfig cfg = quick_config();
    NegativePolicy policy = NegativePolicy::parse("inbatch-balanced");

    TrainConfig bad_tau = cfg;
    bad_tau.tau = 0.0;
    CHECK_THROWS_AS(train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, bad_tau, policy),
                    Error);

    TrainConfig bad_batch = cfg;
    bad_batch.batch_size = 1;
    CHECK_THROWS_AS(
        train(fx.enc, fx.corpus, fx.train_q, fx.val_q, fx.featurizer, bad_batch, policy), Error);

    CHECK_THROWS_AS(train(fx.enc, fx.corpus, {}, fx.val_q, fx.featurizer, cfg, policy), Error);
}
