#include "uniret/training.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "uniret/eval.hpp"

namespace uniret {

NegativePolicy NegativePolicy::parse(const std::string& text) {
    std::string name = text, args;
    for (char sep : {' ', ':', '='}) {
        auto pos = text.find(sep);
        if (pos != std::string::npos) {
            name = text.substr(0, pos);
            args = text.substr(pos + 1);
            break;
        }
    }
    auto parse_count = [&](const std::string& s) -> std::size_t {
        try {
            std::size_t used = 0;
            long v = std::stol(s, &used);
            if (used != s.size() || v < 0) throw std::invalid_argument(s);
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            fail("usage", "invalid count \"" + s + "\" in negatives policy \"" + text + "\"");
        }
    };

    NegativePolicy policy;
    if (name == "inbatch-random") {
        policy.kind = NegativeKind::InBatchRandom;
    } else if (name == "inbatch-balanced") {
        policy.kind = NegativeKind::InBatchBalanced;
    } else if (name == "hard-text") {
        policy.kind = NegativeKind::HardOnlyText;
        policy.n_negatives = 2;
    } else if (name == "hard-image") {
        policy.kind = NegativeKind::HardOnlyImage;
        policy.n_negatives = 2;
    } else if (name == "hard-mixed") {
        policy.kind = NegativeKind::HardMixed;
        auto comma = args.find(',');
        if (args.empty() || comma == std::string::npos)
            fail("usage", "hard-mixed needs text,image counts, e.g. \"hard-mixed 2,1\"");
        policy.n_text = parse_count(args.substr(0, comma));
        policy.n_image = parse_count(args.substr(comma + 1));
        if (policy.n_text + policy.n_image == 0)
            fail("usage", "hard-mixed needs at least one negative");
    } else if (name == "hard-balanced") {
        policy.kind = NegativeKind::HardBalanced;
        policy.k = args.empty() ? 1 : parse_count(args);
        if (policy.k == 0) fail("usage", "hard-balanced needs k >= 1");
    } else {
        fail("usage", "unknown negatives policy \"" + text + "\"");
    }
    if (!args.empty() && (name == "inbatch-random" || name == "inbatch-balanced" ||
                          name == "hard-text" || name == "hard-image"))
        policy.n_negatives = parse_count(args);
    return policy;
}

std::string NegativePolicy::describe() const {
    switch (kind) {
        case NegativeKind::InBatchRandom:
            return "inbatch-random " + std::to_string(n_negatives);
        case NegativeKind::InBatchBalanced:
            return "inbatch-balanced " + std::to_string(n_negatives);
        case NegativeKind::HardOnlyText:
            return "hard-text " + std::to_string(n_negatives);
        case NegativeKind::HardOnlyImage:
            return "hard-image " + std::to_string(n_negatives);
        case NegativeKind::HardMixed:
            return "hard-mixed " + std::to_string(n_text) + "," + std::to_string(n_image);
        case NegativeKind::HardBalanced:
            return "hard-balanced " + std::to_string(k);
    }
    return "?";
}

double contrastive_loss_sims(double pos_sim, std::span<const double> neg_sims, double tau) {
    if (tau <= 0.0) fail("validation", "temperature must be > 0");
    if (neg_sims.empty()) fail("validation", "contrastive loss needs >= 1 negative");
    double a0 = pos_sim / tau;
    double m = a0;
    for (double s : neg_sims) m = std::max(m, s / tau);
    double sum = std::exp(a0 - m);
    for (double s : neg_sims) sum += std::exp(s / tau - m);
    // -log softmax(positive): (m - a0) + log sum, both terms finite.
    return (m - a0) + std::log(sum);
}

std::vector<double> candidate_probabilities(double pos_sim, std::span<const double> neg_sims,
                                            double tau) {
    if (tau <= 0.0) fail("validation", "temperature must be > 0");
    std::vector<double> a;
    a.reserve(neg_sims.size() + 1);
    a.push_back(pos_sim / tau);
    for (double s : neg_sims) a.push_back(s / tau);
    double m = *std::max_element(a.begin(), a.end());
    double sum = 0.0;
    for (double& x : a) {
        x = std::exp(x - m);
        sum += x;
    }
    for (double& x : a) x /= sum;
    return a;
}

namespace {

double cosine_checked(const Vec& a, double na, const Vec& b, double nb) {
    return dot(a, b) / (na * nb);
}

double nonzero_norm(const Vec& v, const char* what) {
    double n = l2_norm(v);
    if (n == 0.0) fail("zero-vector", std::string(what) + " embedding is zero; cosine undefined");
    return n;
}

Vec embed_candidate(const UniversalEncoder& enc, const CandidateFeatures& c) {
    if (c.modality == Modality::Text) return encode_text_passage(enc, c.text_features);
    return encode_image(enc, c.pixel_features, c.text_features);
}

} // namespace

double contrastive_loss(const Vec& query_emb, const Vec& pos_emb,
                        const std::vector<Vec>& neg_embs, double tau) {
    double nq = nonzero_norm(query_emb, "query");
    double np = nonzero_norm(pos_emb, "positive");
    std::vector<double> neg_sims;
    neg_sims.reserve(neg_embs.size());
    for (const Vec& n : neg_embs)
        neg_sims.push_back(cosine_checked(query_emb, nq, n, nonzero_norm(n, "negative")));
    return contrastive_loss_sims(cosine_checked(query_emb, nq, pos_emb, np), neg_sims, tau);
}

namespace {

void add_outer(Mat& grad_W, Vec& grad_b, const Vec& grad_h, const Vec& x) {
    for (std::size_t i = 0; i < grad_h.size(); ++i) {
        if (grad_h[i] == 0.0) continue;
        double* row = grad_W.row(i);
        for (std::size_t j = 0; j < x.size(); ++j) row[j] += grad_h[i] * x[j];
        grad_b[i] += grad_h[i];
    }
}

// d cos(u,v) / du = v/(|u||v|) - cos(u,v) * u/|u|^2
Vec cosine_grad(const Vec& u, double nu, const Vec& v, double nv, double cos_uv) {
    Vec g(u.size());
    double c1 = 1.0 / (nu * nv);
    double c2 = cos_uv / (nu * nu);
    for (std::size_t i = 0; i < u.size(); ++i) g[i] = c1 * v[i] - c2 * u[i];
    return g;
}

} // namespace

EncoderGradients loss_gradients(const UniversalEncoder& enc, const ResolvedExample& example,
                                double tau) {
    if (tau <= 0.0) fail("validation", "temperature must be > 0");
    if (example.negatives.empty()) fail("validation", "loss needs >= 1 negative");

    Vec h_q = encode_query(enc, example.query_features);
    double nq = nonzero_norm(h_q, "query");

    std::vector<const CandidateFeatures*> candidates;
    candidates.push_back(&example.positive);
    for (const CandidateFeatures& n : example.negatives) candidates.push_back(&n);

    std::vector<Vec> embs(candidates.size());
    std::vector<double> norms(candidates.size());
    std::vector<double> sims(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        embs[c] = embed_candidate(enc, *candidates[c]);
        norms[c] = nonzero_norm(embs[c], c == 0 ? "positive" : "negative");
        sims[c] = cosine_checked(h_q, nq, embs[c], norms[c]);
    }

    std::span<const double> neg_sims(sims.data() + 1, sims.size() - 1);
    std::vector<double> probs = candidate_probabilities(sims[0], neg_sims, tau);

    EncoderGradients grads;
    grads.text_W = Mat(enc.text_head.W.rows, enc.text_head.W.cols);
    grads.text_b = Vec(enc.text_head.b.size(), 0.0);
    grads.image_W = Mat(enc.image_head.W.rows, enc.image_head.W.cols);
    grads.image_b = Vec(enc.image_head.b.size(), 0.0);
    grads.loss = contrastive_loss_sims(sims[0], neg_sims, tau);

    Vec grad_hq(h_q.size(), 0.0);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        double g = (probs[c] - (c == 0 ? 1.0 : 0.0)) / tau;
        if (g == 0.0) continue;
        axpy(g, cosine_grad(h_q, nq, embs[c], norms[c], sims[c]), grad_hq);
        Vec grad_hc = cosine_grad(embs[c], norms[c], h_q, nq, sims[c]);
        scale(grad_hc, g);
        const CandidateFeatures& cand = *candidates[c];
        if (cand.modality == Modality::Text) {
            add_outer(grads.text_W, grads.text_b, grad_hc, cand.text_features);
        } else {
            // Eq-sum image embedding: same upstream gradient reaches both heads.
            add_outer(grads.image_W, grads.image_b, grad_hc, cand.pixel_features);
            add_outer(grads.text_W, grads.text_b, grad_hc, cand.text_features);
        }
    }
    add_outer(grads.text_W, grads.text_b, grad_hq, example.query_features);
    return grads;
}

namespace {

struct PoolEntry {
    std::string id;
    Modality modality;
};

std::vector<PoolEntry> draw_from(const std::vector<PoolEntry>& pool, std::size_t n,
                                 RngStream& rng) {
    std::vector<PoolEntry> out;
    for (std::size_t i : rng.sample_without_replacement(pool.size(), n)) out.push_back(pool[i]);
    return out;
}

// Rank-weighted draw without replacement, weight 1/rank within the retrieved
// pool. Keeps the sampled negatives concentrated on the actual confusions;
// a uniform draw over a pool that covers half a desk-scale corpus is not hard.
std::vector<PoolEntry> draw_rank_weighted(const std::vector<PoolEntry>& ranked_pool,
                                          std::size_t n, RngStream& rng) {
    std::vector<std::size_t> remaining(ranked_pool.size());
    for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;
    std::vector<PoolEntry> out;
    n = std::min(n, remaining.size());
    for (std::size_t draw = 0; draw < n; ++draw) {
        double total = 0.0;
        for (std::size_t i : remaining) total += 1.0 / static_cast<double>(i + 1);
        double target = rng.uniform() * total;
        std::size_t chosen = remaining.size() - 1;
        double acc = 0.0;
        for (std::size_t j = 0; j < remaining.size(); ++j) {
            acc += 1.0 / static_cast<double>(remaining[j] + 1);
            if (target < acc) {
                chosen = j;
                break;
            }
        }
        out.push_back(ranked_pool[remaining[chosen]]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
    return out;
}

} // namespace

std::vector<TrainExample> sample_inbatch(const std::vector<TrainExample>& batch,
                                         const NegativePolicy& policy, const Corpus& corpus,
                                         RngStream& rng, SamplingReport* report) {
    if (!policy.is_inbatch()) fail("validation", "sample_inbatch needs an inbatch policy");
    if (batch.size() < 2) fail("validation", "inbatch sampling needs a batch of >= 2");

    std::vector<Modality> positive_modality(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const SourceDoc* doc = corpus.find(batch[i].positive_id);
        if (!doc) fail("unresolved-qrel", "positive \"" + batch[i].positive_id + "\" not in corpus");
        positive_modality[i] = doc->modality;
    }

    std::vector<TrainExample> out = batch;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<PoolEntry> texts, images;
        std::unordered_set<std::string> seen{batch[i].positive_id};
        for (std::size_t j = 0; j < batch.size(); ++j) {
            if (j == i || !seen.insert(batch[j].positive_id).second) continue;
            (positive_modality[j] == Modality::Text ? texts : images)
                .push_back({batch[j].positive_id, positive_modality[j]});
        }

        std::vector<PoolEntry> chosen;
        if (policy.kind == NegativeKind::InBatchRandom) {
            std::vector<PoolEntry> pool = texts;
            pool.insert(pool.end(), images.begin(), images.end());
            chosen = draw_from(pool, std::min(policy.n_negatives, pool.size()), rng);
        } else {
            std::size_t want = policy.n_negatives;
            std::size_t want_text = want / 2, want_image = want / 2;
            if (want % 2) (texts.size() >= images.size() ? want_text : want_image) += 1;
            std::size_t take_text = std::min(want_text, texts.size());
            std::size_t take_image = std::min(want_image, images.size());
            if (report) {
                report->shortfall_text += want_text - take_text;
                report->shortfall_image += want_image - take_image;
            }
            // Backfill the missing side from the other modality's leftovers.
            std::size_t missing = want - take_text - take_image;
            std::size_t extra_text = std::min(missing, texts.size() - take_text);
            take_text += extra_text;
            take_image += std::min(missing - extra_text, images.size() - take_image);
            chosen = draw_from(texts, take_text, rng);
            std::vector<PoolEntry> imgs = draw_from(images, take_image, rng);
            chosen.insert(chosen.end(), imgs.begin(), imgs.end());
        }
        out[i].negatives.clear();
        for (const PoolEntry& e : chosen) out[i].negatives.emplace_back(e.id, e.modality);
        if (out[i].negatives.empty() && report)
            report->notes.push_back("query " + batch[i].query_id + ": no usable inbatch negatives");
    }
    return out;
}

std::vector<TrainExample> mine_hard_negatives(const UniversalEncoder& enc,
                                              const DenseIndex& index,
                                              const std::vector<Query>& queries,
                                              const TextFeaturizer& featurizer,
                                              const NegativePolicy& policy, RngStream& rng,
                                              SamplingReport* report) {
    if (policy.is_inbatch()) fail("validation", "mine_hard_negatives needs a hard policy");
    if (policy.pool_size > index.size())
        fail("validation", "pool_size " + std::to_string(policy.pool_size) +
                               " exceeds index size " + std::to_string(index.size()));

    std::size_t want_text = 0, want_image = 0;
    switch (policy.kind) {
        case NegativeKind::HardOnlyText: want_text = policy.n_negatives; break;
        case NegativeKind::HardOnlyImage: want_image = policy.n_negatives; break;
        case NegativeKind::HardMixed: want_text = policy.n_text; want_image = policy.n_image; break;
        case NegativeKind::HardBalanced: want_text = policy.k; want_image = policy.k; break;
        default: break;
    }

    std::vector<TrainExample> out;
    out.reserve(queries.size());
    for (const Query& q : queries) {
        Vec q_emb = encode_query(enc, featurize_text(featurizer, q.text));
        RankedList top = index.search(q_emb, policy.pool_size, q.id);

        std::unordered_set<std::string> relevant(q.relevant_ids.begin(), q.relevant_ids.end());
        std::vector<PoolEntry> texts, images;
        for (const RankedEntry& e : top.entries) {
            if (relevant.count(e.doc_id)) continue;
            (e.modality == Modality::Text ? texts : images).push_back({e.doc_id, e.modality});
        }
        if (texts.empty() && images.empty())
            fail("empty-pool",
                 "query \"" + q.id + "\": retrieval pool is empty after removing relevant docs");

        std::size_t take_text = std::min(want_text, texts.size());
        std::size_t take_image = std::min(want_image, images.size());
        if (report) {
            report->shortfall_text += want_text - take_text;
            report->shortfall_image += want_image - take_image;
            if (take_text < want_text)
                report->notes.push_back("query " + q.id + ": only " + std::to_string(take_text) +
                                        " of " + std::to_string(want_text) + " text negatives");
            if (take_image < want_image)
                report->notes.push_back("query " + q.id + ": only " + std::to_string(take_image) +
                                        " of " + std::to_string(want_image) + " image negatives");
        }

        TrainExample ex;
        ex.query_id = q.id;
        ex.positive_id = q.relevant_ids[rng.uniform_int(q.relevant_ids.size())];
        for (const PoolEntry& e : draw_rank_weighted(texts, take_text, rng))
            ex.negatives.emplace_back(e.id, e.modality);
        for (const PoolEntry& e : draw_rank_weighted(images, take_image, rng))
            ex.negatives.emplace_back(e.id, e.modality);
        out.push_back(std::move(ex));
    }
    return out;
}

namespace {

struct AdamState {
    Mat m, v;
    Vec mb, vb;
    explicit AdamState(const ProjectionHead& head)
        : m(head.W.rows, head.W.cols), v(head.W.rows, head.W.cols),
          mb(head.b.size(), 0.0), vb(head.b.size(), 0.0) {}
};

class Optimizer {
public:
    Optimizer(const UniversalEncoder& enc, const TrainConfig& cfg)
        : cfg_(cfg), text_(enc.text_head), image_(enc.image_head) {}

    void step(UniversalEncoder& enc, const EncoderGradients& grads) {
        ++t_;
        apply(enc.text_head.W.data, grads.text_W.data, text_.m.data, text_.v.data);
        apply(enc.text_head.b, grads.text_b, text_.mb, text_.vb);
        apply(enc.image_head.W.data, grads.image_W.data, image_.m.data, image_.v.data);
        apply(enc.image_head.b, grads.image_b, image_.mb, image_.vb);
    }

private:
    void apply(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
               std::vector<double>& v) {
        double lr = cfg_.learning_rate;
        if (cfg_.optimizer == OptimizerKind::SGD) {
            for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
            return;
        }
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            param[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * param[i]);
        }
    }

    TrainConfig cfg_;
    std::size_t t_ = 0;
    AdamState text_, image_;
};

void accumulate_grads(EncoderGradients& acc, const EncoderGradients& g) {
    for (std::size_t i = 0; i < acc.text_W.data.size(); ++i) acc.text_W.data[i] += g.text_W.data[i];
    for (std::size_t i = 0; i < acc.text_b.size(); ++i) acc.text_b[i] += g.text_b[i];
    for (std::size_t i = 0; i < acc.image_W.data.size(); ++i)
        acc.image_W.data[i] += g.image_W.data[i];
    for (std::size_t i = 0; i < acc.image_b.size(); ++i) acc.image_b[i] += g.image_b[i];
    acc.loss += g.loss;
}

void scale_grads(EncoderGradients& acc, double s) {
    for (double& x : acc.text_W.data) x *= s;
    for (double& x : acc.text_b) x *= s;
    for (double& x : acc.image_W.data) x *= s;
    for (double& x : acc.image_b) x *= s;
}

EncoderGradients zero_grads(const UniversalEncoder& enc) {
    EncoderGradients g;
    g.text_W = Mat(enc.text_head.W.rows, enc.text_head.W.cols);
    g.text_b = Vec(enc.text_head.b.size(), 0.0);
    g.image_W = Mat(enc.image_head.W.rows, enc.image_head.W.cols);
    g.image_b = Vec(enc.image_head.b.size(), 0.0);
    return g;
}

} // namespace

TrainResult train(const UniversalEncoder& initial, const Corpus& corpus,
                  const std::vector<Query>& train_queries,
                  const std::vector<Query>& validation_queries, const TextFeaturizer& featurizer,
                  const TrainConfig& config, const NegativePolicy& policy,
                  const ExpansionMap* expansion) {
    if (config.tau <= 0.0) fail("validation", "temperature must be > 0");
    if (config.learning_rate < 0.0) fail("validation", "learning rate must be >= 0");
    if (config.max_epochs < 1) fail("validation", "max_epochs must be >= 1");
    if (config.eval_every_steps < 1) fail("validation", "eval_every_steps must be >= 1");
    if (policy.is_inbatch() && config.batch_size < 2)
        fail("validation", "inbatch policies need batch_size >= 2");
    if (train_queries.empty()) fail("validation", "no training queries");
    if (validation_queries.empty()) fail("validation", "no validation queries");
    validate_queries(train_queries, corpus);
    validate_queries(validation_queries, corpus);

    // Raw features are fixed for the whole run; resolve them once.
    std::vector<CandidateFeatures> doc_features(corpus.size());
    std::unordered_map<std::string, std::size_t> doc_row;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const SourceDoc& doc = corpus.docs()[i];
        doc_row[doc.id] = i;
        CandidateFeatures& f = doc_features[i];
        f.modality = doc.modality;
        if (doc.modality == Modality::Text) {
            f.text_features = featurize_text(featurizer, doc.body);
        } else {
            const std::string* caption = &doc.body;
            if (expansion) {
                auto it = expansion->find(doc.id);
                if (it != expansion->end()) caption = &it->second;
            }
            f.text_features = featurize_text(featurizer, *caption);
            f.pixel_features = doc.image_features;
        }
    }
    std::unordered_map<std::string, Vec> query_features;
    for (const Query& q : train_queries)
        query_features.emplace(q.id, featurize_text(featurizer, q.text));
    std::vector<Vec> val_features;
    for (const Query& q : validation_queries)
        val_features.push_back(featurize_text(featurizer, q.text));

    RngStream root(config.seed);
    RngStream shuffle_rng = root.fork("epoch-shuffle");
    RngStream inbatch_rng = root.fork("inbatch");
    RngStream mining_rng = root.fork("mining");
    RngStream positive_rng = root.fork("positives");

    UniversalEncoder enc = initial;
    Optimizer opt(enc, config);
    TrainResult result;
    result.final = enc;

    std::vector<std::string> ids;
    std::vector<Modality> modalities;
    for (const SourceDoc& doc : corpus.docs()) {
        ids.push_back(doc.id);
        modalities.push_back(doc.modality);
    }

    auto build_current_index = [&]() {
        Mat table(corpus.size(), enc.out_dim());
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            Vec row = embed_candidate(enc, doc_features[i]);
            for (std::size_t j = 0; j < row.size(); ++j) table.at(i, j) = row[j];
        }
        return DenseIndex::build(table, ids, modalities);
    };

    auto evaluate_validation = [&](const DenseIndex& index) {
        double mrr_sum = 0.0;
        std::vector<RankedList> lists;
        for (std::size_t i = 0; i < validation_queries.size(); ++i) {
            const Query& q = validation_queries[i];
            RankedList top = index.search(encode_query(enc, val_features[i]), 10, q.id);
            std::unordered_set<std::string> rel(q.relevant_ids.begin(), q.relevant_ids.end());
            mrr_sum += mrr_at_k(top, rel, 10);
            lists.push_back(std::move(top));
        }
        return std::make_pair(mrr_sum / static_cast<double>(validation_queries.size()),
                              modality_ratio_at_k(lists, 10));
    };

    double best_mrr = -1.0;
    std::size_t evals_since_best = 0;
    std::size_t step = 0, last_eval_step = static_cast<std::size_t>(-1);
    bool stop = false;

    auto run_eval = [&](std::size_t epoch) {
        auto [mrr, ratio] = evaluate_validation(build_current_index());
        last_eval_step = step;
        bool improved = mrr > best_mrr;
        if (improved) {
            best_mrr = mrr;
            result.best = enc;
            evals_since_best = 0;
        } else {
            ++evals_since_best;
            if (evals_since_best >= config.early_stop_patience) stop = true;
        }
        result.log.push_back(json{{"event", "eval"},
                                  {"step", step},
                                  {"epoch", epoch},
                                  {"mrr10", mrr},
                                  {"image_ratio10", ratio},
                                  {"best", improved}});
        return mrr;
    };

    result.initial_mrr10 = run_eval(0);

    std::vector<TrainExample> mined;
    std::unordered_map<std::string, std::size_t> mined_of;

    for (std::size_t epoch = 1; epoch <= config.max_epochs && !stop; ++epoch) {
        // One positive per query per epoch, uniform over its relevant docs.
        std::unordered_map<std::string, std::string> positive_of;
        for (const Query& q : train_queries)
            positive_of[q.id] = q.relevant_ids[positive_rng.uniform_int(q.relevant_ids.size())];

        if (!policy.is_inbatch() &&
            (epoch == 1 || config.remine == RemineSchedule::PerEpoch)) {
            SamplingReport report;
            mined = mine_hard_negatives(enc, build_current_index(), train_queries, featurizer,
                                        policy, mining_rng, &report);
            mined_of.clear();
            for (std::size_t i = 0; i < mined.size(); ++i) mined_of[mined[i].query_id] = i;
            result.log.push_back(json{{"event", "mine"},
                                      {"epoch", epoch},
                                      {"examples", mined.size()},
                                      {"shortfall_text", report.shortfall_text},
                                      {"shortfall_image", report.shortfall_image}});
        }

        std::vector<std::size_t> order(train_queries.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        std::vector<std::vector<std::size_t>> batches;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size)
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                     start + config.batch_size, order.size())));
        if (batches.size() > 1 && batches.back().size() == 1) {
            batches[batches.size() - 2].push_back(batches.back()[0]);
            batches.pop_back();
        }

        for (const std::vector<std::size_t>& batch_rows : batches) {
            if (stop) break;
            std::vector<TrainExample> examples;
            SamplingReport report;
            if (policy.is_inbatch()) {
                std::vector<TrainExample> seeds;
                for (std::size_t row : batch_rows) {
                    const Query& q = train_queries[row];
                    seeds.push_back({q.id, positive_of[q.id], {}});
                }
                examples = sample_inbatch(seeds, policy, corpus, inbatch_rng, &report);
            } else {
                for (std::size_t row : batch_rows) {
                    auto it = mined_of.find(train_queries[row].id);
                    if (it == mined_of.end()) continue;
                    TrainExample ex = mined[it->second];
                    ex.positive_id = positive_of[ex.query_id];
                    if (config.add_inbatch) {
                        std::unordered_set<std::string> present{ex.positive_id};
                        for (const auto& [id, _] : ex.negatives) present.insert(id);
                        for (std::size_t other : batch_rows) {
                            if (other == row) continue;
                            const std::string& pid = positive_of[train_queries[other].id];
                            if (!present.insert(pid).second) continue;
                            ex.negatives.emplace_back(pid, doc_features[doc_row[pid]].modality);
                        }
                    }
                    examples.push_back(std::move(ex));
                }
            }

            // Drop anything that cannot enter the loss.
            std::erase_if(examples, [](const TrainExample& e) { return e.negatives.empty(); });
            if (examples.empty()) continue;

            EncoderGradients acc = zero_grads(enc);
            for (const TrainExample& ex : examples) {
                ResolvedExample resolved;
                resolved.query_features = query_features[ex.query_id];
                resolved.positive = doc_features[doc_row[ex.positive_id]];
                for (const auto& [id, _] : ex.negatives)
                    resolved.negatives.push_back(doc_features[doc_row[id]]);
                EncoderGradients g = loss_gradients(enc, resolved, config.tau);
                if (!std::isfinite(g.loss)) {
                    json dump{{"event", "abort"},   {"step", step + 1},
                              {"epoch", epoch},     {"query", ex.query_id},
                              {"positive", ex.positive_id}, {"loss", "non-finite"}};
                    fail("non-finite", "loss diverged: " + dump.dump());
                }
                accumulate_grads(acc, g);
            }
            double inv = 1.0 / static_cast<double>(examples.size());
            scale_grads(acc, inv);
            acc.loss *= inv;
            opt.step(enc, acc);
            ++step;

            json ev{{"event", "step"}, {"step", step}, {"epoch", epoch}, {"loss", acc.loss}};
            if (report.shortfall_text || report.shortfall_image) {
                ev["shortfall_text"] = report.shortfall_text;
                ev["shortfall_image"] = report.shortfall_image;
            }
            result.log.push_back(std::move(ev));

            if (step % config.eval_every_steps == 0) run_eval(epoch);
        }
    }

    if (last_eval_step != step) run_eval(config.max_epochs);
    result.final = enc;
    result.best_mrr10 = best_mrr;
    return result;
}

} // namespace uniret
