#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uniret/corpus.hpp"
#include "uniret/encoder.hpp"
#include "uniret/index.hpp"
#include "uniret/jsonio.hpp"
#include "uniret/rng.hpp"

namespace uniret {

/// One training unit: query, its chosen positive, and a modality-annotated
/// negative set. positive_id never appears among the negatives.
struct TrainExample {
    std::string query_id;
    std::string positive_id;
    std::vector<std::pair<std::string, Modality>> negatives;
};

enum class NegativeKind {
    InBatchRandom,
    InBatchBalanced,
    HardOnlyText,
    HardOnlyImage,
    HardMixed,
    HardBalanced,
};

struct NegativePolicy {
    NegativeKind kind = NegativeKind::InBatchBalanced;
    std::size_t pool_size = 100; // hard kinds: retrieval pool per query
    std::size_t n_negatives = 8; // inbatch kinds and HardOnly* total draw
    std::size_t n_text = 0;      // HardMixed
    std::size_t n_image = 0;     // HardMixed
    std::size_t k = 1;           // HardBalanced: k text + k image

    bool is_inbatch() const {
        return kind == NegativeKind::InBatchRandom || kind == NegativeKind::InBatchBalanced;
    }

    /// CLI forms: inbatch-random, inbatch-balanced, hard-text, hard-image,
    /// hard-mixed T,I, hard-balanced K.
    static NegativePolicy parse(const std::string& text);
    std::string describe() const;
};

enum class OptimizerKind { SGD, AdamW };
enum class RemineSchedule { Once, PerEpoch };

struct TrainConfig {
    double tau = 0.05;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    std::size_t max_epochs = 30;
    std::size_t eval_every_steps = 50;
    std::size_t early_stop_patience = 5;
    OptimizerKind optimizer = OptimizerKind::AdamW;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    RemineSchedule remine = RemineSchedule::PerEpoch;
    bool add_inbatch = false; // combine mined negatives with in-batch positives
};

/// Contrastive loss on pre-computed similarities, positive first. Computed in
/// double precision through log-sum-exp so tau=0.01 stays finite.
double contrastive_loss_sims(double pos_sim, std::span<const double> neg_sims, double tau);

/// Softmax probabilities over {positive} ∪ negatives at temperature tau,
/// positive first. The loss equals -log of the first entry.
std::vector<double> candidate_probabilities(double pos_sim, std::span<const double> neg_sims,
                                            double tau);

/// Embedding-level loss: cosine similarities at temperature tau. All vectors
/// must be nonzero.
double contrastive_loss(const Vec& query_emb, const Vec& pos_emb,
                        const std::vector<Vec>& neg_embs, double tau);

/// Raw features of one candidate. Text candidates keep pixel_features empty;
/// image candidates carry both pixel and caption features.
struct CandidateFeatures {
    Modality modality = Modality::Text;
    Vec text_features;
    Vec pixel_features;
};

struct ResolvedExample {
    Vec query_features;
    CandidateFeatures positive;
    std::vector<CandidateFeatures> negatives;
};

/// Gradients matching the encoder's parameters, plus the loss value.
struct EncoderGradients {
    Mat text_W;
    Vec text_b;
    Mat image_W;
    Vec image_b;
    double loss = 0.0;
};

/// Exact analytic gradient of the contrastive loss w.r.t. both heads,
/// chaining softmax -> cosine -> affine encoders. Image candidates push
/// gradient into both heads through the embedding sum.
EncoderGradients loss_gradients(const UniversalEncoder& enc, const ResolvedExample& example,
                                double tau);

struct SamplingReport {
    std::size_t shortfall_text = 0;
    std::size_t shortfall_image = 0;
    std::vector<std::string> notes;
};

/// Fill each seed example's negatives from the other in-batch positives.
/// Balanced splits the draw evenly between modalities (±1 on skewed batches)
/// and backfills from the remaining modality, reporting the shortfall.
std::vector<TrainExample> sample_inbatch(const std::vector<TrainExample>& batch,
                                         const NegativePolicy& policy, const Corpus& corpus,
                                         RngStream& rng, SamplingReport* report = nullptr);

/// ANCE-style mining: retrieve the top pool_size candidates per query, drop
/// everything qrel-relevant, partition by modality and draw per policy.
/// Shortfalls are reported, never padded.
std::vector<TrainExample> mine_hard_negatives(const UniversalEncoder& enc,
                                              const DenseIndex& index,
                                              const std::vector<Query>& queries,
                                              const TextFeaturizer& featurizer,
                                              const NegativePolicy& policy, RngStream& rng,
                                              SamplingReport* report = nullptr);

struct TrainResult {
    UniversalEncoder best;     // checkpoint with the best validation MRR@10
    UniversalEncoder final;    // parameters after the last step
    double best_mrr10 = 0.0;
    double initial_mrr10 = 0.0;
    std::vector<json> log; // one object per step/eval/mine event
};

/// Minibatch contrastive training with periodic validation (MRR@10 and
/// retrieved-image ratio), best-checkpoint tracking and early stopping.
/// Hard policies mine from the current encoder, re-mined per epoch or once.
TrainResult train(const UniversalEncoder& initial, const Corpus& corpus,
                  const std::vector<Query>& train_queries,
                  const std::vector<Query>& validation_queries,
                  const TextFeaturizer& featurizer, const TrainConfig& config,
                  const NegativePolicy& policy, const ExpansionMap* expansion = nullptr);

} // namespace uniret
