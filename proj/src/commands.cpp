#include "uniret/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "uniret/fusion.hpp"
#include "uniret/verbalize.hpp"

namespace uniret {

namespace {

class Stopwatch {
public:
    double elapsed_ms() const {
        auto now = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(now - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json featurizer_config(const TextFeaturizer& f) {
    return json{{"dim", f.dim}, {"n_hash_seeds", f.n_hash_seeds}, {"max_tokens", f.max_tokens}};
}

/// Resolve the expansion map a command should encode with: an external
/// verbalization file, the deterministic template, or none.
std::optional<ExpansionMap> resolve_expansion(const Corpus& corpus,
                                              const std::optional<std::filesystem::path>& file,
                                              bool expand_template) {
    if (file && expand_template)
        fail("usage", "--verbalizations and --expand-template are mutually exclusive");
    if (file) {
        auto verbs = load_external_verbalizations(*file, &corpus);
        return build_expansion_map(corpus, verbs);
    }
    if (expand_template) return template_expansion_map(corpus);
    return std::nullopt;
}

} // namespace

void write_manifest(const std::filesystem::path& primary_output, const std::string& command,
                    const json& config, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    std::optional<std::uint64_t> seed, double duration_ms) {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    if (seed) j["seed"] = *seed;
    j["artifact_version"] = kArtifactVersion;
    j["duration_ms"] = duration_ms;
    std::filesystem::path path = primary_output;
    path += ".manifest.json";
    write_text_file(path, j.dump(2) + "\n");
}

void cmd_synth(const SynthOptions& opt) {
    Stopwatch timer;
    SyntheticSpec spec;
    spec.seed = opt.seed;
    spec.n_text = opt.n_text;
    spec.n_image = opt.n_image;
    spec.n_queries = opt.n_queries;
    spec.image_query_fraction = opt.image_query_fraction;
    spec.d_img = opt.d_img;
    auto [corpus, queries] = generate_synthetic(spec);
    save_corpus(corpus, opt.out_corpus);
    save_queries(queries, opt.out_queries);

    json config{{"seed", opt.seed},
                {"n_text", opt.n_text},
                {"n_image", opt.n_image},
                {"n_queries", opt.n_queries},
                {"image_query_fraction", opt.image_query_fraction},
                {"d_img", opt.d_img},
                {"out_corpus", opt.out_corpus.string()},
                {"out_queries", opt.out_queries.string()}};
    write_manifest(opt.out_corpus, "synth", config, {},
                   {opt.out_corpus.string(), opt.out_queries.string()}, opt.seed,
                   timer.elapsed_ms());
}

TrainSummary cmd_train(const TrainOptions& opt) {
    Stopwatch timer;
    Corpus corpus = load_corpus(opt.corpus);
    std::vector<Query> all_queries = load_queries(opt.queries, corpus);

    std::vector<Query> train_q, val_q;
    if (opt.val_queries) {
        train_q = all_queries;
        val_q = load_queries(*opt.val_queries, corpus);
    } else {
        if (opt.val_fraction <= 0.0 || opt.val_fraction >= 1.0)
            fail("usage", "val_fraction must be in (0,1) when no validation file is given");
        std::size_t n_val = static_cast<std::size_t>(
            std::llround(opt.val_fraction * static_cast<double>(all_queries.size())));
        n_val = std::max<std::size_t>(1, std::min(n_val, all_queries.size() - 1));
        train_q.assign(all_queries.begin(), all_queries.end() - static_cast<std::ptrdiff_t>(n_val));
        val_q.assign(all_queries.end() - static_cast<std::ptrdiff_t>(n_val), all_queries.end());
    }

    NegativePolicy policy = NegativePolicy::parse(opt.negatives);
    policy.pool_size = opt.pool;
    if (opt.n_negatives) policy.n_negatives = *opt.n_negatives;

    std::optional<ExpansionMap> expansion =
        resolve_expansion(corpus, opt.verbalizations, opt.expand_template);

    UniversalEncoder enc;
    if (opt.init_checkpoint) {
        enc = load_checkpoint(*opt.init_checkpoint);
        if (enc.text_dim() != opt.featurizer.dim)
            fail("dimension-mismatch", "checkpoint text dim " + std::to_string(enc.text_dim()) +
                                           " != featurizer dim " +
                                           std::to_string(opt.featurizer.dim));
        if (corpus.d_img() != 0 && enc.image_dim() != corpus.d_img())
            fail("dimension-mismatch", "checkpoint image dim " + std::to_string(enc.image_dim()) +
                                           " != corpus d_img " + std::to_string(corpus.d_img()));
    } else {
        std::size_t d_img = corpus.d_img() ? corpus.d_img() : opt.d_img_fallback;
        enc = make_encoder(opt.dim, opt.featurizer.dim, d_img, opt.config.seed);
    }

    TrainResult result = train(enc, corpus, train_q, val_q, opt.featurizer, opt.config, policy,
                               expansion ? &*expansion : nullptr);

    save_checkpoint(opt.keep_final ? result.final : result.best, opt.out_checkpoint);
    if (opt.out_log) {
        std::string lines;
        for (const json& event : result.log) {
            lines += event.dump();
            lines += '\n';
        }
        write_text_file(*opt.out_log, lines);
    }

    json config{{"corpus", opt.corpus.string()},
                {"queries", opt.queries.string()},
                {"val_queries", opt.val_queries ? opt.val_queries->string() : ""},
                {"val_fraction", opt.val_fraction},
                {"negatives", policy.describe()},
                {"pool", policy.pool_size},
                {"tau", opt.config.tau},
                {"batch_size", opt.config.batch_size},
                {"learning_rate", opt.config.learning_rate},
                {"max_epochs", opt.config.max_epochs},
                {"eval_every_steps", opt.config.eval_every_steps},
                {"early_stop_patience", opt.config.early_stop_patience},
                {"optimizer", opt.config.optimizer == OptimizerKind::AdamW ? "adamw" : "sgd"},
                {"beta1", opt.config.beta1},
                {"beta2", opt.config.beta2},
                {"eps", opt.config.eps},
                {"weight_decay", opt.config.weight_decay},
                {"remine", opt.config.remine == RemineSchedule::PerEpoch ? "per-epoch" : "once"},
                {"add_inbatch", opt.config.add_inbatch},
                {"dim", opt.dim},
                {"featurizer", featurizer_config(opt.featurizer)},
                {"init_checkpoint", opt.init_checkpoint ? opt.init_checkpoint->string() : ""},
                {"verbalizations", opt.verbalizations ? opt.verbalizations->string() : ""},
                {"expand_template", opt.expand_template},
                {"keep", opt.keep_final ? "final" : "best"},
                {"seed", opt.config.seed}};
    std::vector<std::string> inputs{opt.corpus.string(), opt.queries.string()};
    if (opt.val_queries) inputs.push_back(opt.val_queries->string());
    if (opt.init_checkpoint) inputs.push_back(opt.init_checkpoint->string());
    if (opt.verbalizations) inputs.push_back(opt.verbalizations->string());
    std::vector<std::string> outputs{opt.out_checkpoint.string()};
    if (opt.out_log) outputs.push_back(opt.out_log->string());
    write_manifest(opt.out_checkpoint, "train", config, inputs, outputs, opt.config.seed,
                   timer.elapsed_ms());

    return {result.initial_mrr10, result.best_mrr10};
}

Route route_from_string(const std::string& s) {
    if (s == "universal") return Route::Universal;
    if (s == "text") return Route::Text;
    if (s == "image") return Route::Image;
    if (s == "oracle") return Route::Oracle;
    fail("usage", "unknown route \"" + s + "\" (universal|text|image|oracle)");
}

namespace {

std::string route_name(Route r) {
    switch (r) {
        case Route::Universal: return "universal";
        case Route::Text: return "text";
        case Route::Image: return "image";
        case Route::Oracle: return "oracle";
    }
    return "?";
}

} // namespace

void cmd_search(const SearchOptions& opt) {
    Stopwatch timer;
    Corpus corpus = load_corpus(opt.corpus);
    std::vector<Query> queries = load_queries(opt.queries, corpus);
    UniversalEncoder enc = load_checkpoint(opt.checkpoint);
    if (enc.text_dim() != opt.featurizer.dim)
        fail("dimension-mismatch", "checkpoint text dim " + std::to_string(enc.text_dim()) +
                                       " != featurizer dim " + std::to_string(opt.featurizer.dim));

    std::optional<ExpansionMap> expansion =
        resolve_expansion(corpus, opt.verbalizations, opt.expand_template);

    Mat table = encode_corpus(enc, corpus, opt.featurizer, expansion ? &*expansion : nullptr);
    std::vector<std::string> ids;
    std::vector<Modality> modalities;
    for (const SourceDoc& doc : corpus.docs()) {
        ids.push_back(doc.id);
        modalities.push_back(doc.modality);
    }
    DenseIndex index = DenseIndex::build(table, std::move(ids), std::move(modalities));
    if (opt.save_index) index.save(*opt.save_index);

    std::vector<RankedList> run;
    run.reserve(queries.size());
    if (opt.route == Route::Oracle) {
        run = oracle_route(queries, index, enc, opt.featurizer, opt.k);
    } else {
        for (const Query& q : queries) {
            Vec q_emb = encode_query(enc, featurize_text(opt.featurizer, q.text));
            switch (opt.route) {
                case Route::Universal: run.push_back(index.search(q_emb, opt.k, q.id)); break;
                case Route::Text:
                    run.push_back(index.search_filtered(q_emb, opt.k, Modality::Text, q.id));
                    break;
                case Route::Image:
                    run.push_back(index.search_filtered(q_emb, opt.k, Modality::Image, q.id));
                    break;
                case Route::Oracle: break;
            }
        }
    }
    std::string tag = opt.tag.empty() ? route_name(opt.route) : opt.tag;
    save_run(run, opt.out_run, tag);

    json config{{"corpus", opt.corpus.string()},
                {"queries", opt.queries.string()},
                {"checkpoint", opt.checkpoint.string()},
                {"route", route_name(opt.route)},
                {"k", opt.k},
                {"tag", tag},
                {"featurizer", featurizer_config(opt.featurizer)},
                {"verbalizations", opt.verbalizations ? opt.verbalizations->string() : ""},
                {"expand_template", opt.expand_template}};
    std::vector<std::string> outputs{opt.out_run.string()};
    if (opt.save_index) outputs.push_back(opt.save_index->string());
    write_manifest(opt.out_run, "search", config,
                   {opt.corpus.string(), opt.queries.string(), opt.checkpoint.string()}, outputs,
                   std::nullopt, timer.elapsed_ms());
}

void cmd_fuse(const FuseOptions& opt) {
    Stopwatch timer;
    Corpus corpus = load_corpus(opt.corpus);
    std::vector<RankedList> text_run = load_run(opt.text_run, corpus);
    std::vector<RankedList> image_run = load_run(opt.image_run, corpus);
    for (const RankedList& list : text_run)
        for (const RankedEntry& e : list.entries)
            if (e.modality != Modality::Text)
                fail("validation", "text run contains image doc \"" + e.doc_id + "\"");
    for (const RankedList& list : image_run)
        for (const RankedEntry& e : list.entries)
            if (e.modality != Modality::Image)
                fail("validation", "image run contains text doc \"" + e.doc_id + "\"");

    std::map<std::string, FusionInput> by_query;
    for (RankedList& list : text_run) by_query[list.query_id].text_list = std::move(list);
    for (RankedList& list : image_run) by_query[list.query_id].image_list = std::move(list);

    std::vector<RankedList> fused;
    for (auto& [qid, input] : by_query) {
        input.text_list.query_id = qid;
        input.image_list.query_id = qid;
        fused.push_back(reciprocal_rank_fuse(input, opt.k, opt.rank_constant));
    }
    save_run(fused, opt.out_run, opt.tag);

    json config{{"corpus", opt.corpus.string()},
                {"text_run", opt.text_run.string()},
                {"image_run", opt.image_run.string()},
                {"k", opt.k},
                {"rank_constant", opt.rank_constant},
                {"tag", opt.tag}};
    write_manifest(opt.out_run, "fuse", config,
                   {opt.corpus.string(), opt.text_run.string(), opt.image_run.string()},
                   {opt.out_run.string()}, std::nullopt, timer.elapsed_ms());
}

EvalReport cmd_eval(const EvalOptions& opt) {
    Stopwatch timer;
    Corpus corpus = load_corpus(opt.corpus);
    std::vector<Query> queries = load_queries(opt.queries, corpus);
    std::vector<RankedList> run = load_run(opt.run, corpus);
    EvalReport report = evaluate_run(run, queries, corpus, opt.caption_bounds);
    save_report(report, opt.out_report);

    json config{{"run", opt.run.string()},
                {"queries", opt.queries.string()},
                {"corpus", opt.corpus.string()},
                {"caption_bounds", opt.caption_bounds}};
    write_manifest(opt.out_report, "eval", config,
                   {opt.run.string(), opt.queries.string(), opt.corpus.string()},
                   {opt.out_report.string()}, std::nullopt, timer.elapsed_ms());
    return report;
}

void cmd_verbalize(const VerbalizeOptions& opt) {
    Stopwatch timer;
    Corpus corpus = load_corpus(opt.corpus);
    std::string job_name;
    if (opt.job == VerbalizeJob::Template) {
        job_name = "template";
        std::vector<Verbalization> verbs;
        for (const SourceDoc& doc : corpus.docs())
            if (doc.modality == Modality::Image) verbs.push_back(template_verbalize(doc));
        save_verbalizations(verbs, opt.out, "template");
    } else {
        std::vector<Query> queries;
        std::unordered_map<std::string, const Query*> related;
        if (opt.job == VerbalizeJob::QueryInputs) {
            job_name = "query-inputs";
            if (!opt.queries) fail("usage", "query-style inputs need --queries");
            queries = load_queries(*opt.queries, corpus);
            // First query naming the image in its qrels counts as related.
            for (const Query& q : queries)
                for (const std::string& rid : q.relevant_ids)
                    related.try_emplace(rid, &q);
        } else {
            job_name = "caption-inputs";
        }
        std::string lines;
        for (const SourceDoc& doc : corpus.docs()) {
            if (doc.modality != Modality::Image) continue;
            if (opt.job == VerbalizeJob::CaptionInputs) {
                lines += verbalization_input_to_json(
                             build_verbalization_input(doc, VerbalizationMode::CaptionStyle))
                             .dump();
                lines += '\n';
            } else {
                auto it = related.find(doc.id);
                if (it == related.end()) continue; // images without a related query are skipped
                lines += verbalization_input_to_json(build_verbalization_input(
                                                         doc, VerbalizationMode::QueryStyle,
                                                         it->second))
                             .dump();
                lines += '\n';
            }
        }
        write_text_file(opt.out, lines);
    }

    json config{{"corpus", opt.corpus.string()},
                {"mode", job_name},
                {"queries", opt.queries ? opt.queries->string() : ""}};
    std::vector<std::string> inputs{opt.corpus.string()};
    if (opt.queries) inputs.push_back(opt.queries->string());
    write_manifest(opt.out, "verbalize", config, inputs, {opt.out.string()}, std::nullopt,
                   timer.elapsed_ms());
}

void cmd_export_embeddings(const ExportOptions& opt) {
    Stopwatch timer;
    Corpus corpus = load_corpus(opt.corpus);
    UniversalEncoder enc = load_checkpoint(opt.checkpoint);
    if (enc.text_dim() != opt.featurizer.dim)
        fail("dimension-mismatch", "checkpoint text dim " + std::to_string(enc.text_dim()) +
                                       " != featurizer dim " + std::to_string(opt.featurizer.dim));
    std::optional<ExpansionMap> expansion =
        resolve_expansion(corpus, opt.verbalizations, opt.expand_template);
    Mat table = encode_corpus(enc, corpus, opt.featurizer, expansion ? &*expansion : nullptr);
    std::vector<std::string> ids;
    std::vector<Modality> modalities;
    for (const SourceDoc& doc : corpus.docs()) {
        ids.push_back(doc.id);
        modalities.push_back(doc.modality);
    }
    DenseIndex index = DenseIndex::build(table, std::move(ids), std::move(modalities));
    index.export_embeddings(opt.out);

    json config{{"corpus", opt.corpus.string()},
                {"checkpoint", opt.checkpoint.string()},
                {"featurizer", featurizer_config(opt.featurizer)},
                {"verbalizations", opt.verbalizations ? opt.verbalizations->string() : ""},
                {"expand_template", opt.expand_template}};
    write_manifest(opt.out, "export-embeddings", config,
                   {opt.corpus.string(), opt.checkpoint.string()}, {opt.out.string()},
                   std::nullopt, timer.elapsed_ms());
}

} // namespace uniret
