#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "uniret/commands.hpp"

namespace {

using namespace uniret;

void add_featurizer_flags(CLI::App* cmd, TextFeaturizer& f) {
    cmd->add_option("--text-dim", f.dim, "Hashed text feature dimension")->capture_default_str();
    cmd->add_option("--hash-seeds", f.n_hash_seeds, "Hash buckets per token")
        ->capture_default_str();
    cmd->add_option("--max-tokens", f.max_tokens, "Token truncation length")
        ->capture_default_str();
}

void print_metric_table(const EvalReport& report) {
    auto pct = [](double v) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * v);
        return std::string(buf);
    };
    auto print_row = [&](const std::string& name, const MetricRow& row, std::size_t n) {
        std::printf("%-10s %s  %s  %s  %s  %s  %s  (%zu queries)\n", name.c_str(),
                    pct(row.mrr10).c_str(), pct(row.ndcg10).c_str(), pct(row.mrr20).c_str(),
                    pct(row.ndcg20).c_str(), pct(row.recall20).c_str(), pct(row.recall100).c_str(),
                    n);
    };
    std::printf("%-10s %6s  %6s  %6s  %6s  %6s  %6s\n", "", "MRR@10", "NDCG@10", "MRR@20",
                "NDCG@20", "Rec@20", "Rec@100");
    print_row("all", report.aggregates, report.n_queries);
    for (const auto& [key, row] : report.breakdown_by_answer_modality)
        print_row(key, row, report.breakdown_counts.at(key));
    std::printf("image_ratio@10 %.4f\n", report.image_ratio_at_10);
    for (const auto& [key, row] : report.caption_length_groups)
        if (report.caption_length_counts.at(key) > 0)
            print_row("len" + key, row, report.caption_length_counts.at(key));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"uniret: universal multi-modality dense retrieval engine"};
    app.require_subcommand(1);
    bool json_output = false;
    app.add_flag("--json", json_output, "Machine-readable stdout");

    SynthOptions synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus + queries");
    synth_cmd->add_option("--seed", synth.seed, "RNG seed (fans out to all draws)")->required();
    synth_cmd->add_option("--n-text", synth.n_text, "Text docs")->capture_default_str();
    synth_cmd->add_option("--n-image", synth.n_image, "Image docs")->capture_default_str();
    synth_cmd->add_option("--n-queries", synth.n_queries, "Queries")->capture_default_str();
    synth_cmd
        ->add_option("--image-query-fraction", synth.image_query_fraction,
                     "Fraction of image-answerable queries")
        ->capture_default_str();
    synth_cmd->add_option("--d-img", synth.d_img, "Image feature dimension")
        ->capture_default_str();
    synth_cmd->add_option("--out-corpus", synth.out_corpus, "Corpus JSONL output")
        ->capture_default_str()
        ->required();
    synth_cmd->add_option("--out-queries", synth.out_queries, "Query JSONL output")->required();

    TrainOptions train_opt;
    std::string negatives = train_opt.negatives;
    std::string optimizer = "adamw";
    std::string remine = "per-epoch";
    std::string keep = "best";
    std::size_t n_negatives = 0;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the universal encoder");
    train_cmd->add_option("--corpus", train_opt.corpus, "Corpus JSONL")->required();
    train_cmd->add_option("--queries", train_opt.queries, "Training query JSONL")->required();
    train_cmd->add_option("--val-queries", train_opt.val_queries,
                          "Validation query JSONL (default: split --queries)");
    train_cmd->add_option("--val-fraction", train_opt.val_fraction,
                          "Validation fraction when splitting --queries")
        ->capture_default_str();
    train_cmd->add_option("--out-checkpoint", train_opt.out_checkpoint, "Checkpoint output")
        ->required();
    train_cmd->add_option("--log", train_opt.out_log, "Training log JSONL output");
    train_cmd
        ->add_option("--negatives", negatives,
                     "inbatch-random | inbatch-balanced | hard-text | hard-image | "
                     "hard-mixed T,I | hard-balanced K")
        ->capture_default_str();
    train_cmd->add_option("--pool", train_opt.pool, "Hard-negative retrieval pool size")
        ->capture_default_str();
    train_cmd->add_option("--n-negatives", n_negatives,
                          "Negatives per example for inbatch / hard-only policies");
    train_cmd->add_option("--remine", remine, "Hard-negative refresh: once | per-epoch")
        ->capture_default_str();
    train_cmd->add_flag("--add-inbatch", train_opt.config.add_inbatch,
                        "Also use in-batch positives as negatives with hard policies");
    train_cmd->add_option("--tau", train_opt.config.tau, "Softmax temperature")
        ->capture_default_str();
    train_cmd->add_option("--batch-size", train_opt.config.batch_size, "Minibatch size")
        ->capture_default_str();
    train_cmd->add_option("--lr", train_opt.config.learning_rate, "Learning rate")
        ->capture_default_str();
    train_cmd->add_option("--max-epochs", train_opt.config.max_epochs, "Epoch cap")
        ->capture_default_str();
    train_cmd->add_option("--eval-every", train_opt.config.eval_every_steps,
                          "Steps between validation evals")
        ->capture_default_str();
    train_cmd->add_option("--patience", train_opt.config.early_stop_patience,
                          "Evals without improvement before stopping")
        ->capture_default_str();
    train_cmd->add_option("--optimizer", optimizer, "adamw | sgd")->capture_default_str();
    train_cmd->add_option("--beta1", train_opt.config.beta1, "AdamW beta1")->capture_default_str();
    train_cmd->add_option("--beta2", train_opt.config.beta2, "AdamW beta2")->capture_default_str();
    train_cmd->add_option("--eps", train_opt.config.eps, "AdamW epsilon")->capture_default_str();
    train_cmd->add_option("--weight-decay", train_opt.config.weight_decay, "AdamW weight decay")
        ->capture_default_str();
    train_cmd->add_option("--seed", train_opt.config.seed, "Training seed")->required();
    train_cmd->add_option("--dim", train_opt.dim, "Shared embedding dimension")
        ->capture_default_str();
    train_cmd->add_option("--init-checkpoint", train_opt.init_checkpoint,
                          "Warm-start from an existing checkpoint");
    train_cmd->add_option("--verbalizations", train_opt.verbalizations,
                          "Verbalization JSONL for caption expansion");
    train_cmd->add_flag("--expand-template", train_opt.expand_template,
                        "Expand captions with the template verbalizer");
    train_cmd->add_option("--keep", keep, "Which checkpoint to write: best | final")
        ->capture_default_str();
    add_featurizer_flags(train_cmd, train_opt.featurizer);

    SearchOptions search_opt;
    std::string route = "universal";
    CLI::App* search_cmd = app.add_subcommand("search", "Encode queries and retrieve top-K");
    search_cmd->add_option("--corpus", search_opt.corpus, "Corpus JSONL")->required();
    search_cmd->add_option("--queries", search_opt.queries, "Query JSONL")->required();
    search_cmd->add_option("--checkpoint", search_opt.checkpoint, "Encoder checkpoint")
        ->required();
    search_cmd->add_option("--route", route, "universal | text | image | oracle")
        ->capture_default_str();
    search_cmd->add_option("-K,--k", search_opt.k, "Results per query")->capture_default_str();
    search_cmd->add_option("--out-run", search_opt.out_run, "Run file output")->required();
    search_cmd->add_option("--tag", search_opt.tag, "Run tag (default: route name)");
    search_cmd->add_option("--verbalizations", search_opt.verbalizations,
                           "Verbalization JSONL for caption expansion");
    search_cmd->add_flag("--expand-template", search_opt.expand_template,
                         "Expand captions with the template verbalizer");
    search_cmd->add_option("--save-index", search_opt.save_index, "Also write an index snapshot");
    add_featurizer_flags(search_cmd, search_opt.featurizer);

    FuseOptions fuse_opt;
    CLI::App* fuse_cmd = app.add_subcommand("fuse", "Reciprocal-rank fuse two per-modality runs");
    fuse_cmd->add_option("--corpus", fuse_opt.corpus, "Corpus JSONL")->required();
    fuse_cmd->add_option("--text-run", fuse_opt.text_run, "Text retriever run file")->required();
    fuse_cmd->add_option("--image-run", fuse_opt.image_run, "Image retriever run file")
        ->required();
    fuse_cmd->add_option("-K,--k", fuse_opt.k, "Fused results per query")->capture_default_str();
    fuse_cmd
        ->add_option("--rank-constant", fuse_opt.rank_constant,
                     "Score 1/(c+rank); 0 = pure rank reciprocals, 60 = smoothed RRF")
        ->capture_default_str();
    fuse_cmd->add_option("--out-run", fuse_opt.out_run, "Fused run output")->required();
    fuse_cmd->add_option("--tag", fuse_opt.tag, "Run tag")->capture_default_str();

    EvalOptions eval_opt;
    std::vector<std::size_t> bounds;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score a run file");
    eval_cmd->add_option("--run", eval_opt.run, "Run file")->required();
    eval_cmd->add_option("--queries", eval_opt.queries, "Query JSONL")->required();
    eval_cmd->add_option("--corpus", eval_opt.corpus, "Corpus JSONL")->required();
    eval_cmd->add_option("--out-report", eval_opt.out_report, "Report JSON output")->required();
    eval_cmd->add_option("--caption-bounds", bounds,
                         "Two caption-length group bounds (default 10 20)")
        ->expected(2);

    VerbalizeOptions verb_opt;
    std::string verb_mode = "template";
    CLI::App* verb_cmd =
        app.add_subcommand("verbalize", "Produce verbalizations or generator inputs");
    verb_cmd->add_option("--corpus", verb_opt.corpus, "Corpus JSONL")->required();
    verb_cmd->add_option("--out", verb_opt.out, "Output JSONL")->required();
    verb_cmd->add_option("--mode", verb_mode, "template | caption-inputs | query-inputs")
        ->capture_default_str();
    verb_cmd->add_option("--queries", verb_opt.queries, "Query JSONL (query-inputs mode)");

    ExportOptions export_opt;
    CLI::App* export_cmd =
        app.add_subcommand("export-embeddings", "Write one JSON line per doc embedding");
    export_cmd->add_option("--corpus", export_opt.corpus, "Corpus JSONL")->required();
    export_cmd->add_option("--checkpoint", export_opt.checkpoint, "Encoder checkpoint")
        ->required();
    export_cmd->add_option("--out", export_opt.out, "Embedding JSONL output")->required();
    export_cmd->add_option("--verbalizations", export_opt.verbalizations,
                           "Verbalization JSONL for caption expansion");
    export_cmd->add_flag("--expand-template", export_opt.expand_template,
                         "Expand captions with the template verbalizer");
    add_featurizer_flags(export_cmd, export_opt.featurizer);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            cmd_synth(synth);
        } else if (*train_cmd) {
            train_opt.negatives = negatives;
            if (n_negatives > 0) train_opt.n_negatives = n_negatives;
            if (optimizer == "sgd")
                train_opt.config.optimizer = OptimizerKind::SGD;
            else if (optimizer == "adamw")
                train_opt.config.optimizer = OptimizerKind::AdamW;
            else
                fail("usage", "unknown optimizer \"" + optimizer + "\"");
            if (remine == "once")
                train_opt.config.remine = RemineSchedule::Once;
            else if (remine == "per-epoch")
                train_opt.config.remine = RemineSchedule::PerEpoch;
            else
                fail("usage", "unknown remine schedule \"" + remine + "\"");
            if (keep == "final")
                train_opt.keep_final = true;
            else if (keep != "best")
                fail("usage", "unknown --keep value \"" + keep + "\"");
            TrainSummary summary = cmd_train(train_opt);
            if (json_output)
                std::cout << json{{"initial_mrr10", summary.initial_mrr10},
                                  {"best_mrr10", summary.best_mrr10}}
                                 .dump()
                          << "\n";
            else
                std::printf("initial MRR@10 %.4f  best MRR@10 %.4f\n", summary.initial_mrr10,
                            summary.best_mrr10);
        } else if (*search_cmd) {
            search_opt.route = route_from_string(route);
            cmd_search(search_opt);
        } else if (*fuse_cmd) {
            cmd_fuse(fuse_opt);
        } else if (*eval_cmd) {
            if (!bounds.empty()) eval_opt.caption_bounds = {bounds[0], bounds[1]};
            EvalReport report = cmd_eval(eval_opt);
            if (json_output)
                std::cout << report_to_json(report).dump() << "\n";
            else
                print_metric_table(report);
        } else if (*verb_cmd) {
            if (verb_mode == "template")
                verb_opt.job = VerbalizeJob::Template;
            else if (verb_mode == "caption-inputs")
                verb_opt.job = VerbalizeJob::CaptionInputs;
            else if (verb_mode == "query-inputs")
                verb_opt.job = VerbalizeJob::QueryInputs;
            else
                fail("usage", "unknown verbalize mode \"" + verb_mode + "\"");
            cmd_verbalize(verb_opt);
        } else if (*export_cmd) {
            cmd_export_embeddings(export_opt);
        }
    } catch (const Error& e) {
        std::cerr << e.line() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
