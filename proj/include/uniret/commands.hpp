#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uniret/eval.hpp"
#include "uniret/featurizer.hpp"
#include "uniret/jsonio.hpp"
#include "uniret/training.hpp"

namespace uniret {

inline constexpr const char* kArtifactVersion = "uniret 0.1.0";

/// Every command drops a manifest next to its primary output
/// (<output>.manifest.json): command name, resolved config, inputs/outputs,
/// seed, artifact version and wall-clock duration. Re-running a command with
/// the manifest's config reproduces the output byte for byte.
void write_manifest(const std::filesystem::path& primary_output, const std::string& command,
                    const json& config, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    std::optional<std::uint64_t> seed, double duration_ms);

struct SynthOptions {
    std::uint64_t seed = 0;
    std::size_t n_text = 100;
    std::size_t n_image = 100;
    std::size_t n_queries = 50;
    double image_query_fraction = 0.516;
    std::size_t d_img = 32;
    std::filesystem::path out_corpus;
    std::filesystem::path out_queries;
};
void cmd_synth(const SynthOptions& opt);

struct TrainOptions {
    std::filesystem::path corpus;
    std::filesystem::path queries;
    std::optional<std::filesystem::path> val_queries; // else split by val_fraction
    double val_fraction = 1.0 / 3.0;
    std::filesystem::path out_checkpoint;
    std::optional<std::filesystem::path> out_log; // JSONL, one event per line
    std::string negatives = "inbatch-balanced";
    std::size_t pool = 100;
    std::optional<std::size_t> n_negatives;
    TrainConfig config;
    TextFeaturizer featurizer;
    std::size_t dim = 64;          // shared embedding dimension D
    std::size_t d_img_fallback = 32; // image head size when the corpus has no images
    std::optional<std::filesystem::path> init_checkpoint;
    std::optional<std::filesystem::path> verbalizations;
    bool expand_template = false;
    bool keep_final = false; // write the final instead of the best checkpoint
};
struct TrainSummary {
    double initial_mrr10 = 0.0;
    double best_mrr10 = 0.0;
};
TrainSummary cmd_train(const TrainOptions& opt);

enum class Route { Universal, Text, Image, Oracle };
Route route_from_string(const std::string& s);

struct SearchOptions {
    std::filesystem::path corpus;
    std::filesystem::path queries;
    std::filesystem::path checkpoint;
    Route route = Route::Universal;
    std::size_t k = 100;
    std::filesystem::path out_run;
    std::string tag; // defaults to the route name
    TextFeaturizer featurizer;
    std::optional<std::filesystem::path> verbalizations;
    bool expand_template = false;
    std::optional<std::filesystem::path> save_index;
};
void cmd_search(const SearchOptions& opt);

struct FuseOptions {
    std::filesystem::path corpus;
    std::filesystem::path text_run;
    std::filesystem::path image_run;
    std::size_t k = 100;
    double rank_constant = 0.0; // 60 gives the common smoothed RRF variant
    std::filesystem::path out_run;
    std::string tag = "fused";
};
void cmd_fuse(const FuseOptions& opt);

struct EvalOptions {
    std::filesystem::path run;
    std::filesystem::path queries;
    std::filesystem::path corpus;
    std::filesystem::path out_report;
    std::array<std::size_t, 2> caption_bounds = {10, 20};
};
EvalReport cmd_eval(const EvalOptions& opt);

enum class VerbalizeJob { Template, CaptionInputs, QueryInputs };

struct VerbalizeOptions {
    std::filesystem::path corpus;
    std::filesystem::path out;
    VerbalizeJob job = VerbalizeJob::Template;
    std::optional<std::filesystem::path> queries; // required for query inputs
};
void cmd_verbalize(const VerbalizeOptions& opt);

struct ExportOptions {
    std::filesystem::path corpus;
    std::filesystem::path checkpoint;
    std::filesystem::path out;
    TextFeaturizer featurizer;
    std::optional<std::filesystem::path> verbalizations;
    bool expand_template = false;
};
void cmd_export_embeddings(const ExportOptions& opt);

} // namespace uniret
