#include "uniret/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace uniret {

double mrr_at_k(const RankedList& ranked, const std::unordered_set<std::string>& relevant,
                std::size_t k) {
    if (k < 1) fail("validation", "metric K must be >= 1");
    std::size_t limit = std::min(k, ranked.entries.size());
    for (std::size_t i = 0; i < limit; ++i)
        if (relevant.count(ranked.entries[i].doc_id))
            return 1.0 / static_cast<double>(i + 1);
    return 0.0;
}

double ndcg_at_k(const RankedList& ranked, const std::unordered_set<std::string>& relevant,
                 std::size_t k) {
    if (k < 1) fail("validation", "metric K must be >= 1");
    if (relevant.empty()) fail("validation", "ndcg needs a non-empty relevant set");
    double dcg = 0.0;
    std::size_t limit = std::min(k, ranked.entries.size());
    for (std::size_t i = 0; i < limit; ++i)
        if (relevant.count(ranked.entries[i].doc_id))
            dcg += 1.0 / std::log2(static_cast<double>(i + 2));
    double ideal = 0.0;
    std::size_t n_ideal = std::min(k, relevant.size());
    for (std::size_t i = 0; i < n_ideal; ++i) ideal += 1.0 / std::log2(static_cast<double>(i + 2));
    return dcg / ideal;
}

double recall_at_k(const RankedList& ranked, const std::unordered_set<std::string>& relevant,
                   std::size_t k) {
    if (k < 1) fail("validation", "metric K must be >= 1");
    if (relevant.empty()) fail("validation", "recall needs a non-empty relevant set");
    std::size_t hits = 0;
    std::size_t limit = std::min(k, ranked.entries.size());
    for (std::size_t i = 0; i < limit; ++i)
        if (relevant.count(ranked.entries[i].doc_id)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double modality_ratio_at_k(const std::vector<RankedList>& lists, std::size_t k) {
    if (lists.empty()) fail("validation", "modality ratio needs at least one list");
    double sum = 0.0;
    std::size_t counted = 0;
    for (const RankedList& list : lists) {
        std::size_t limit = std::min(k, list.entries.size());
        if (limit == 0) continue; // empty list contributes nothing
        std::size_t images = 0;
        for (std::size_t i = 0; i < limit; ++i)
            if (list.entries[i].modality == Modality::Image) ++images;
        sum += static_cast<double>(images) / static_cast<double>(limit);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

namespace {

MetricRow score_query(const RankedList& ranked, const std::unordered_set<std::string>& relevant) {
    MetricRow row;
    row.mrr10 = mrr_at_k(ranked, relevant, 10);
    row.mrr20 = mrr_at_k(ranked, relevant, 20);
    row.ndcg10 = ndcg_at_k(ranked, relevant, 10);
    row.ndcg20 = ndcg_at_k(ranked, relevant, 20);
    row.recall20 = recall_at_k(ranked, relevant, 20);
    row.recall100 = recall_at_k(ranked, relevant, 100);
    return row;
}

void accumulate(MetricRow& acc, const MetricRow& row) {
    acc.mrr10 += row.mrr10;
    acc.mrr20 += row.mrr20;
    acc.ndcg10 += row.ndcg10;
    acc.ndcg20 += row.ndcg20;
    acc.recall20 += row.recall20;
    acc.recall100 += row.recall100;
}

MetricRow mean_of(const MetricRow& acc, std::size_t n) {
    if (n == 0) return {};
    double inv = 1.0 / static_cast<double>(n);
    return {acc.mrr10 * inv,   acc.mrr20 * inv,    acc.ndcg10 * inv,
            acc.ndcg20 * inv,  acc.recall20 * inv, acc.recall100 * inv};
}

std::size_t whitespace_token_count(const std::string& s) {
    std::istringstream in(s);
    std::string tok;
    std::size_t n = 0;
    while (in >> tok) ++n;
    return n;
}

} // namespace

EvalReport evaluate_run(const std::vector<RankedList>& run, const std::vector<Query>& queries,
                        const Corpus& corpus, std::array<std::size_t, 2> caption_length_bounds) {
    std::unordered_map<std::string, const Query*> by_id;
    for (const Query& q : queries) by_id.emplace(q.id, &q);
    std::unordered_map<std::string, const RankedList*> run_by_id;
    for (const RankedList& list : run) {
        if (!by_id.count(list.query_id))
            fail("validation", "run contains unknown query \"" + list.query_id + "\"");
        if (!run_by_id.emplace(list.query_id, &list).second)
            fail("duplicate-id", "run lists query \"" + list.query_id + "\" twice");
    }

    const std::string b0 = std::to_string(caption_length_bounds[0]);
    const std::string b1 = std::to_string(caption_length_bounds[1]);
    const std::string g_short = "[0," + b0 + ")";
    const std::string g_medium = "[" + b0 + "," + b1 + ")";
    const std::string g_long = "[" + b1 + ",inf)";

    EvalReport report;
    MetricRow total;
    std::map<std::string, MetricRow> modality_acc;
    std::map<std::string, MetricRow> caption_acc;
    report.caption_length_counts = {{g_short, 0}, {g_medium, 0}, {g_long, 0}};
    caption_acc = {{g_short, {}}, {g_medium, {}}, {g_long, {}}};
    std::vector<RankedList> scored_lists;
    const RankedList empty_list;

    for (const Query& q : queries) {
        auto it = run_by_id.find(q.id);
        const RankedList& ranked = it == run_by_id.end() ? empty_list : *it->second;
        std::unordered_set<std::string> relevant(q.relevant_ids.begin(), q.relevant_ids.end());
        MetricRow row = score_query(ranked, relevant);
        report.per_query.emplace(q.id, row);
        accumulate(total, row);
        scored_lists.push_back(ranked);
        scored_lists.back().query_id = q.id;

        if (q.answer_modality) {
            std::string key = to_string(*q.answer_modality);
            accumulate(modality_acc[key], row);
            report.breakdown_counts[key] += 1;
        }

        if (q.answer_modality == Modality::Image) {
            // Group by the first relevant image's raw (unexpanded) caption.
            const SourceDoc* image = nullptr;
            for (const SourceDoc& doc : corpus.docs()) {
                if (doc.modality == Modality::Image && relevant.count(doc.id)) {
                    image = &doc;
                    break;
                }
            }
            if (image) {
                std::size_t len = whitespace_token_count(image->body);
                const std::string& key = len < caption_length_bounds[0] ? g_short
                                         : len < caption_length_bounds[1] ? g_medium
                                                                          : g_long;
                accumulate(caption_acc[key], row);
                report.caption_length_counts[key] += 1;
            }
        }
    }

    report.n_queries = queries.size();
    report.aggregates = mean_of(total, queries.size());
    for (const auto& [key, acc] : modality_acc)
        report.breakdown_by_answer_modality[key] = mean_of(acc, report.breakdown_counts[key]);
    for (const auto& [key, acc] : caption_acc)
        report.caption_length_groups[key] = mean_of(acc, report.caption_length_counts[key]);
    report.image_ratio_at_10 = modality_ratio_at_k(scored_lists, 10);
    return report;
}

void save_run(const std::vector<RankedList>& run, const std::filesystem::path& path,
              const std::string& tag) {
    std::string out;
    for (const RankedList& list : run) {
        for (std::size_t i = 0; i < list.entries.size(); ++i) {
            const RankedEntry& e = list.entries[i];
            out += list.query_id;
            out += ' ';
            out += e.doc_id;
            out += ' ';
            out += std::to_string(i + 1);
            out += ' ';
            out += format_double(e.score);
            out += ' ';
            out += tag;
            out += '\n';
        }
    }
    write_text_file(path, out);
}

std::vector<RankedList> load_run(const std::filesystem::path& path, const Corpus& corpus) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open " + path.string());
    std::vector<RankedList> run;
    std::unordered_map<std::string, std::size_t> list_of;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string qid, did, tag;
        std::size_t rank = 0;
        double score = 0.0;
        if (!(ls >> qid >> did >> rank >> score >> tag))
            fail("parse", path.string() + " line " + std::to_string(line_no) +
                              ": expected \"query_id doc_id rank score tag\"");
        const SourceDoc* doc = corpus.find(did);
        if (!doc)
            fail("unknown-id", path.string() + " line " + std::to_string(line_no) +
                                   ": doc \"" + did + "\" not in corpus");
        auto [it, inserted] = list_of.emplace(qid, run.size());
        if (inserted) run.push_back(RankedList{qid, {}});
        RankedList& list = run[it->second];
        if (rank != list.entries.size() + 1)
            fail("validation", path.string() + " line " + std::to_string(line_no) +
                                   ": rank must be 1-based and dense, got " +
                                   std::to_string(rank));
        list.entries.push_back({did, score, doc->modality});
    }
    return run;
}

namespace {

json row_to_json(const MetricRow& row) {
    return json{{"mrr@10", row.mrr10},     {"mrr@20", row.mrr20},
                {"ndcg@10", row.ndcg10},   {"ndcg@20", row.ndcg20},
                {"recall@20", row.recall20}, {"recall@100", row.recall100}};
}

} // namespace

json report_to_json(const EvalReport& report) {
    json j;
    j["n_queries"] = report.n_queries;
    j["aggregates"] = row_to_json(report.aggregates);
    json per;
    for (const auto& [id, row] : report.per_query) per[id] = row_to_json(row);
    j["per_query"] = per;
    json breakdown;
    for (const auto& [key, row] : report.breakdown_by_answer_modality) {
        breakdown[key] = row_to_json(row);
        breakdown[key]["n_queries"] = report.breakdown_counts.at(key);
    }
    j["breakdown_by_answer_modality"] = breakdown;
    j["image_ratio_at_10"] = report.image_ratio_at_10;
    json groups;
    for (const auto& [key, row] : report.caption_length_groups) {
        groups[key] = row_to_json(row);
        groups[key]["n_queries"] = report.caption_length_counts.at(key);
    }
    j["caption_length_groups"] = groups;
    return j;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
    write_text_file(path, report_to_json(report).dump(2) + "\n");
}

} // namespace uniret
