#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qxpand/error.hpp"
#include "qxpand/index.hpp"

namespace qx {

// query id -> relevant doc ids (binary relevance)
using Qrels = std::map<std::string, std::set<std::string>>;

// AveP = sum_k P(k) * rel(k) / |relevant|. Relevant documents that were
// never retrieved still count in the denominator.
inline double average_precision(const RankedList& ranked, const std::set<std::string>& relevant) {
    if (relevant.empty()) throw data_error("average_precision: empty relevant set (metric undefined)");
    double sum = 0.0;
    int hits = 0;
    for (std::size_t k = 0; k < ranked.hits.size(); ++k) {
        if (relevant.count(ranked.hits[k].first)) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return sum / static_cast<double>(relevant.size());
}

struct MapResult {
    double map = 0.0;
    int scored = 0;
    int skipped = 0;  // queries without judgments
    std::vector<std::pair<std::string, double>> per_query;  // (query id, AveP)
};

inline MapResult mean_average_precision(std::span<const RankedList> runs, const Qrels& qrels) {
    MapResult out;
    double sum = 0.0;
    for (const auto& run : runs) {
        auto it = qrels.find(run.query_id);
        if (it == qrels.end() || it->second.empty()) {
            ++out.skipped;
            continue;
        }
        const double ap = average_precision(run, it->second);
        out.per_query.emplace_back(run.query_id, ap);
        sum += ap;
        ++out.scored;
    }
    if (out.scored == 0) throw data_error("mean_average_precision: no query had judgments");
    out.map = sum / out.scored;
    return out;
}

// TREC 4-column qrels: "qid 0 docid rel", whitespace separated.
inline Qrels load_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read qrels file " + path.string());
    Qrels out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, iter, docid;
        int rel;
        if (!(ss >> qid >> iter >> docid >> rel)) throw parse_error("qrels: expected 'qid 0 docid rel'", line_no);
        if (rel > 0) out[qid].insert(docid);
        else out.try_emplace(qid);
    }
    return out;
}

// TREC 6-column run format: "qid Q0 docid rank score tag".
inline void write_run(const std::filesystem::path& path, std::span<const RankedList> runs,
                      const std::string& tag) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write run file " + path.string());
    out.precision(17);
    for (const auto& run : runs)
        for (std::size_t k = 0; k < run.hits.size(); ++k)
            out << run.query_id << " Q0 " << run.hits[k].first << ' ' << k + 1 << ' ' << run.hits[k].second
                << ' ' << tag << '\n';
}

inline std::vector<RankedList> load_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read run file " + path.string());
    std::vector<RankedList> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, q0, docid, tag;
        long long rank;
        double score;
        if (!(ss >> qid >> q0 >> docid >> rank >> score >> tag))
            throw parse_error("run: expected 'qid Q0 docid rank score tag'", line_no);
        if (out.empty() || out.back().query_id != qid) out.push_back({qid, {}});
        out.back().hits.emplace_back(docid, score);
    }
    return out;
}

// JSONL documents: {"id": ..., "text": ...}
inline std::vector<std::pair<std::string, std::string>> load_documents(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read documents file " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("text") ||
            !j["id"].is_string() || !j["text"].is_string())
            throw parse_error("documents: expected {\"id\":..., \"text\":...}", line_no);
        out.emplace_back(j["id"].get<std::string>(), j["text"].get<std::string>());
    }
    return out;
}

// TSV queries: qid TAB text
inline std::vector<std::pair<std::string, std::string>> load_queries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read queries file " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw parse_error("queries: expected 'qid<TAB>text'", line_no);
        out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

}  // namespace qx
