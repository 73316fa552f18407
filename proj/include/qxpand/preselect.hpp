#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qxpand/error.hpp"
#include "qxpand/index.hpp"

namespace qx {

struct PreselectionSet {
    std::string question;
    std::vector<std::pair<std::string, int>> candidates;  // (text, binary label)
};

// JSONL: {"question":..., "candidates":[{"text":..., "label":0|1}, ...]}
inline std::vector<PreselectionSet> load_preselection_sets(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read preselection file " + path.string());
    std::vector<PreselectionSet> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("question") || !j.contains("candidates") ||
            !j["question"].is_string() || !j["candidates"].is_array())
            throw parse_error("preselection: expected {\"question\":..., \"candidates\":[...]}", line_no);
        PreselectionSet set;
        set.question = j["question"].get<std::string>();
        for (const auto& c : j["candidates"]) {
            if (!c.is_object() || !c.contains("text") || !c.contains("label"))
                throw parse_error("preselection: candidate needs text and label", line_no);
            set.candidates.emplace_back(c["text"].get<std::string>(), c["label"].get<int>() != 0 ? 1 : 0);
        }
        if (set.candidates.empty()) throw parse_error("preselection: set with no candidates", line_no);
        out.push_back(std::move(set));
    }
    return out;
}

// Per-query accuracy denominator: min(k, #candidates) is the default
// reading; "relevant" divides by the number of relevant candidates
// instead.
enum class PreselectDenominator { min_k, relevant };

struct PreselectResult {
    double accuracy = 0.0;
    double coverage = 0.0;
    int n = 0;
    std::vector<double> per_query_accuracy;
    std::vector<double> per_query_coverage;
};

// Candidates of each set are ranked by ltc cosine against the (optionally
// expanded) question over an index of that set's candidates; ties keep
// input order. accuracy averages |relevant in top-k| / denominator;
// coverage is the fraction of queries with at least one relevant hit in
// the top k.
inline PreselectResult preselect(std::span<const PreselectionSet> sets, const ExpandFn* expander, int k = 10,
                                 PreselectDenominator denom = PreselectDenominator::min_k) {
    if (k < 1) throw data_error("preselect: k must be >= 1");
    PreselectResult out;
    for (const auto& set : sets) {
        if (set.candidates.empty()) throw data_error("preselect: set with no candidates");
        std::vector<std::pair<std::string, std::string>> docs;
        for (std::size_t i = 0; i < set.candidates.size(); ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "c%06zu", i);
            docs.emplace_back(id, set.candidates[i].first);
        }
        auto idx = InvertedIndex::build(docs);

        auto query = tokenize(set.question);
        if (expander && *expander)
            for (auto& term : (*expander)(set.question)) query.push_back(std::move(term));

        // rank every candidate (zero scores included), ties by id = input order
        std::vector<std::pair<std::string, double>> scored;
        for (const auto& [id, text] : docs) scored.emplace_back(id, score_tfidf(query, id, idx));
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });

        const int top = std::min<int>(k, static_cast<int>(scored.size()));
        int relevant_in_top = 0;
        for (int i = 0; i < top; ++i) {
            const std::size_t cand = std::stoul(scored[i].first.substr(1));
            relevant_in_top += set.candidates[cand].second;
        }
        int relevant_total = 0;
        for (const auto& [text, label] : set.candidates) relevant_total += label;

        double q_acc = 0.0;
        if (denom == PreselectDenominator::min_k)
            q_acc = static_cast<double>(relevant_in_top) / std::min<int>(k, static_cast<int>(set.candidates.size()));
        else
            q_acc = relevant_total == 0 ? 0.0 : static_cast<double>(relevant_in_top) / relevant_total;
        const double q_cov = relevant_in_top > 0 ? 1.0 : 0.0;

        out.per_query_accuracy.push_back(q_acc);
        out.per_query_coverage.push_back(q_cov);
        out.accuracy += q_acc;
        out.coverage += q_cov;
        ++out.n;
    }
    if (out.n == 0) throw data_error("preselect: no sets");
    out.accuracy /= out.n;
    out.coverage /= out.n;
    return out;
}

}  // namespace qx
