#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "qxpand/error.hpp"
#include "qxpand/text.hpp"

namespace qx {

// Extra query terms produced by an expander for a piece of text. The
// expanded query is the original tokens plus these.
using ExpandFn = std::function<std::vector<std::string>(const std::string&)>;

struct Posting {
    std::string doc;
    int tf = 0;
};

// Immutable after build; safe for concurrent scoring.
class InvertedIndex {
public:
    static InvertedIndex build(std::span<const std::pair<std::string, std::string>> docs) {
        InvertedIndex idx;
        long long total_len = 0;
        for (const auto& [id, text] : docs) {
            if (idx.doc_len_.count(id)) throw data_error("index: duplicate doc id '" + id + "'");
            auto tokens = tokenize(text);
            idx.doc_len_[id] = static_cast<int>(tokens.size());
            total_len += static_cast<long long>(tokens.size());
            std::map<std::string, int> tf;
            for (const auto& t : tokens) ++tf[t];
            for (const auto& [term, n] : tf) idx.postings_[term].push_back({id, n});
        }
        idx.n_docs_ = static_cast<long long>(docs.size());
        idx.avgdl_ = idx.n_docs_ ? static_cast<double>(total_len) / static_cast<double>(idx.n_docs_) : 0.0;
        for (auto& [term, list] : idx.postings_)
            std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
        idx.compute_tfidf_norms();
        return idx;
    }

    long long n_docs() const { return n_docs_; }
    double avgdl() const { return avgdl_; }

    bool has_doc(const std::string& id) const { return doc_len_.count(id) > 0; }

    int doc_len(const std::string& id) const {
        auto it = doc_len_.find(id);
        if (it == doc_len_.end()) throw data_error("index: unknown doc id '" + id + "'");
        return it->second;
    }

    int df(const std::string& term) const {
        auto it = postings_.find(term);
        return it == postings_.end() ? 0 : static_cast<int>(it->second.size());
    }

    int tf(const std::string& term, const std::string& doc) const {
        auto it = postings_.find(term);
        if (it == postings_.end()) return 0;
        const auto& list = it->second;
        auto pit = std::lower_bound(list.begin(), list.end(), doc,
                                    [](const Posting& p, const std::string& d) { return p.doc < d; });
        return (pit != list.end() && pit->doc == doc) ? pit->tf : 0;
    }

    const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }
    const std::map<std::string, int>& doc_lengths() const { return doc_len_; }

    // ln(N / df); 0 for df == 0 or df == N
    double idf_tfidf(const std::string& term) const {
        int d = df(term);
        if (d == 0 || n_docs_ == 0) return 0.0;
        return std::log(static_cast<double>(n_docs_) / d);
    }

    // ln(1 + (N - df + 0.5) / (df + 0.5))
    double idf_bm25(const std::string& term) const {
        int d = df(term);
        return std::log(1.0 + (static_cast<double>(n_docs_) - d + 0.5) / (d + 0.5));
    }

    // L2 norm of the doc's ltc vector, precomputed at build
    double tfidf_norm(const std::string& doc) const {
        auto it = tfidf_norm_.find(doc);
        if (it == tfidf_norm_.end()) throw data_error("index: unknown doc id '" + doc + "'");
        return it->second;
    }

    nlohmann::json to_json() const {
        nlohmann::json docs = nlohmann::json::object();
        for (const auto& [id, len] : doc_len_) docs[id] = len;
        nlohmann::json postings = nlohmann::json::object();
        for (const auto& [term, list] : postings_) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& p : list) arr.push_back({p.doc, p.tf});
            postings[term] = std::move(arr);
        }
        return nlohmann::json{{"schema_version", 1}, {"doc_len", std::move(docs)}, {"postings", std::move(postings)}};
    }

    static InvertedIndex from_json(const nlohmann::json& j) {
        if (!j.is_object() || !j.contains("doc_len") || !j.contains("postings"))
            throw data_error("index file: missing doc_len/postings");
        InvertedIndex idx;
        long long total_len = 0;
        for (const auto& [id, len] : j["doc_len"].items()) {
            idx.doc_len_[id] = len.get<int>();
            total_len += len.get<long long>();
        }
        for (const auto& [term, arr] : j["postings"].items()) {
            auto& list = idx.postings_[term];
            for (const auto& e : arr) list.push_back({e[0].get<std::string>(), e[1].get<int>()});
            std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
        }
        idx.n_docs_ = static_cast<long long>(idx.doc_len_.size());
        idx.avgdl_ = idx.n_docs_ ? static_cast<double>(total_len) / static_cast<double>(idx.n_docs_) : 0.0;
        idx.compute_tfidf_norms();
        return idx;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw io_error("cannot write index file " + path.string());
        out << to_json().dump(1) << '\n';
    }

    static InvertedIndex load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot read index file " + path.string());
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw data_error("index file: malformed JSON in " + path.string());
        return from_json(j);
    }

private:
    long long n_docs_ = 0;
    double avgdl_ = 0.0;
    std::map<std::string, std::vector<Posting>> postings_;
    std::map<std::string, int> doc_len_;
    std::map<std::string, double> tfidf_norm_;

    void compute_tfidf_norms() {
        tfidf_norm_.clear();
        for (const auto& [id, len] : doc_len_) tfidf_norm_[id] = 0.0;
        for (const auto& [term, list] : postings_) {
            const double idf = idf_tfidf(term);
            if (idf == 0.0) continue;
            for (const auto& p : list) {
                const double w = (1.0 + std::log(static_cast<double>(p.tf))) * idf;
                tfidf_norm_[p.doc] += w * w;
            }
        }
        for (auto& [id, sq] : tfidf_norm_) sq = std::sqrt(sq);
    }
};

// Okapi BM25 with Lucene-style idf. Repeated query terms count with
// multiplicity.
inline double score_bm25(std::span<const std::string> query, const std::string& doc, const InvertedIndex& idx,
                         double k1 = 1.2, double b = 0.75) {
    if (!idx.has_doc(doc)) throw data_error("score_bm25: unknown doc id '" + doc + "'");
    const double len = idx.doc_len(doc);
    double score = 0.0;
    for (const auto& term : query) {
        const int tf = idx.tf(term, doc);
        if (tf == 0) continue;
        const double sat = (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / idx.avgdl()));
        score += idx.idf_bm25(term) * sat;
    }
    return score;
}

// Cosine similarity of ltc-weighted vectors: w = (1 + ln tf) * ln(N/df),
// both sides L2-normalized. Terms with df == N (idf 0) and terms missing
// from the corpus contribute nothing.
inline double score_tfidf(std::span<const std::string> query, const std::string& doc,
                          const InvertedIndex& idx) {
    if (!idx.has_doc(doc)) throw data_error("score_tfidf: unknown doc id '" + doc + "'");
    std::map<std::string, int> qtf;
    for (const auto& t : query) ++qtf[t];
    double dot = 0.0, qnorm_sq = 0.0;
    for (const auto& [term, n] : qtf) {
        const double idf = idx.idf_tfidf(term);
        if (idf == 0.0) continue;
        const double wq = (1.0 + std::log(static_cast<double>(n))) * idf;
        qnorm_sq += wq * wq;
        const int tf = idx.tf(term, doc);
        if (tf == 0) continue;
        dot += wq * (1.0 + std::log(static_cast<double>(tf))) * idf;
    }
    const double dnorm = idx.tfidf_norm(doc);
    if (qnorm_sq == 0.0 || dnorm == 0.0) return 0.0;
    return dot / (std::sqrt(qnorm_sq) * dnorm);
}

enum class Scheme { tfidf, bm25 };

inline std::optional<Scheme> scheme_from_string(std::string_view s) {
    if (s == "tfidf") return Scheme::tfidf;
    if (s == "bm25") return Scheme::bm25;
    return std::nullopt;
}

struct RankedList {
    std::string query_id;
    std::vector<std::pair<std::string, double>> hits;  // scores non-increasing, ids unique
};

// Top-k by score descending, ties broken by ascending doc id. Only docs
// sharing at least one term with the query are candidates.
inline RankedList search(std::span<const std::string> query_tokens, const InvertedIndex& idx, Scheme scheme,
                         int k) {
    if (k < 1) throw data_error("search: k must be >= 1");
    std::set<std::string> candidates;
    for (const auto& term : query_tokens) {
        auto it = idx.postings().find(term);
        if (it == idx.postings().end()) continue;
        for (const auto& p : it->second) candidates.insert(p.doc);
    }
    RankedList out;
    for (const auto& doc : candidates) {
        const double s = scheme == Scheme::bm25 ? score_bm25(query_tokens, doc, idx)
                                                : score_tfidf(query_tokens, doc, idx);
        out.hits.emplace_back(doc, s);
    }
    std::sort(out.hits.begin(), out.hits.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(out.hits.size()) > k) out.hits.resize(k);
    return out;
}

}  // namespace qx
