#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "qxpand/error.hpp"
#include "qxpand/text.hpp"

namespace qx {

enum class Relation { entailment, neutral, contradiction, duplicate, caption };

inline std::optional<Relation> relation_from_string(std::string_view s) {
    if (s == "entailment") return Relation::entailment;
    if (s == "neutral") return Relation::neutral;
    if (s == "contradiction") return Relation::contradiction;
    if (s == "duplicate") return Relation::duplicate;
    if (s == "caption") return Relation::caption;
    return std::nullopt;
}

inline const char* relation_to_string(Relation r) {
    switch (r) {
        case Relation::entailment: return "entailment";
        case Relation::neutral: return "neutral";
        case Relation::contradiction: return "contradiction";
        case Relation::duplicate: return "duplicate";
        case Relation::caption: return "caption";
    }
    return "?";
}

struct RawPair {
    std::string text_a;
    std::string text_b;
    Relation relation;
};

struct IngestResult {
    std::vector<RawPair> pairs;
    std::size_t rejected = 0;  // malformed records or unknown relation labels
};

enum class PairFormat { jsonl, tsv };

inline std::optional<PairFormat> pair_format_from_string(std::string_view s) {
    if (s == "jsonl") return PairFormat::jsonl;
    if (s == "tsv") return PairFormat::tsv;
    return std::nullopt;
}

// jsonl records carry fields text_a, text_b, relation; tsv columns are in
// that order. Malformed records and unknown relation labels are rejected
// and counted, never fatal.
inline IngestResult ingest(const std::filesystem::path& path, PairFormat format) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read pair file " + path.string());
    IngestResult out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::string a, b, rel;
        if (format == PairFormat::jsonl) {
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("text_a") || !j.contains("text_b") ||
                !j.contains("relation") || !j["text_a"].is_string() || !j["text_b"].is_string() ||
                !j["relation"].is_string()) {
                ++out.rejected;
                continue;
            }
            a = j["text_a"].get<std::string>();
            b = j["text_b"].get<std::string>();
            rel = j["relation"].get<std::string>();
        } else {
            auto t1 = line.find('\t');
            auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
            if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
                ++out.rejected;
                continue;
            }
            a = line.substr(0, t1);
            b = line.substr(t1 + 1, t2 - t1 - 1);
            rel = line.substr(t2 + 1);
        }
        auto relation = relation_from_string(rel);
        if (!relation) {
            ++out.rejected;
            continue;
        }
        out.pairs.push_back({std::move(a), std::move(b), *relation});
    }
    return out;
}

// source sentence -> ranked expansion keywords
struct ExpansionExample {
    std::vector<std::string> source;
    std::vector<std::string> expansion;
};

inline constexpr int kMinExpansionLen = 3;
inline constexpr int kMaxExpansionLen = 6;

// Checks the hard type invariants: expansion length in [3, 6], no token of
// the expansion appears in the source, no duplicate expansion tokens.
inline void validate_example(const ExpansionExample& ex) {
    const int n = static_cast<int>(ex.expansion.size());
    if (n < kMinExpansionLen || n > kMaxExpansionLen)
        throw data_error("expansion example: expansion length " + std::to_string(n) + " outside [" +
                         std::to_string(kMinExpansionLen) + "," + std::to_string(kMaxExpansionLen) + "]");
    std::unordered_set<std::string> src(ex.source.begin(), ex.source.end());
    std::unordered_set<std::string> seen;
    for (const auto& t : ex.expansion) {
        if (src.count(t)) throw data_error("expansion example: token '" + t + "' appears in the source");
        if (!seen.insert(t).second) throw data_error("expansion example: duplicate token '" + t + "'");
    }
}

struct BuildStats {
    long long pairs_in = 0;
    long long dropped_contradiction = 0;  // directions, i.e. 2 per pair
    long long dropped_short = 0;
    long long dropped_empty = 0;
    long long examples_out = 0;
};

struct BuildResult {
    std::vector<ExpansionExample> examples;
    BuildStats stats;
};

// Ranked keywords for a tokenized sentence, most significant first.
using KeywordFn = std::function<std::vector<std::string>(const std::vector<std::string>&)>;

// Contradiction pairs are dropped. Every surviving pair yields the A->B
// and B->A directions, in that order. Per direction: extract keywords from
// the target, remove the ones whose case-folded form appears among the
// source tokens, truncate to the max_len top-ranked, drop the direction
// when fewer than min_len remain. Directions whose source tokenizes to
// nothing or whose keyword list empties out count as dropped_empty.
inline BuildResult build_examples(std::span<const RawPair> pairs, const KeywordFn& keywords,
                                  int min_len = kMinExpansionLen, int max_len = kMaxExpansionLen) {
    if (min_len < 1 || max_len < min_len) throw data_error("build: invalid expansion length bounds");
    BuildResult out;
    out.stats.pairs_in = static_cast<long long>(pairs.size());
    for (const RawPair& pair : pairs) {
        if (pair.relation == Relation::contradiction) {
            out.stats.dropped_contradiction += 2;
            continue;
        }
        const auto tokens_a = tokenize(pair.text_a);
        const auto tokens_b = tokenize(pair.text_b);
        for (int dir = 0; dir < 2; ++dir) {
            const auto& source = dir == 0 ? tokens_a : tokens_b;
            const auto& target = dir == 0 ? tokens_b : tokens_a;
            if (source.empty() || target.empty()) {
                ++out.stats.dropped_empty;
                continue;
            }
            std::unordered_set<std::string> source_set(source.begin(), source.end());
            std::vector<std::string> expansion;
            for (const auto& k : keywords(target)) {
                if (source_set.count(k)) continue;
                expansion.push_back(k);
                if (static_cast<int>(expansion.size()) == max_len) break;
            }
            if (expansion.empty()) {
                ++out.stats.dropped_empty;
            } else if (static_cast<int>(expansion.size()) < min_len) {
                ++out.stats.dropped_short;
            } else {
                out.examples.push_back({source, std::move(expansion)});
                ++out.stats.examples_out;
            }
        }
    }
    return out;
}

// Two-column TSV: space-joined source tokens TAB space-joined expansion.
inline void write_examples(std::span<const ExpansionExample> examples, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write examples file " + path.string());
    for (const auto& ex : examples) out << join_tokens(ex.source) << '\t' << join_tokens(ex.expansion) << '\n';
}

inline std::vector<ExpansionExample> read_examples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read examples file " + path.string());
    std::vector<ExpansionExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw parse_error("examples file: expected exactly two TAB-separated columns", line_no);
        ExpansionExample ex;
        ex.source = tokenize(line.substr(0, tab));
        ex.expansion = tokenize(line.substr(tab + 1));
        try {
            validate_example(ex);
        } catch (const data_error& e) {
            throw parse_error(std::string("examples file: ") + e.what(), line_no);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

inline nlohmann::json stats_to_json(const BuildStats& s) {
    return nlohmann::json{{"schema_version", 1},
                          {"pairs_in", s.pairs_in},
                          {"dropped_contradiction", s.dropped_contradiction},
                          {"dropped_short", s.dropped_short},
                          {"dropped_empty", s.dropped_empty},
                          {"examples_out", s.examples_out}};
}

}  // namespace qx
