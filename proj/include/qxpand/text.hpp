#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "qxpand/error.hpp"

namespace qx {

// Lowercase + split on every non-alphanumeric byte, empty fragments
// dropped. Deterministic and locale-independent (ASCII classification
// only, so every non-ASCII byte acts as a separator).
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char ch : text) {
        const bool alnum = (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z');
        if (alnum) {
            cur.push_back(static_cast<char>(ch >= 'A' && ch <= 'Z' ? ch - 'A' + 'a' : ch));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string join_tokens(std::span<const std::string> tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) s.push_back(' ');
        s += tokens[i];
    }
    return s;
}

// Dense 0..V-1 token ids; specials occupy ids 0-3.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kNumSpecials = 4;

    Vocabulary() {
        for (const char* s : specials()) add_token(s);
    }

    static const std::array<const char*, 4>& specials() {
        static const std::array<const char*, 4> s{"<pad>", "<unk>", "<bos>", "<eos>"};
        return s;
    }

    // Specials first, then tokens with frequency >= min_freq in descending
    // frequency, ties broken lexicographically, truncated to max_size.
    static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, int min_freq, int max_size) {
        if (min_freq < 1) throw data_error("build_vocab: min_freq must be >= 1");
        if (max_size < kNumSpecials) throw data_error("build_vocab: max_size must be >= 4");
        std::map<std::string, long long> freq;
        for (const auto& seq : corpus)
            for (const auto& t : seq) ++freq[t];
        std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
        std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        Vocabulary v;
        for (const auto& [tok, n] : items) {
            if (n < min_freq) continue;
            if (v.size() >= max_size) break;
            if (!v.find(tok)) v.add_token(tok);
        }
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    std::optional<int> find(std::string_view token) const {
        auto it = id_of_.find(std::string(token));
        if (it == id_of_.end()) return std::nullopt;
        return it->second;
    }

    int id_or_unk(std::string_view token) const {
        auto id = find(token);
        return id ? *id : kUnk;
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= size())
            throw data_error("vocabulary: id " + std::to_string(id) + " out of range 0.." +
                             std::to_string(size() - 1));
        return tokens_[id];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    // One token per line, line order = id order after the implicit specials.
    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw io_error("cannot write vocabulary file " + path.string());
        for (int i = kNumSpecials; i < size(); ++i) out << tokens_[i] << '\n';
    }

    static Vocabulary load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot read vocabulary file " + path.string());
        Vocabulary v;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (v.find(line)) throw parse_error("duplicate vocabulary token '" + line + "'", line_no);
            v.add_token(line);
        }
        return v;
    }

    // Restores a vocabulary from an explicit non-special token list
    // (checkpoint manifests store this).
    static Vocabulary from_tokens(std::span<const std::string> non_special) {
        Vocabulary v;
        for (const auto& t : non_special) {
            if (v.find(t)) throw data_error("vocabulary: duplicate token '" + t + "'");
            v.add_token(t);
        }
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> id_of_;

    void add_token(const std::string& t) {
        id_of_.emplace(t, static_cast<int>(tokens_.size()));
        tokens_.push_back(t);
    }
};

inline std::vector<int> encode_ids(std::span<const std::string> tokens, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id_or_unk(t));
    return ids;
}

inline std::vector<std::string> decode_ids(std::span<const int> ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.token(id));
    return out;
}

// Fixed set of lowercase tokens; membership never changes after build.
class StopwordSet {
public:
    StopwordSet() = default;
    explicit StopwordSet(std::vector<std::string> words) : members_(words.begin(), words.end()) {}

    bool contains(std::string_view token) const { return members_.count(std::string(token)) > 0; }
    std::size_t size() const { return members_.size(); }

    // Bundled list of common English function words.
    static const StopwordSet& english() {
        static const StopwordSet set{std::vector<std::string>{
            "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
            "aren", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
            "but", "by", "can", "cannot", "could", "couldn", "did", "didn", "do", "does", "doesn",
            "doing", "don", "down", "during", "each", "few", "for", "from", "further", "had", "hadn",
            "has", "hasn", "have", "haven", "having", "he", "her", "here", "hers", "herself", "him",
            "himself", "his", "how", "i", "if", "in", "into", "is", "isn", "it", "its", "itself",
            "just", "ll", "me", "more", "most", "mustn", "my", "myself", "no", "nor", "not", "now",
            "of", "off", "on", "once", "only", "or", "other", "ought", "our", "ours", "ourselves",
            "out", "over", "own", "re", "s", "same", "shan", "she", "should", "shouldn", "so", "some",
            "such", "t", "than", "that", "the", "their", "theirs", "them", "themselves", "then",
            "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
            "ve", "very", "was", "wasn", "we", "were", "weren", "what", "when", "where", "which",
            "while", "who", "whom", "why", "will", "with", "won", "would", "wouldn", "you", "your",
            "yours", "yourself", "yourselves"}};
        return set;
    }

private:
    std::unordered_set<std::string> members_;
};

}  // namespace qx
