#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qxpand/error.hpp"
#include "qxpand/index.hpp"
#include "qxpand/rng.hpp"

namespace qx {

// One-vs-rest linear model over ltc TF-IDF features of the training
// corpus. Feature space and idf statistics are frozen at training time.
class LinearClassifier {
public:
    const std::vector<std::string>& classes() const { return classes_; }

    std::string classify(const std::string& text) const {
        const auto x = features(text);
        int best = 0;
        double best_score = score(0, x);
        for (int c = 1; c < static_cast<int>(classes_.size()); ++c) {
            const double s = score(c, x);
            if (s > best_score) {  // ties keep the earlier class
                best_score = s;
                best = c;
            }
        }
        return classes_[best];
    }

    // L2-normalized sparse ltc vector in the training feature space.
    std::vector<std::pair<int, double>> features(const std::string& text) const {
        std::map<std::string, int> tf;
        for (const auto& t : tokenize(text)) ++tf[t];
        std::vector<std::pair<int, double>> x;
        double norm_sq = 0.0;
        for (const auto& [term, n] : tf) {
            auto it = term_id_.find(term);
            if (it == term_id_.end()) continue;
            const double idf = index_.idf_tfidf(term);
            if (idf == 0.0) continue;
            const double w = (1.0 + std::log(static_cast<double>(n))) * idf;
            x.emplace_back(it->second, w);
            norm_sq += w * w;
        }
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (auto& [id, w] : x) w *= inv;
        }
        return x;
    }

    friend LinearClassifier train_classifier(std::span<const std::string> texts,
                                             std::span<const std::string> labels, int epochs, double lr,
                                             std::uint64_t seed);

private:
    std::vector<std::string> classes_;  // sorted; tie order
    InvertedIndex index_;
    std::unordered_map<std::string, int> term_id_;
    std::vector<std::vector<double>> weights_;  // per class, dense over features
    std::vector<double> bias_;

    double score(int c, const std::vector<std::pair<int, double>>& x) const {
        double s = bias_[c];
        for (const auto& [id, w] : x) s += weights_[c][id] * w;
        return s;
    }
};

// Hinge-loss subgradient descent, one-vs-rest, L2 penalty 1e-4. Per
// sample and class: w <- (1 - lr*lambda) w, plus lr*y*x when the margin
// y(w.x + b) is below 1.
inline LinearClassifier train_classifier(std::span<const std::string> texts,
                                         std::span<const std::string> labels, int epochs, double lr,
                                         std::uint64_t seed) {
    if (texts.size() != labels.size()) throw data_error("train_classifier: texts/labels length mismatch");
    if (texts.empty()) throw data_error("train_classifier: empty training set");

    LinearClassifier cls;
    {
        std::map<std::string, int> seen;
        for (const auto& l : labels) seen[l] = 1;
        for (const auto& [l, n] : seen) cls.classes_.push_back(l);
    }
    if (cls.classes_.size() < 2) throw data_error("train_classifier: need at least 2 classes");

    std::vector<std::pair<std::string, std::string>> docs;
    for (std::size_t i = 0; i < texts.size(); ++i) docs.emplace_back("d" + std::to_string(i), texts[i]);
    cls.index_ = InvertedIndex::build(docs);
    int next_id = 0;
    for (const auto& [term, list] : cls.index_.postings()) cls.term_id_[term] = next_id++;

    const int n_classes = static_cast<int>(cls.classes_.size());
    const int n_features = next_id;
    cls.weights_.assign(n_classes, std::vector<double>(n_features, 0.0));
    cls.bias_.assign(n_classes, 0.0);
    std::unordered_map<std::string, int> class_id;
    for (int c = 0; c < n_classes; ++c) class_id[cls.classes_[c]] = c;

    std::vector<std::vector<std::pair<int, double>>> feats;
    feats.reserve(texts.size());
    for (const auto& t : texts) feats.push_back(cls.features(t));

    constexpr double lambda = 1e-4;
    SeededRng rng(seed);
    std::vector<std::size_t> order(texts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            const auto& x = feats[i];
            const int gold = class_id[std::string(labels[i])];
            for (int c = 0; c < n_classes; ++c) {
                const double y = c == gold ? 1.0 : -1.0;
                double s = cls.bias_[c];
                for (const auto& [id, w] : x) s += cls.weights_[c][id] * w;
                const double shrink = 1.0 - lr * lambda;
                for (double& w : cls.weights_[c]) w *= shrink;
                if (y * s < 1.0) {
                    for (const auto& [id, w] : x) cls.weights_[c][id] += lr * y * w;
                    cls.bias_[c] += lr * y;
                }
            }
        }
    }
    return cls;
}

// Accuracy over a test set; texts optionally pass through the expander
// first (expansion terms appended to the text).
inline double class_accuracy(const LinearClassifier& cls, std::span<const std::string> texts,
                             std::span<const std::string> labels, const ExpandFn* expander = nullptr,
                             std::vector<double>* per_item = nullptr) {
    if (texts.size() != labels.size()) throw data_error("class_accuracy: texts/labels length mismatch");
    if (texts.empty()) throw data_error("class_accuracy: empty test set");
    long long hits = 0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        std::string text = texts[i];
        if (expander && *expander)
            for (const auto& term : (*expander)(texts[i])) text += " " + term;
        const bool ok = cls.classify(text) == labels[i];
        hits += ok;
        if (per_item) per_item->push_back(ok ? 1.0 : 0.0);
    }
    return static_cast<double>(hits) / static_cast<double>(texts.size());
}

// TSV: label TAB text
inline std::pair<std::vector<std::string>, std::vector<std::string>> load_labeled_tsv(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read labeled tsv " + path.string());
    std::vector<std::string> labels, texts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw parse_error("labeled tsv: expected 'label<TAB>text'", line_no);
        labels.push_back(line.substr(0, tab));
        texts.push_back(line.substr(tab + 1));
    }
    return {std::move(labels), std::move(texts)};
}

}  // namespace qx
