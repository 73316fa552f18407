#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qxpand/checkpoint.hpp"
#include "qxpand/lstm.hpp"
#include "qxpand/text.hpp"

namespace qx {

// Per-token-position selection counts: counts[t] is the number of pooled
// dimensions whose max over time lands at position t. Sum of counts is
// always the pooled width.
struct KeywordCounts {
    std::vector<int> counts;
    int pool_dim = 0;
};

// Argmax ties resolve to the earliest time step.
template <typename S>
KeywordCounts pool_selection_counts(const Matrix<S>& annotations) {
    KeywordCounts out;
    out.pool_dim = annotations.cols;
    out.counts.assign(annotations.rows, 0);
    for (int d = 0; d < annotations.cols; ++d) {
        int best = 0;
        for (int t = 1; t < annotations.rows; ++t)
            if (annotations.at(t, d) > annotations.at(best, d)) best = t;
        ++out.counts[best];
    }
    return out;
}

struct RankedKeyword {
    std::string token;
    int count = 0;
    int position = 0;  // earliest occurrence
};

// Turns per-position counts into a ranked keyword list:
// duplicate surface tokens merged (counts summed, earliest position kept),
// stopwords and zero-count tokens dropped, ranked by count descending with
// ties to the earlier position, truncated to max_k.
inline std::vector<RankedKeyword> rank_keywords(std::span<const std::string> tokens,
                                                const KeywordCounts& counts, const StopwordSet& stopwords,
                                                int max_k) {
    std::vector<RankedKeyword> merged;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        auto it = std::find_if(merged.begin(), merged.end(),
                               [&](const RankedKeyword& k) { return k.token == tokens[t]; });
        if (it == merged.end())
            merged.push_back({tokens[t], counts.counts[t], static_cast<int>(t)});
        else
            it->count += counts.counts[t];
    }
    std::erase_if(merged, [&](const RankedKeyword& k) { return k.count == 0 || stopwords.contains(k.token); });
    std::stable_sort(merged.begin(), merged.end(), [](const RankedKeyword& a, const RankedKeyword& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.position < b.position;
    });
    if (max_k >= 0 && static_cast<int>(merged.size()) > max_k) merged.resize(max_k);
    return merged;
}

// Keyword extraction: encode, count max-pool selections per position,
// rank. max_k < 0 means unlimited.
template <typename S>
std::vector<std::string> extract_keywords(std::span<const std::string> tokens, BiEncoderParams<S>& params,
                                          const EmbeddingTable<S>& emb, const Vocabulary& vocab,
                                          const StopwordSet& stopwords, int max_k) {
    if (tokens.empty()) return {};
    auto ids = encode_ids(tokens, vocab);
    auto enc = encode<S>(ids, params, emb);
    auto counts = pool_selection_counts(enc.annotations.h);
    auto ranked = rank_keywords(tokens, counts, stopwords, max_k);
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& k : ranked) out.push_back(k.token);
    return out;
}

// Everything needed to extract keywords from raw text: vocabulary, fixed
// embedding table and the BiLSTM weights.
template <typename S>
struct SentenceEncoder {
    Vocabulary vocab;
    EmbeddingTable<S> emb;
    BiEncoderParams<S> params;

    // Random weights (uniform +-1/sqrt(H)); the selection-count mechanism
    // itself is weight-agnostic.
    static SentenceEncoder random(Vocabulary vocab, int emb_dim, int hidden, int num_layers,
                                  std::uint64_t seed) {
        SentenceEncoder enc;
        enc.vocab = std::move(vocab);
        enc.emb = random_embeddings<S>(enc.vocab, emb_dim, seed ^ 0xA3C59AC1B0F8D21DULL);
        SeededRng rng(seed);
        enc.params = BiEncoderParams<S>::random(emb_dim, hidden, num_layers, rng);
        return enc;
    }

    std::vector<std::string> keywords(std::span<const std::string> tokens, const StopwordSet& stopwords,
                                      int max_k) {
        return extract_keywords<S>(tokens, params, emb, vocab, stopwords, max_k);
    }
};

// Encoder checkpoints share the seq2seq container format.
template <typename S>
void save_encoder(const std::filesystem::path& path, SentenceEncoder<S>& enc) {
    nlohmann::json meta{{"kind", "encoder"},
                        {"emb_dim", enc.emb.dim},
                        {"hidden", enc.params.hidden},
                        {"layers", enc.params.num_layers()},
                        {"vocab", std::vector<std::string>(enc.vocab.tokens().begin() + Vocabulary::kNumSpecials,
                                                           enc.vocab.tokens().end())}};
    std::vector<NamedTensor<S>> tensors{{"embedding", &enc.emb.matrix}};
    for (auto* p : enc.params.parameters()) tensors.push_back({p->name, &p->value});
    save_checkpoint<S>(path, meta, tensors);
}

template <typename S>
SentenceEncoder<S> load_encoder(const std::filesystem::path& path) {
    auto ck = load_checkpoint<S>(path);
    if (ck.meta.value("kind", "") != "encoder")
        throw checkpoint_manifest_error("checkpoint: expected kind 'encoder' in " + path.string());
    SentenceEncoder<S> enc;
    enc.vocab = Vocabulary::from_tokens(ck.meta["vocab"].template get<std::vector<std::string>>());
    enc.emb.dim = ck.meta["emb_dim"];
    enc.emb.matrix = ck.require("embedding");
    if (enc.emb.matrix.rows != enc.vocab.size() || enc.emb.matrix.cols != enc.emb.dim)
        throw checkpoint_manifest_error("checkpoint: embedding shape disagrees with vocabulary/emb_dim");
    SeededRng rng(0);
    enc.params = BiEncoderParams<S>::random(enc.emb.dim, ck.meta["hidden"], ck.meta["layers"], rng);
    for (auto* p : enc.params.parameters()) {
        const Matrix<S>& stored = ck.require(p->name);
        if (!stored.same_shape(p->value))
            throw checkpoint_manifest_error("checkpoint: tensor '" + p->name + "' has shape " + stored.shape_str() +
                                            ", encoder expects " + p->value.shape_str());
        p->value = stored;
    }
    return enc;
}

}  // namespace qx
