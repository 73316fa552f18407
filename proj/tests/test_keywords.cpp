#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>

#include "qxpand/keywords.hpp"

using namespace qx;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> ts) {
    return std::vector<std::string>(ts.begin(), ts.end());
}

}  // namespace

TEST_CASE("pool_selection_counts counts argmax wins per position") {
    Matrix<double> ann(3, 4);
    // column argmaxes: c0 -> row2, c1 -> row0, c2 -> row0, c3 -> row1
    double vals[3][4] = {{0.1, 5.0, 2.0, -1.0}, {0.0, 1.0, 1.0, 3.0}, {9.0, -2.0, -3.0, 2.0}};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) ann.at(r, c) = vals[r][c];
    auto counts = pool_selection_counts(ann);
    CHECK(counts.pool_dim == 4);
    CHECK(counts.counts == std::vector<int>{2, 1, 1});

    // ties resolve to the earliest time step
    Matrix<double> tied(2, 2, 1.0);
    auto tc = pool_selection_counts(tied);
    CHECK(tc.counts == std::vector<int>{2, 0});
}

TEST_CASE("selection counts always sum to the pooled width") {
    // each pooled dimension selects exactly one time step
    SeededRng rng(41);
    for (int it = 0; it < 100; ++it) {
        const int T = 1 + static_cast<int>(rng.uniform_index(8));
        const int D = 1 + static_cast<int>(rng.uniform_index(12));
        auto ann = random_uniform<double>(T, D, -5, 5, rng);
        auto counts = pool_selection_counts(ann);
        int sum = 0;
        for (int c : counts.counts) {
            CHECK(c >= 0);
            sum += c;
        }
        CHECK(sum == D);
    }
}

TEST_CASE("keyword ranking merges duplicates and filters") {
    auto tokens = toks({"the", "parade", "old", "parade", "town"});
    KeywordCounts counts;
    counts.pool_dim = 10;
    counts.counts = {3, 2, 1, 4, 0};

    auto ranked = rank_keywords(tokens, counts, StopwordSet::english(), -1);
    // "the" dropped as stopword, "town" dropped with count 0,
    // "parade" merged to count 6 at position 1
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].token == "parade");
    CHECK(ranked[0].count == 6);
    CHECK(ranked[0].position == 1);
    CHECK(ranked[1].token == "old");

    auto top1 = rank_keywords(tokens, counts, StopwordSet::english(), 1);
    REQUIRE(top1.size() == 1);
    CHECK(top1[0].token == "parade");
}

TEST_CASE("ranking ties break by earlier position") {
    auto tokens = toks({"zebra", "apple", "mango"});
    KeywordCounts counts;
    counts.pool_dim = 6;
    counts.counts = {2, 2, 2};
    auto ranked = rank_keywords(tokens, counts, StopwordSet(), -1);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].token == "zebra");
    CHECK(ranked[1].token == "apple");
    CHECK(ranked[2].token == "mango");
}

TEST_CASE("extract_keywords equals an exhaustive argmax-count oracle") {
    SeededRng rng(2024);
    Vocabulary vocab = Vocabulary::build(
        {{"river", "stone", "bridge", "water", "boat", "cloud", "tree", "light"}}, 1, 100);
    for (int it = 0; it < 10; ++it) {
        auto enc = BiEncoderParams<double>::random(5, 2, 2, rng);
        auto emb = random_embeddings<double>(vocab, 5, it + 1);

        std::vector<std::string> tokens;
        const int T = 2 + static_cast<int>(rng.uniform_index(5));
        for (int i = 0; i < T; ++i) tokens.push_back(vocab.token(4 + static_cast<int>(rng.uniform_index(8))));

        auto got = extract_keywords<double>(tokens, enc, emb, vocab, StopwordSet(), -1);

        // oracle: recompute annotations, count argmaxes naively, replay the
        // merge/filter/sort chain with a std::map
        auto ids = encode_ids(tokens, vocab);
        auto full = encode<double>(ids, enc, emb);
        std::map<std::string, std::pair<int, int>> merged;  // token -> (count, first pos)
        for (std::size_t pos = 0; pos < tokens.size(); ++pos)
            if (!merged.count(tokens[pos])) merged[tokens[pos]] = {0, static_cast<int>(pos)};
        for (int d = 0; d < full.annotations.h.cols; ++d) {
            int best = 0;
            for (int t = 1; t < full.annotations.h.rows; ++t)
                if (full.annotations.h.at(t, d) > full.annotations.h.at(best, d)) best = t;
            merged[tokens[best]].first += 1;
        }
        std::vector<std::pair<std::string, std::pair<int, int>>> items(merged.begin(), merged.end());
        std::erase_if(items, [](const auto& kv) { return kv.second.first == 0; });
        std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
            if (a.second.first != b.second.first) return a.second.first > b.second.first;
            return a.second.second < b.second.second;
        });
        std::vector<std::string> expect;
        for (const auto& kv : items) expect.push_back(kv.first);

        CHECK(got == expect);
    }
}

TEST_CASE("single non-stopword token takes the whole pool") {
    SeededRng rng(3);
    auto enc = BiEncoderParams<double>::random(4, 3, 2, rng);
    Vocabulary vocab = Vocabulary::build({{"parade"}}, 1, 100);
    auto emb = random_embeddings<double>(vocab, 4, 5);
    auto ids = encode_ids(toks({"parade"}), vocab);
    auto full = encode<double>(ids, enc, emb);
    auto counts = pool_selection_counts(full.annotations.h);
    CHECK(counts.counts == std::vector<int>{2 * 3});

    auto kws = extract_keywords<double>(toks({"parade"}), enc, emb, vocab, StopwordSet::english(), -1);
    CHECK(kws == toks({"parade"}));
}

TEST_CASE("keyword extraction ignores pooled-dimension order") {
    // permuting annotation columns leaves the ranked list unchanged
    auto tokens = toks({"storm", "cloud", "rain", "wind"});
    SeededRng rng(17);
    auto ann = random_uniform<double>(4, 8, -2, 2, rng);
    auto base = rank_keywords(tokens, pool_selection_counts(ann), StopwordSet(), -1);

    Matrix<double> permuted(4, 8);
    const int perm[8] = {5, 2, 7, 0, 3, 6, 1, 4};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 8; ++c) permuted.at(r, c) = ann.at(r, perm[c]);
    auto shuffled = rank_keywords(tokens, pool_selection_counts(permuted), StopwordSet(), -1);

    REQUIRE(base.size() == shuffled.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].token == shuffled[i].token);
        CHECK(base[i].count == shuffled[i].count);
    }
}

TEST_CASE("sentence encoder checkpoints roundtrip") {
    auto vocab = Vocabulary::build({{"sun", "moon", "star"}}, 1, 100);
    auto enc = SentenceEncoder<double>::random(vocab, 4, 3, 2, 99);
    auto path = std::filesystem::temp_directory_path() / "qxpand_enc_test.ckpt";
    save_encoder(path, enc);
    auto loaded = load_encoder<double>(path);
    CHECK(loaded.vocab.tokens() == enc.vocab.tokens());
    CHECK(loaded.emb.matrix.data == enc.emb.matrix.data);
    auto tokens = toks({"sun", "star", "moon"});
    CHECK(loaded.keywords(tokens, StopwordSet::english(), -1) ==
          enc.keywords(tokens, StopwordSet::english(), -1));
    std::filesystem::remove(path);
}
