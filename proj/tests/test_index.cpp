#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "qxpand/index.hpp"
#include "qxpand/rng.hpp"

using namespace qx;
using Catch::Matchers::WithinAbs;

namespace {

using Docs = std::vector<std::pair<std::string, std::string>>;

// dense naive ltc cosine, independent of the index internals
double naive_tfidf_cosine(const std::string& query, const std::string& doc_text, const Docs& corpus) {
    const double n = static_cast<double>(corpus.size());
    std::map<std::string, int> df;
    for (const auto& [id, text] : corpus) {
        std::map<std::string, int> seen;
        for (const auto& t : tokenize(text)) seen[t] = 1;
        for (const auto& [t, one] : seen) df[t] += 1;
    }
    auto weigh = [&](const std::string& text) {
        std::map<std::string, double> w;
        std::map<std::string, int> tf;
        for (const auto& t : tokenize(text)) ++tf[t];
        for (const auto& [t, f] : tf) {
            auto it = df.find(t);
            if (it == df.end() || it->second == static_cast<int>(corpus.size())) continue;
            w[t] = (1.0 + std::log(f)) * std::log(n / it->second);
        }
        return w;
    };
    auto wq = weigh(query);
    auto wd = weigh(doc_text);
    double dot = 0.0, nq = 0.0, nd = 0.0;
    for (const auto& [t, w] : wq) nq += w * w;
    for (const auto& [t, w] : wd) nd += w * w;
    for (const auto& [t, w] : wq) {
        auto it = wd.find(t);
        if (it != wd.end()) dot += w * it->second;
    }
    if (nq == 0.0 || nd == 0.0) return 0.0;
    return dot / (std::sqrt(nq) * std::sqrt(nd));
}

}  // namespace

TEST_CASE("index build counts document frequencies and lengths") {
    Docs docs{{"d1", "a b b"}, {"d2", "a c"}};
    auto idx = InvertedIndex::build(docs);
    CHECK(idx.n_docs() == 2);
    CHECK(idx.df("a") == 2);
    CHECK(idx.df("b") == 1);
    CHECK(idx.df("zzz") == 0);
    CHECK(idx.tf("b", "d1") == 2);
    CHECK(idx.tf("b", "d2") == 0);
    CHECK_THAT(idx.avgdl(), WithinAbs(2.5, 1e-15));

    auto idx2 = InvertedIndex::build(docs);
    CHECK(idx2.to_json() == idx.to_json());

    Docs empty;
    auto e = InvertedIndex::build(empty);
    CHECK(e.n_docs() == 0);
    CHECK(search(std::vector<std::string>{"a"}, e, Scheme::bm25, 5).hits.empty());

    Docs dup{{"d1", "x"}, {"d1", "y"}};
    CHECK_THROWS_AS(InvertedIndex::build(dup), data_error);
}

TEST_CASE("bm25 matches the hand-computed case") {
    Docs docs{{"d1", "a b b"}, {"d2", "a c"}};
    auto idx = InvertedIndex::build(docs);
    // idf = ln(1 + (2-1+0.5)/(1+0.5)) = ln 2; tf part = 2*2.2/(2+1.2*(0.25+0.75*3/2.5)) = 4.4/3.38
    const double expected = std::log(2.0) * 4.4 / 3.38;
    CHECK_THAT(score_bm25(std::vector<std::string>{"b"}, "d1", idx), WithinAbs(expected, 1e-6));
    CHECK_THAT(score_bm25(std::vector<std::string>{"b"}, "d1", idx), WithinAbs(0.9023217735099880, 1e-9));

    // absent query term contributes nothing
    CHECK(score_bm25(std::vector<std::string>{"zzz"}, "d1", idx) == 0.0);
    CHECK_THAT(score_bm25(std::vector<std::string>{"b", "zzz"}, "d1", idx), WithinAbs(expected, 1e-12));

    // repeated query terms count with multiplicity
    CHECK_THAT(score_bm25(std::vector<std::string>{"b", "b"}, "d1", idx), WithinAbs(2 * expected, 1e-12));

    CHECK_THROWS_AS(score_bm25(std::vector<std::string>{"b"}, "nope", idx), data_error);
}

TEST_CASE("bm25 with b=0 ignores document length") {
    Docs docs{{"short", "cat"}, {"long", "cat dog bird fish mouse horse cow hen"}};
    auto idx = InvertedIndex::build(docs);
    std::vector<std::string> q{"cat"};
    CHECK_THAT(score_bm25(q, "short", idx, 1.2, 0.0), WithinAbs(score_bm25(q, "long", idx, 1.2, 0.0), 1e-15));
    // with default b the shorter document wins
    CHECK(score_bm25(q, "short", idx) > score_bm25(q, "long", idx));
}

TEST_CASE("tfidf cosine hits the analytic corner cases") {
    Docs docs{{"d1", "unicorn"}, {"d2", "unicorn"}, {"d3", "dragon wyvern"}};
    auto idx = InvertedIndex::build(docs);
    // identical single-term texts with a term unique to them... df=2 here, so
    // build a fresh corpus where the term is unique to one doc
    Docs docs2{{"d1", "unicorn"}, {"d2", "dragon"}, {"d3", "gryphon"}};
    auto idx2 = InvertedIndex::build(docs2);
    CHECK_THAT(score_tfidf(std::vector<std::string>{"unicorn"}, "d1", idx2), WithinAbs(1.0, 1e-12));
    // disjoint vocabularies score zero
    CHECK(score_tfidf(std::vector<std::string>{"dragon"}, "d1", idx2) == 0.0);
    // df == N terms contribute nothing: zero-norm query -> 0
    Docs docs3{{"d1", "common x"}, {"d2", "common y"}};
    auto idx3 = InvertedIndex::build(docs3);
    CHECK(score_tfidf(std::vector<std::string>{"common"}, "d1", idx3) == 0.0);
}

TEST_CASE("tfidf matches a naive dense cosine oracle") {
    Docs docs{{"d1", "red apple red fruit"}, {"d2", "green apple tree"}, {"d3", "red tree bark fruit"}};
    auto idx = InvertedIndex::build(docs);
    std::vector<std::string> queries{"red apple", "fruit tree bark", "green green apple", "missing"};
    for (const auto& q : queries)
        for (const auto& [id, text] : docs)
            CHECK_THAT(score_tfidf(tokenize(q), id, idx), WithinAbs(naive_tfidf_cosine(q, text, docs), 1e-12));
}

TEST_CASE("search returns top-k with doc-id ties") {
    Docs docs{{"d2", "tie word"}, {"d1", "tie word"}, {"d3", "other thing"}};
    auto idx = InvertedIndex::build(docs);
    auto r = search(std::vector<std::string>{"tie"}, idx, Scheme::bm25, 10);
    REQUIRE(r.hits.size() == 2);  // d3 shares no term
    CHECK(r.hits[0].first == "d1");
    CHECK(r.hits[1].first == "d2");
    CHECK(r.hits[0].second == r.hits[1].second);

    auto r1 = search(std::vector<std::string>{"tie"}, idx, Scheme::bm25, 1);
    REQUIRE(r1.hits.size() == 1);  // k smaller than matches
    CHECK(r1.hits[0].first == "d1");

    CHECK_THROWS_AS(search(std::vector<std::string>{"tie"}, idx, Scheme::bm25, 0), data_error);
}

TEST_CASE("search equals exhaustive score-and-sort on random corpora") {
    SeededRng rng(808);
    std::vector<std::string> pool{"ant", "bat", "cow", "dog", "eel", "fox", "gnu", "hog", "imp", "jak",
                                  "kit", "lar", "mew", "nit", "owl", "pug", "quy", "ram", "sow", "tui"};
    for (int corpus_i = 0; corpus_i < 50; ++corpus_i) {
        const int n_docs = 1 + static_cast<int>(rng.uniform_index(100));
        Docs docs;
        for (int d = 0; d < n_docs; ++d) {
            std::string text;
            const int len = static_cast<int>(rng.uniform_index(12));
            for (int w = 0; w < len; ++w) {
                if (w) text += ' ';
                text += pool[rng.uniform_index(pool.size())];
            }
            char id[16];
            std::snprintf(id, sizeof id, "doc%03d", d);
            docs.emplace_back(id, text);
        }
        auto idx = InvertedIndex::build(docs);

        std::vector<std::string> query;
        const int qlen = 1 + static_cast<int>(rng.uniform_index(4));
        for (int w = 0; w < qlen; ++w) query.push_back(pool[rng.uniform_index(pool.size())]);
        const int k = 1 + static_cast<int>(rng.uniform_index(10));
        const Scheme scheme = corpus_i % 2 ? Scheme::bm25 : Scheme::tfidf;

        auto got = search(query, idx, scheme, k);

        // oracle: score every candidate, sort, truncate
        std::vector<std::pair<std::string, double>> all;
        for (const auto& [id, text] : docs) {
            bool shares = false;
            auto toks = tokenize(text);
            for (const auto& qt : query)
                if (std::find(toks.begin(), toks.end(), qt) != toks.end()) shares = true;
            if (!shares) continue;
            const double s =
                scheme == Scheme::bm25 ? score_bm25(query, id, idx) : score_tfidf(query, id, idx);
            all.emplace_back(id, s);
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (static_cast<int>(all.size()) > k) all.resize(k);

        REQUIRE(got.hits.size() == all.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            CHECK(got.hits[i].first == all[i].first);
            CHECK(got.hits[i].second == all[i].second);
        }
    }
}

TEST_CASE("index files roundtrip") {
    Docs docs{{"d1", "alpha beta beta"}, {"d2", "alpha gamma"}, {"d3", ""}};
    auto idx = InvertedIndex::build(docs);
    auto path = std::filesystem::temp_directory_path() / "qxpand_index_test.json";
    idx.save(path);
    auto loaded = InvertedIndex::load(path);
    CHECK(loaded.to_json() == idx.to_json());
    CHECK(loaded.n_docs() == 3);
    CHECK(loaded.doc_len("d3") == 0);
    CHECK_THAT(score_bm25(std::vector<std::string>{"beta"}, "d1", loaded),
               WithinAbs(score_bm25(std::vector<std::string>{"beta"}, "d1", idx), 1e-15));
    std::filesystem::remove(path);
}
