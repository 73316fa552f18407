#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_set>

#include "qxpand/dataset.hpp"

using namespace qx;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("qxpand_ds_" + name);
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

// stub keyword function: ranked = tokens in reverse order, deduplicated
std::vector<std::string> reverse_keywords(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto it = tokens.rbegin(); it != tokens.rend(); ++it)
        if (seen.insert(*it).second) out.push_back(*it);
    return out;
}

}  // namespace

TEST_CASE("ingest jsonl accepts records and counts rejects") {
    auto path = temp_file("pairs.jsonl");
    write_file(path,
               R"({"text_a":"x","text_b":"y","relation":"neutral"})"
               "\n"
               R"({"text_a":"p","text_b":"q","relation":"contradiction"})"
               "\n"
               R"({"text_a":"p","text_b":"q","relation":"banana"})"
               "\n"
               "this is not json\n"
               R"({"text_a":"only a"})"
               "\n");
    auto res = ingest(path, PairFormat::jsonl);
    REQUIRE(res.pairs.size() == 2);
    CHECK(res.pairs[0].text_a == "x");
    CHECK(res.pairs[0].relation == Relation::neutral);
    CHECK(res.pairs[1].relation == Relation::contradiction);  // filtered later, not here
    CHECK(res.rejected == 3);
    std::filesystem::remove(path);
}

TEST_CASE("ingest tsv uses text_a TAB text_b TAB relation") {
    auto path = temp_file("pairs.tsv");
    write_file(path, "x\ty\tduplicate\nbroken line without tabs\na\tb\tcaption\n");
    auto res = ingest(path, PairFormat::tsv);
    REQUIRE(res.pairs.size() == 2);
    CHECK(res.pairs[0].relation == Relation::duplicate);
    CHECK(res.pairs[1].relation == Relation::caption);
    CHECK(res.rejected == 1);
    CHECK_THROWS_AS(ingest(temp_file("no_such.tsv"), PairFormat::tsv), io_error);
    std::filesystem::remove(path);
}

TEST_CASE("build drops contradictions and produces both directions") {
    std::vector<RawPair> pairs{
        {"red apple tree", "green pear orchard fruit", Relation::neutral},
        {"sun", "moon light dark", Relation::contradiction},
    };
    auto res = build_examples(pairs, reverse_keywords, 3, 6);
    CHECK(res.stats.pairs_in == 2);
    CHECK(res.stats.dropped_contradiction == 2);
    REQUIRE(res.examples.size() == 2);
    // A->B first: keywords of B reversed = fruit orchard pear green
    CHECK(res.examples[0].source == std::vector<std::string>{"red", "apple", "tree"});
    CHECK(res.examples[0].expansion == std::vector<std::string>{"fruit", "orchard", "pear", "green"});
    // then B->A
    CHECK(res.examples[1].source == std::vector<std::string>{"green", "pear", "orchard", "fruit"});
    CHECK(res.examples[1].expansion == std::vector<std::string>{"tree", "apple", "red"});
}

TEST_CASE("identical texts lose every keyword to the overlap filter") {
    std::vector<RawPair> pairs{{"same words here again", "same words here again", Relation::duplicate}};
    auto res = build_examples(pairs, reverse_keywords);
    CHECK(res.examples.empty());
    CHECK(res.stats.dropped_empty == 2);
}

TEST_CASE("build truncates to max_len and drops short directions") {
    // B has 8 fresh tokens: truncated to 6 for A->B
    std::vector<RawPair> pairs{
        {"alpha", "tok1 tok2 tok3 tok4 tok5 tok6 tok7 tok8", Relation::entailment},
    };
    auto res = build_examples(pairs, reverse_keywords, 3, 6);
    REQUIRE_FALSE(res.examples.empty());
    CHECK(res.examples[0].expansion.size() == 6);
    // B->A direction has a single keyword "alpha": dropped as short
    CHECK(res.stats.dropped_short == 1);
    CHECK(res.stats.examples_out == 1);
}

TEST_CASE("build stats account for every direction") {
    SeededRng rng(55);
    std::vector<std::string> pool{"ant", "bee", "cat", "dog", "elk", "fox", "gnu", "hen", "ibex", "jay"};
    std::vector<RawPair> pairs;
    for (int i = 0; i < 60; ++i) {
        auto sent = [&](int n) {
            std::string s;
            for (int j = 0; j < n; ++j) {
                if (j) s += ' ';
                s += pool[rng.uniform_index(pool.size())];
            }
            return s;
        };
        Relation rel = static_cast<Relation>(rng.uniform_index(5));
        pairs.push_back({sent(1 + static_cast<int>(rng.uniform_index(6))),
                         sent(1 + static_cast<int>(rng.uniform_index(6))), rel});
    }
    auto res = build_examples(pairs, reverse_keywords);
    CHECK(res.stats.pairs_in == 60);
    CHECK(res.stats.pairs_in * 2 == res.stats.examples_out + res.stats.dropped_contradiction +
                                        res.stats.dropped_short + res.stats.dropped_empty);
    for (const auto& ex : res.examples) CHECK_NOTHROW(validate_example(ex));
}

TEST_CASE("removing contradiction pairs never changes the surviving examples") {
    std::vector<RawPair> with{
        {"red apple", "ripe fruit basket", Relation::neutral},
        {"day night", "bright dark sky", Relation::contradiction},
        {"blue boat", "calm river water crossing", Relation::caption},
    };
    std::vector<RawPair> without{with[0], with[2]};
    auto a = build_examples(with, reverse_keywords);
    auto b = build_examples(without, reverse_keywords);
    REQUIRE(a.examples.size() == b.examples.size());
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
        CHECK(a.examples[i].source == b.examples[i].source);
        CHECK(a.examples[i].expansion == b.examples[i].expansion);
    }
}

TEST_CASE("build is deterministic") {
    std::vector<RawPair> pairs{
        {"alpha beta gamma", "delta epsilon zeta eta", Relation::neutral},
        {"one two", "three four five six", Relation::duplicate},
    };
    auto a = build_examples(pairs, reverse_keywords);
    auto b = build_examples(pairs, reverse_keywords);
    REQUIRE(a.examples.size() == b.examples.size());
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
        CHECK(a.examples[i].source == b.examples[i].source);
        CHECK(a.examples[i].expansion == b.examples[i].expansion);
    }
}

TEST_CASE("examples roundtrip through the two-column TSV") {
    SeededRng rng(7);
    std::vector<std::string> pool{"ash", "birch", "cedar", "elm", "fir", "hazel", "larch", "maple",
                                  "oak", "pine", "rowan", "spruce", "willow", "yew"};
    std::vector<ExpansionExample> examples;
    for (int i = 0; i < 100; ++i) {
        ExpansionExample ex;
        const int slen = 1 + static_cast<int>(rng.uniform_index(6));
        for (int j = 0; j < slen; ++j) ex.source.push_back(pool[rng.uniform_index(7)]);
        // expansion drawn from the disjoint second half of the pool
        std::vector<std::string> tail(pool.begin() + 7, pool.end());
        SeededRng shuffler(i);
        shuffler.shuffle(tail);
        const int elen = 3 + static_cast<int>(rng.uniform_index(4));
        ex.expansion.assign(tail.begin(), tail.begin() + elen);
        examples.push_back(std::move(ex));
    }
    auto path = temp_file("examples.tsv");
    write_examples(examples, path);
    auto back = read_examples(path);
    REQUIRE(back.size() == examples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].source == examples[i].source);
        CHECK(back[i].expansion == examples[i].expansion);
    }
    std::filesystem::remove(path);
}

TEST_CASE("read_examples rejects invariant violations with line numbers") {
    auto path = temp_file("bad.tsv");
    write_file(path, "good source\tone two three\nsrc\ta b c d e f g\n");
    CHECK_THROWS_MATCHES(read_examples(path), parse_error,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 2")));

    write_file(path, "src\tsrc two three\n");  // expansion token inside source
    CHECK_THROWS_AS(read_examples(path), parse_error);

    write_file(path, "src\tdup dup three\n");  // duplicate expansion token
    CHECK_THROWS_AS(read_examples(path), parse_error);

    write_file(path, "no tab at all\n");
    CHECK_THROWS_AS(read_examples(path), parse_error);

    write_file(path, "");
    CHECK(read_examples(path).empty());
    std::filesystem::remove(path);
}

TEST_CASE("stats serialize with a schema version") {
    BuildStats s{10, 4, 1, 2, 13};
    auto j = stats_to_json(s);
    CHECK(j["schema_version"] == 1);
    CHECK(j["pairs_in"] == 10);
    CHECK(j["examples_out"] == 13);
}
