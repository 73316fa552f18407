#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qxpand/embeddings.hpp"
#include "qxpand/text.hpp"

using namespace qx;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("qxpand_text_" + name);
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
    CHECK(tokenize("Bullying Prevention Programs") ==
          std::vector<std::string>{"bullying", "prevention", "programs"});
    CHECK(tokenize("who is the president of the U.S?") ==
          std::vector<std::string>{"who", "is", "the", "president", "of", "the", "u", "s"});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("  \t--  ") == std::vector<std::string>{});
    CHECK(tokenize("a1-b2") == std::vector<std::string>{"a1", "b2"});
}

TEST_CASE("tokenize is idempotent on its own space-joined output") {
    SeededRng rng(7);
    const std::string alphabet = "abcZ09 .,!?-_#\xc3\xa9";
    for (int it = 0; it < 200; ++it) {
        std::string text;
        const std::size_t len = rng.uniform_index(40);
        for (std::size_t i = 0; i < len; ++i) text.push_back(alphabet[rng.uniform_index(alphabet.size())]);
        auto once = tokenize(text);
        auto twice = tokenize(join_tokens(once));
        CHECK(once == twice);
    }
}

TEST_CASE("build_vocab orders by frequency then lexicographically") {
    auto v = Vocabulary::build({{"a", "b", "a"}}, 1, 10);
    REQUIRE(v.size() == 6);
    CHECK(v.token(4) == "a");
    CHECK(v.token(5) == "b");

    auto v2 = Vocabulary::build({{"a", "b", "a"}}, 2, 10);
    REQUIRE(v2.size() == 5);
    CHECK(v2.token(4) == "a");

    auto v3 = Vocabulary::build({}, 1, 10);
    CHECK(v3.size() == 4);  // specials only

    // ties break lexicographically, truncation respects max_size
    auto v4 = Vocabulary::build({{"zz", "mm", "aa"}}, 1, 6);
    REQUIRE(v4.size() == 6);
    CHECK(v4.token(4) == "aa");
    CHECK(v4.token(5) == "mm");
}

TEST_CASE("vocabulary ids are dense with specials first") {
    auto v = Vocabulary::build({{"x", "y"}}, 1, 100);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.token(Vocabulary::kUnk) == "<unk>");
    CHECK(v.token(Vocabulary::kBos) == "<bos>");
    CHECK(v.token(Vocabulary::kEos) == "<eos>");
    for (int i = 0; i < v.size(); ++i) CHECK(*v.find(v.token(i)) == i);
    CHECK_THROWS_AS(v.token(v.size()), data_error);
    CHECK_THROWS_AS(v.token(-1), data_error);
}

TEST_CASE("encode/decode ids roundtrip and map unknowns to UNK") {
    auto v = Vocabulary::build({{"a", "b", "c"}}, 1, 100);
    CHECK(encode_ids(std::vector<std::string>{"a"}, v) == std::vector<int>{4});
    CHECK(encode_ids(std::vector<std::string>{"zzz"}, v) == std::vector<int>{Vocabulary::kUnk});

    SeededRng rng(3);
    for (int it = 0; it < 100; ++it) {
        std::vector<std::string> toks;
        const std::size_t len = rng.uniform_index(12);
        for (std::size_t i = 0; i < len; ++i) toks.push_back(v.token(static_cast<int>(rng.uniform_index(v.size()))));
        CHECK(decode_ids(encode_ids(toks, v), v) == toks);
    }
}

TEST_CASE("vocabulary file roundtrip") {
    auto v = Vocabulary::build({{"beta", "alpha", "beta"}}, 1, 100);
    auto path = temp_file("vocab.txt");
    v.save(path);
    auto loaded = Vocabulary::load(path);
    CHECK(loaded.tokens() == v.tokens());
    std::filesystem::remove(path);
}

TEST_CASE("load_embeddings copies file rows and seeds the rest") {
    auto path = temp_file("emb.txt");
    write_file(path, "a 1 0\nb 0 1\n");
    auto v = Vocabulary::build({{"a", "b", "c"}}, 1, 100);
    auto table = load_embeddings<double>(path, v, 42);
    REQUIRE(table.dim == 2);
    REQUIRE(table.matrix.rows == v.size());

    const int a = *v.find("a"), b = *v.find("b"), c = *v.find("c");
    CHECK(table.matrix.at(a, 0) == 1.0);
    CHECK(table.matrix.at(a, 1) == 0.0);
    CHECK(table.matrix.at(b, 0) == 0.0);
    CHECK(table.matrix.at(b, 1) == 1.0);
    // PAD row forced to zero
    CHECK(table.matrix.at(Vocabulary::kPad, 0) == 0.0);
    CHECK(table.matrix.at(Vocabulary::kPad, 1) == 0.0);
    // missing rows are random in [-0.1, 0.1]
    for (int col = 0; col < 2; ++col) {
        CHECK(std::abs(table.matrix.at(c, col)) <= 0.1);
        CHECK(std::abs(table.matrix.at(Vocabulary::kUnk, col)) <= 0.1);
    }
    CHECK(table.matrix.at(c, 0) != 0.0);

    // determinism: identical (file, vocab, seed) => bitwise-identical table
    auto again = load_embeddings<double>(path, v, 42);
    CHECK(again.matrix.data == table.matrix.data);
    auto other_seed = load_embeddings<double>(path, v, 43);
    CHECK(other_seed.matrix.data != table.matrix.data);
    std::filesystem::remove(path);
}

TEST_CASE("load_embeddings rejects malformed files") {
    auto v = Vocabulary::build({{"a"}}, 1, 100);
    auto dim_mismatch = temp_file("emb_dim.txt");
    write_file(dim_mismatch, "a 1 0\nb 0 1 3\n");
    CHECK_THROWS_AS(load_embeddings<double>(dim_mismatch, v, 1), shape_error);

    auto bad_number = temp_file("emb_nan.txt");
    write_file(bad_number, "a 1 zebra\n");
    CHECK_THROWS_WITH(load_embeddings<double>(bad_number, v, 1),
                      Catch::Matchers::ContainsSubstring("line 1"));

    auto token_only = temp_file("emb_tok.txt");
    write_file(token_only, "a\n");
    CHECK_THROWS_AS(load_embeddings<double>(token_only, v, 1), parse_error);

    CHECK_THROWS_AS(load_embeddings<double>(temp_file("missing_file.txt"), v, 1), io_error);
    std::filesystem::remove(dim_mismatch);
    std::filesystem::remove(bad_number);
    std::filesystem::remove(token_only);
}

TEST_CASE("stopword set is fixed and case-sensitive lowercase") {
    const auto& sw = StopwordSet::english();
    CHECK(sw.contains("the"));
    CHECK(sw.contains("of"));
    CHECK(sw.contains("is"));
    CHECK_FALSE(sw.contains("parade"));
    CHECK(sw.size() >= 140);
}
