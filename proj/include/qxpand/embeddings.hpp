#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "qxpand/matrix.hpp"
#include "qxpand/rng.hpp"
#include "qxpand/text.hpp"

namespace qx {

template <typename S>
struct EmbeddingTable {
    Matrix<S> matrix;  // V x D
    int dim = 0;
};

namespace detail {

inline double parse_float_field(std::string_view field, std::size_t line_no) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw parse_error("embedding file: non-numeric field '" + std::string(field) + "'", line_no);
    return v;
}

}  // namespace detail

// Rows for in-vocabulary file tokens are copied verbatim. Rows for
// vocabulary tokens absent from the file are drawn uniform in [-0.1, 0.1]
// from the seeded generator, in id order. The PAD row is forced to zero
// (and consumes no draws) so masked positions contribute nothing to sums.
template <typename S>
EmbeddingTable<S> load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                  std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot read embedding file " + path.string());

    std::unordered_map<std::string, std::vector<double>> file_rows;
    int dim = -1;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view sv(line);
        std::size_t start = 0;
        while (start <= sv.size()) {
            std::size_t sp = sv.find(' ', start);
            if (sp == std::string_view::npos) {
                fields.push_back(sv.substr(start));
                break;
            }
            fields.push_back(sv.substr(start, sp - start));
            start = sp + 1;
        }
        if (fields.size() < 2) throw parse_error("embedding file: expected 'token v1 ... vD'", line_no);
        const int d = static_cast<int>(fields.size()) - 1;
        if (dim == -1)
            dim = d;
        else if (d != dim)
            throw shape_error("embedding file: dimension mismatch at line " + std::to_string(line_no) + ": " +
                              std::to_string(d) + " values, expected " + std::to_string(dim));
        std::vector<double> vals(d);
        for (int i = 0; i < d; ++i) vals[i] = detail::parse_float_field(fields[i + 1], line_no);
        file_rows[std::string(fields[0])] = std::move(vals);
    }
    if (dim == -1) throw parse_error("embedding file: no rows", 0);

    EmbeddingTable<S> table;
    table.dim = dim;
    table.matrix = Matrix<S>::zeros(vocab.size(), dim);
    SeededRng rng(seed);
    for (int id = 0; id < vocab.size(); ++id) {
        if (id == Vocabulary::kPad) continue;  // stays zero
        auto it = file_rows.find(vocab.token(id));
        if (it != file_rows.end()) {
            for (int c = 0; c < dim; ++c) table.matrix.at(id, c) = static_cast<S>(it->second[c]);
        } else {
            for (int c = 0; c < dim; ++c) table.matrix.at(id, c) = static_cast<S>(rng.uniform(-0.1, 0.1));
        }
    }
    return table;
}

// Same init rule with every token treated as absent from the file.
template <typename S>
EmbeddingTable<S> random_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed) {
    EmbeddingTable<S> table;
    table.dim = dim;
    table.matrix = Matrix<S>::zeros(vocab.size(), dim);
    SeededRng rng(seed);
    for (int id = 0; id < vocab.size(); ++id) {
        if (id == Vocabulary::kPad) continue;
        for (int c = 0; c < dim; ++c) table.matrix.at(id, c) = static_cast<S>(rng.uniform(-0.1, 0.1));
    }
    return table;
}

// One token per line followed by space-separated decimal floats.
template <typename S>
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable<S>& table,
                     const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write embedding file " + path.string());
    out.precision(17);
    for (int id = 0; id < vocab.size(); ++id) {
        out << vocab.token(id);
        for (int c = 0; c < table.dim; ++c) out << ' ' << static_cast<double>(table.matrix.at(id, c));
        out << '\n';
    }
}

}  // namespace qx
