#include <catch_amalgamated.hpp>

#include <cmath>

#include "qxpand/gradcheck.hpp"
#include "qxpand/lstm.hpp"

using namespace qx;
using Catch::Matchers::WithinAbs;

namespace {

LstmLayerParams<double> zero_layer(int in, int hidden) {
    LstmLayerParams<double> p;
    p.input_size = in;
    p.hidden = hidden;
    auto z = [&](const char* n, int r, int c) { return Parameter<double>(n, Matrix<double>::zeros(r, c)); };
    p.w_i = z("w_i", hidden, in); p.u_i = z("u_i", hidden, hidden); p.b_i = z("b_i", 1, hidden);
    p.w_f = z("w_f", hidden, in); p.u_f = z("u_f", hidden, hidden); p.b_f = z("b_f", 1, hidden);
    p.w_o = z("w_o", hidden, in); p.u_o = z("u_o", hidden, hidden); p.b_o = z("b_o", 1, hidden);
    p.w_g = z("w_g", hidden, in); p.u_g = z("u_g", hidden, hidden); p.b_g = z("b_g", 1, hidden);
    return p;
}

Matrix<double> row1(double v) {
    Matrix<double> m(1, 1);
    m.at(0, 0) = v;
    return m;
}

}  // namespace

TEST_CASE("lstm_step with all-zero weights yields zero state") {
    auto p = zero_layer(3, 2);
    Tape<double> t;
    SeededRng rng(4);
    auto x = t.constant(random_uniform<double>(1, 3, -2, 2, rng));
    LstmState<double> prev{t.constant(Matrix<double>::zeros(1, 2)), t.constant(Matrix<double>::zeros(1, 2))};
    auto next = lstm_step(t, x, prev, p);
    for (double v : t.value(next.h).data) CHECK(v == 0.0);  // o*tanh(c) = 0.5*tanh(0)
    for (double v : t.value(next.c).data) CHECK(v == 0.0);  // f*0 + i*tanh(0)
}

TEST_CASE("lstm_step matches a scalar hand evaluation") {
    // 1x1 gates evaluated two ways: matrix path vs plain scalar arithmetic
    LstmLayerParams<double> p = zero_layer(1, 1);
    p.w_i.value = row1(0.5);  p.u_i.value = row1(-0.3); p.b_i.value = row1(0.1);
    p.w_f.value = row1(0.4);  p.u_f.value = row1(0.2);  p.b_f.value = row1(1.0);
    p.w_o.value = row1(-0.6); p.u_o.value = row1(0.25); p.b_o.value = row1(0.05);
    p.w_g.value = row1(0.7);  p.u_g.value = row1(-0.45); p.b_g.value = row1(-0.2);
    const double x = 1.0, h_prev = 0.5, c_prev = -0.2;

    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double i = sig(0.5 * x - 0.3 * h_prev + 0.1);
    const double f = sig(0.4 * x + 0.2 * h_prev + 1.0);
    const double o = sig(-0.6 * x + 0.25 * h_prev + 0.05);
    const double g = std::tanh(0.7 * x - 0.45 * h_prev - 0.2);
    const double c = f * c_prev + i * g;
    const double h = o * std::tanh(c);

    Tape<double> t;
    LstmState<double> prev{t.constant(row1(h_prev)), t.constant(row1(c_prev))};
    auto next = lstm_step(t, t.constant(row1(x)), prev, p);
    CHECK_THAT(t.value(next.h).at(0, 0), WithinAbs(h, 1e-12));
    CHECK_THAT(t.value(next.c).at(0, 0), WithinAbs(c, 1e-12));
    // frozen from a 40-digit evaluation of the same constants
    CHECK_THAT(t.value(next.h).at(0, 0), WithinAbs(1.1939238465804490e-4, 1e-12));
    CHECK_THAT(t.value(next.c).at(0, 0), WithinAbs(3.0201384159422013e-4, 1e-12));
}

TEST_CASE("gradient through three chained lstm steps passes grad_check") {
    SeededRng rng(91);
    auto p = LstmLayerParams<double>::random("l", 3, 4, rng);
    auto params = p.parameters();
    const auto x0 = random_uniform<double>(1, 3, -1, 1, rng);
    const auto x1 = random_uniform<double>(1, 3, -1, 1, rng);
    const auto x2 = random_uniform<double>(1, 3, -1, 1, rng);

    auto loss = [&]() {
        Tape<double> t;
        auto bound = LstmLayerVals<double>::bind(t, p);
        LstmState<double> s{t.constant(Matrix<double>::zeros(1, 4)), t.constant(Matrix<double>::zeros(1, 4))};
        s = lstm_step(t, t.constant(x0), s, bound);
        s = lstm_step(t, t.constant(x1), s, bound);
        s = lstm_step(t, t.constant(x2), s, bound);
        auto ce = t.cross_entropy_mean(s.h, {1});
        t.backward(ce);
        return t.value(ce).at(0, 0);
    };
    CHECK(grad_check<double>(loss, params) < 1e-4);
}

TEST_CASE("encode pools the element-wise max over time") {
    SeededRng rng(123);
    auto enc = BiEncoderParams<double>::random(4, 3, 2, rng);
    Vocabulary v = Vocabulary::build({{"a", "b", "c", "d", "e"}}, 1, 100);
    auto emb = random_embeddings<double>(v, 4, 9);

    std::vector<int> ids{4, 6, 5, 8};
    auto out = encode<double>(ids, enc, emb);
    REQUIRE(out.annotations.h.rows == 4);
    REQUIRE(out.annotations.h.cols == 6);
    REQUIRE(out.sentence_vector.size() == 6);

    // brute-force oracle: per-dimension max loop over the annotations
    for (int d = 0; d < 6; ++d) {
        double best = out.annotations.h.at(0, d);
        for (int t = 1; t < 4; ++t) best = std::max(best, out.annotations.h.at(t, d));
        CHECK(out.sentence_vector[d] == best);
    }

    // T=1: the sentence vector is the single annotation row
    auto single = encode<double>(std::vector<int>{5}, enc, emb);
    for (int d = 0; d < 6; ++d) CHECK(single.sentence_vector[d] == single.annotations.h.at(0, d));

    CHECK_THROWS_AS(encode<double>(std::vector<int>{}, enc, emb), data_error);
}

TEST_CASE("encode is deterministic") {
    SeededRng rng(5);
    auto enc = BiEncoderParams<double>::random(4, 5, 2, rng);
    Vocabulary v = Vocabulary::build({{"a", "b", "c"}}, 1, 100);
    auto emb = random_embeddings<double>(v, 4, 2);
    std::vector<int> ids{4, 5, 6, 4};
    auto a = encode<double>(ids, enc, emb);
    auto b = encode<double>(ids, enc, emb);
    CHECK(a.annotations.h.data == b.annotations.h.data);
    CHECK(a.sentence_vector == b.sentence_vector);
}

TEST_CASE("encoder layer stacking uses 2H inputs above layer 0") {
    SeededRng rng(8);
    auto enc = BiEncoderParams<double>::random(6, 4, 3, rng);
    CHECK(enc.layers[0].first.input_size == 6);
    CHECK(enc.layers[1].first.input_size == 8);
    CHECK(enc.layers[2].second.input_size == 8);
    // forget bias initialized to 1
    for (double v : enc.layers[0].first.b_f.value.data) CHECK(v == 1.0);
    for (double v : enc.layers[1].second.b_f.value.data) CHECK(v == 1.0);
}
