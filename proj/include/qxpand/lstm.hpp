#pragma once

#include <span>
#include <string>
#include <vector>

#include "qxpand/embeddings.hpp"
#include "qxpand/tape.hpp"

namespace qx {

// One LSTM layer. Per gate g in {i, f, o, g~}: input weights W (H x in),
// recurrent weights U (H x H), bias b (1 x H). Forget bias starts at 1.
template <typename S>
struct LstmLayerParams {
    int input_size = 0;
    int hidden = 0;
    Parameter<S> w_i, u_i, b_i;
    Parameter<S> w_f, u_f, b_f;
    Parameter<S> w_o, u_o, b_o;
    Parameter<S> w_g, u_g, b_g;

    static LstmLayerParams random(const std::string& prefix, int input_size, int hidden, SeededRng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        auto w = [&](const std::string& n) {
            return Parameter<S>(prefix + "." + n, random_uniform<S>(hidden, input_size, -bound, bound, rng));
        };
        auto u = [&](const std::string& n) {
            return Parameter<S>(prefix + "." + n, random_uniform<S>(hidden, hidden, -bound, bound, rng));
        };
        auto b = [&](const std::string& n, double init) {
            return Parameter<S>(prefix + "." + n, Matrix<S>(1, hidden, static_cast<S>(init)));
        };
        LstmLayerParams p;
        p.input_size = input_size;
        p.hidden = hidden;
        p.w_i = w("w_i"); p.u_i = u("u_i"); p.b_i = b("b_i", 0.0);
        p.w_f = w("w_f"); p.u_f = u("u_f"); p.b_f = b("b_f", 1.0);
        p.w_o = w("w_o"); p.u_o = u("u_o"); p.b_o = b("b_o", 0.0);
        p.w_g = w("w_g"); p.u_g = u("u_g"); p.b_g = b("b_g", 0.0);
        return p;
    }

    std::vector<Parameter<S>*> parameters() {
        return {&w_i, &u_i, &b_i, &w_f, &u_f, &b_f, &w_o, &u_o, &b_o, &w_g, &u_g, &b_g};
    }
};

// Parameters bound to a tape once so repeated steps share the same nodes.
template <typename S>
struct LstmLayerVals {
    typename Tape<S>::Val w_i, u_i, b_i, w_f, u_f, b_f, w_o, u_o, b_o, w_g, u_g, b_g;

    static LstmLayerVals bind(Tape<S>& t, LstmLayerParams<S>& p) {
        return {t.param(p.w_i), t.param(p.u_i), t.param(p.b_i), t.param(p.w_f), t.param(p.u_f),
                t.param(p.b_f), t.param(p.w_o), t.param(p.u_o), t.param(p.b_o), t.param(p.w_g),
                t.param(p.u_g), t.param(p.b_g)};
    }
};

template <typename S>
struct LstmState {
    typename Tape<S>::Val h;  // 1 x H
    typename Tape<S>::Val c;  // 1 x H
};

// i = sig(W_i x + U_i h + b_i), f, o likewise; g~ = tanh(...);
// c = f.c_prev + i.g~; h = o.tanh(c). x, h are row vectors.
template <typename S>
LstmState<S> lstm_step(Tape<S>& t, typename Tape<S>::Val x, LstmState<S> prev, const LstmLayerVals<S>& p) {
    auto gate = [&](typename Tape<S>::Val w, typename Tape<S>::Val u, typename Tape<S>::Val b) {
        return t.add_rowvec(t.add(t.matmul_nt(x, w), t.matmul_nt(prev.h, u)), b);
    };
    auto i = t.sigmoid(gate(p.w_i, p.u_i, p.b_i));
    auto f = t.sigmoid(gate(p.w_f, p.u_f, p.b_f));
    auto o = t.sigmoid(gate(p.w_o, p.u_o, p.b_o));
    auto g = t.tanh_map(gate(p.w_g, p.u_g, p.b_g));
    auto c = t.add(t.hadamard(f, prev.c), t.hadamard(i, g));
    auto h = t.hadamard(o, t.tanh_map(c));
    return {h, c};
}

// Convenience overload binding the layer for a single step.
template <typename S>
LstmState<S> lstm_step(Tape<S>& t, typename Tape<S>::Val x, LstmState<S> prev, LstmLayerParams<S>& p) {
    return lstm_step(t, x, prev, LstmLayerVals<S>::bind(t, p));
}

// Stacked bidirectional LSTM. layer l > 0 consumes the 2H-wide
// concatenation of layer l-1's directions.
template <typename S>
struct BiEncoderParams {
    int input_size = 0;
    int hidden = 0;
    std::vector<std::pair<LstmLayerParams<S>, LstmLayerParams<S>>> layers;  // (forward, backward)

    static BiEncoderParams random(int input_size, int hidden, int num_layers, SeededRng& rng) {
        BiEncoderParams p;
        p.input_size = input_size;
        p.hidden = hidden;
        for (int l = 0; l < num_layers; ++l) {
            const int in = l == 0 ? input_size : 2 * hidden;
            auto fwd = LstmLayerParams<S>::random("encoder.l" + std::to_string(l) + ".fwd", in, hidden, rng);
            auto bwd = LstmLayerParams<S>::random("encoder.l" + std::to_string(l) + ".bwd", in, hidden, rng);
            p.layers.emplace_back(std::move(fwd), std::move(bwd));
        }
        return p;
    }

    int num_layers() const { return static_cast<int>(layers.size()); }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> out;
        for (auto& [fwd, bwd] : layers) {
            for (auto* p : fwd.parameters()) out.push_back(p);
            for (auto* p : bwd.parameters()) out.push_back(p);
        }
        return out;
    }
};

template <typename S>
struct BiEncoderVals {
    int hidden = 0;
    std::vector<std::pair<LstmLayerVals<S>, LstmLayerVals<S>>> layers;

    static BiEncoderVals bind(Tape<S>& t, BiEncoderParams<S>& p) {
        BiEncoderVals v;
        v.hidden = p.hidden;
        for (auto& [fwd, bwd] : p.layers)
            v.layers.emplace_back(LstmLayerVals<S>::bind(t, fwd), LstmLayerVals<S>::bind(t, bwd));
        return v;
    }

    int num_layers() const { return static_cast<int>(layers.size()); }
};

// Per-token annotations h_1..h_T from the top layer plus the states that
// seed the decoder bridge.
template <typename S>
struct EncodeGraph {
    typename Tape<S>::Val annotations;  // T x 2H
    typename Tape<S>::Val final_fwd;    // 1 x H, forward state at t=T
    typename Tape<S>::Val final_bwd;    // 1 x H, backward state at t=1
};

// inputs: T x D rows (already embedded). interlayer_dropout, when given,
// holds one T x 2H inverted-dropout mask per layer boundary.
template <typename S>
EncodeGraph<S> encode_on_tape(Tape<S>& t, typename Tape<S>::Val inputs, const BiEncoderVals<S>& params,
                              const std::vector<Matrix<S>>* interlayer_dropout = nullptr) {
    const int T = t.value(inputs).rows;
    if (T < 1) throw data_error("encode: empty input sequence");
    using Val = typename Tape<S>::Val;
    const int H = params.hidden;

    Val layer_in = inputs;
    Val final_fwd{}, final_bwd{};
    for (int l = 0; l < params.num_layers(); ++l) {
        const auto& fwd = params.layers[l].first;
        const auto& bwd = params.layers[l].second;
        LstmState<S> sf{t.constant(Matrix<S>::zeros(1, H)), t.constant(Matrix<S>::zeros(1, H))};
        LstmState<S> sb{t.constant(Matrix<S>::zeros(1, H)), t.constant(Matrix<S>::zeros(1, H))};
        std::vector<Val> fwd_h(T), bwd_h(T);
        for (int step = 0; step < T; ++step) {
            sf = lstm_step(t, t.slice_rows(layer_in, step, 1), sf, fwd);
            fwd_h[step] = sf.h;
        }
        for (int step = T - 1; step >= 0; --step) {
            sb = lstm_step(t, t.slice_rows(layer_in, step, 1), sb, bwd);
            bwd_h[step] = sb.h;
        }
        std::vector<Val> rows(T);
        for (int step = 0; step < T; ++step) rows[step] = t.concat_cols(fwd_h[step], bwd_h[step]);
        Val out = t.vstack(rows);
        final_fwd = fwd_h[T - 1];
        final_bwd = bwd_h[0];
        if (l + 1 < params.num_layers() && interlayer_dropout && !(*interlayer_dropout)[l].data.empty())
            out = t.hadamard(out, t.constant((*interlayer_dropout)[l]));
        layer_in = out;
    }
    return {layer_in, final_fwd, final_bwd};
}

template <typename S>
struct Annotations {
    Matrix<S> h;  // T x 2H
    int T = 0;
};

template <typename S>
struct EncodeResult {
    Annotations<S> annotations;
    std::vector<S> sentence_vector;  // element-wise max over time, length 2H
};

// Inference entry point: embeds ids, runs the BiLSTM, max-pools over time.
template <typename S>
EncodeResult<S> encode(std::span<const int> ids, BiEncoderParams<S>& params, const EmbeddingTable<S>& emb) {
    if (ids.empty()) throw data_error("encode: empty input sequence");
    Tape<S> t;
    auto table = t.constant(emb.matrix);
    auto inputs = t.embed_rows(table, std::vector<int>(ids.begin(), ids.end()));
    auto g = encode_on_tape(t, inputs, BiEncoderVals<S>::bind(t, params));
    EncodeResult<S> out;
    out.annotations.h = t.value(g.annotations);
    out.annotations.T = static_cast<int>(ids.size());
    auto pooled = t.max_over_rows(g.annotations);
    const Matrix<S>& pv = t.value(pooled);
    out.sentence_vector.assign(pv.data.begin(), pv.data.end());
    return out;
}

}  // namespace qx
