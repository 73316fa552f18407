#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "qxpand/checkpoint.hpp"
#include "qxpand/dataset.hpp"
#include "qxpand/embeddings.hpp"
#include "qxpand/gradcheck.hpp"
#include "qxpand/lstm.hpp"
#include "qxpand/tape.hpp"
#include "qxpand/text.hpp"

namespace qx {

// Additive attention: e_t = v^T tanh(W_s s + W_h h_t).
template <typename S>
struct AttentionParams {
    Parameter<S> w_s;  // A x S
    Parameter<S> w_h;  // A x 2H
    Parameter<S> v;    // 1 x A

    static AttentionParams random(int attn, int state_size, int ann_width, SeededRng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(attn));
        AttentionParams p;
        p.w_s = Parameter<S>("attention.w_s", random_uniform<S>(attn, state_size, -bound, bound, rng));
        p.w_h = Parameter<S>("attention.w_h", random_uniform<S>(attn, ann_width, -bound, bound, rng));
        p.v = Parameter<S>("attention.v", random_uniform<S>(1, attn, -bound, bound, rng));
        return p;
    }

    std::vector<Parameter<S>*> parameters() { return {&w_s, &w_h, &v}; }
};

// linear+tanh map from the concatenated final encoder states to one
// decoder layer's initial (h, c)
template <typename S>
struct BridgeParams {
    Parameter<S> w_h, b_h;  // 2H x H, 1 x H
    Parameter<S> w_c, b_c;

    static BridgeParams random(const std::string& prefix, int ann_width, int hidden, SeededRng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        BridgeParams p;
        p.w_h = Parameter<S>(prefix + ".w_h", random_uniform<S>(ann_width, hidden, -bound, bound, rng));
        p.b_h = Parameter<S>(prefix + ".b_h", Matrix<S>::zeros(1, hidden));
        p.w_c = Parameter<S>(prefix + ".w_c", random_uniform<S>(ann_width, hidden, -bound, bound, rng));
        p.b_c = Parameter<S>(prefix + ".b_c", Matrix<S>::zeros(1, hidden));
        return p;
    }

    std::vector<Parameter<S>*> parameters() { return {&w_h, &b_h, &w_c, &b_c}; }
};

template <typename S>
struct DecoderParams {
    int hidden = 0;
    std::vector<LstmLayerParams<S>> layers;  // layer 0 input = D + 2H, others H
    std::vector<BridgeParams<S>> bridge;     // one per layer
    Parameter<S> w_out;  // (S + 2H) x V
    Parameter<S> b_out;  // 1 x V

    static DecoderParams random(int emb_dim, int hidden, int num_layers, int ann_width, int vocab_size,
                                SeededRng& rng) {
        DecoderParams p;
        p.hidden = hidden;
        for (int l = 0; l < num_layers; ++l) {
            const int in = l == 0 ? emb_dim + ann_width : hidden;
            p.layers.push_back(LstmLayerParams<S>::random("decoder.l" + std::to_string(l), in, hidden, rng));
        }
        for (int l = 0; l < num_layers; ++l)
            p.bridge.push_back(BridgeParams<S>::random("bridge.l" + std::to_string(l), ann_width, hidden, rng));
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden + ann_width));
        p.w_out = Parameter<S>("output.w", random_uniform<S>(hidden + ann_width, vocab_size, -bound, bound, rng));
        p.b_out = Parameter<S>("output.b", Matrix<S>::zeros(1, vocab_size));
        return p;
    }

    int num_layers() const { return static_cast<int>(layers.size()); }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> out;
        for (auto& l : layers)
            for (auto* p : l.parameters()) out.push_back(p);
        for (auto& b : bridge)
            for (auto* p : b.parameters()) out.push_back(p);
        out.push_back(&w_out);
        out.push_back(&b_out);
        return out;
    }
};

// All trainable tensors of the encoder-attention-decoder model. The
// embedding table is shared between encoder and decoder and trains with
// everything else.
template <typename S>
struct Seq2SeqParams {
    int emb_dim = 0;
    int hidden = 0;
    int attn = 0;
    Parameter<S> embedding;  // V x D
    BiEncoderParams<S> encoder;
    DecoderParams<S> decoder;
    AttentionParams<S> attention;

    static Seq2SeqParams build(const EmbeddingTable<S>& emb, int hidden, int attn, int num_layers,
                               std::uint64_t seed) {
        Seq2SeqParams p;
        p.emb_dim = emb.dim;
        p.hidden = hidden;
        p.attn = attn;
        p.embedding = Parameter<S>("embedding", emb.matrix);
        SeededRng rng(seed);
        p.encoder = BiEncoderParams<S>::random(emb.dim, hidden, num_layers, rng);
        p.decoder = DecoderParams<S>::random(emb.dim, hidden, num_layers, 2 * hidden, emb.matrix.rows, rng);
        p.attention = AttentionParams<S>::random(attn, hidden, 2 * hidden, rng);
        return p;
    }

    static Seq2SeqParams random(int vocab_size, int emb_dim, int hidden, int attn, int num_layers,
                                std::uint64_t seed) {
        EmbeddingTable<S> emb;
        emb.dim = emb_dim;
        SeededRng erng(seed ^ 0xE5B7A9F3D1C20817ULL);
        emb.matrix = random_uniform<S>(vocab_size, emb_dim, -0.1, 0.1, erng);
        for (int c = 0; c < emb_dim; ++c) emb.matrix.at(Vocabulary::kPad, c) = S(0);
        return build(emb, hidden, attn, num_layers, seed);
    }

    int vocab_size() const { return embedding.value.rows; }

    std::vector<Parameter<S>*> parameters() {
        std::vector<Parameter<S>*> out{&embedding};
        for (auto* p : encoder.parameters()) out.push_back(p);
        for (auto* p : decoder.parameters()) out.push_back(p);
        for (auto* p : attention.parameters()) out.push_back(p);
        return out;
    }
};

template <typename S>
struct Seq2SeqModel {
    Vocabulary vocab;
    Seq2SeqParams<S> params;
};

template <typename S>
struct AttentionVals {
    typename Tape<S>::Val w_s, w_h, v;

    static AttentionVals bind(Tape<S>& t, AttentionParams<S>& p) {
        return {t.param(p.w_s), t.param(p.w_h), t.param(p.v)};
    }
};

template <typename S>
struct DecoderVals {
    std::vector<LstmLayerVals<S>> layers;
    std::vector<std::array<typename Tape<S>::Val, 4>> bridge;  // w_h, b_h, w_c, b_c
    typename Tape<S>::Val w_out, b_out;

    static DecoderVals bind(Tape<S>& t, DecoderParams<S>& p) {
        DecoderVals v;
        for (auto& l : p.layers) v.layers.push_back(LstmLayerVals<S>::bind(t, l));
        for (auto& b : p.bridge)
            v.bridge.push_back({t.param(b.w_h), t.param(b.b_h), t.param(b.w_c), t.param(b.b_c)});
        v.w_out = t.param(p.w_out);
        v.b_out = t.param(p.b_out);
        return v;
    }
};

template <typename S>
struct Seq2SeqVals {
    int emb_dim = 0, hidden = 0, vocab_size = 0;
    typename Tape<S>::Val embedding;
    BiEncoderVals<S> encoder;
    DecoderVals<S> decoder;
    AttentionVals<S> attention;

    static Seq2SeqVals bind(Tape<S>& t, Seq2SeqParams<S>& p) {
        Seq2SeqVals v;
        v.emb_dim = p.emb_dim;
        v.hidden = p.hidden;
        v.vocab_size = p.vocab_size();
        v.embedding = t.param(p.embedding);
        v.encoder = BiEncoderVals<S>::bind(t, p.encoder);
        v.decoder = DecoderVals<S>::bind(t, p.decoder);
        v.attention = AttentionVals<S>::bind(t, p.attention);
        return v;
    }
};

template <typename S>
struct AttendGraph {
    typename Tape<S>::Val alpha;    // 1 x T, sums to 1 over the valid region
    typename Tape<S>::Val context;  // 1 x 2H
};

// alpha = softmax over e_t = v^T tanh(W_s s_prev + W_h h_t); context is
// the alpha-weighted sum of annotations. Positions >= valid_len (padding)
// get weight exactly 0.
template <typename S>
AttendGraph<S> attend(Tape<S>& t, typename Tape<S>::Val s_prev, typename Tape<S>::Val annotations,
                      const AttentionVals<S>& av, int valid_len = -1) {
    auto s_proj = t.matmul_nt(s_prev, av.w_s);       // 1 x A
    auto h_proj = t.matmul_nt(annotations, av.w_h);  // T x A
    auto scores = t.matmul_nt(av.v, t.tanh_map(t.add_rowvec(h_proj, s_proj)));  // 1 x T
    auto alpha = t.softmax_rows(scores, valid_len);
    auto context = t.matmul(alpha, annotations);  // 1 x 2H
    return {alpha, context};
}

template <typename S>
struct DecoderState {
    std::vector<LstmState<S>> layers;
};

// tanh-bridged initial decoder state from the final encoder states.
template <typename S>
DecoderState<S> init_decoder_state(Tape<S>& t, const Seq2SeqVals<S>& vals, typename Tape<S>::Val final_fwd,
                                   typename Tape<S>::Val final_bwd) {
    auto summary = t.concat_cols(final_fwd, final_bwd);  // 1 x 2H
    DecoderState<S> state;
    for (const auto& b : vals.decoder.bridge) {
        auto h0 = t.tanh_map(t.affine(summary, b[0], b[1]));
        auto c0 = t.tanh_map(t.affine(summary, b[2], b[3]));
        state.layers.push_back({h0, c0});
    }
    return state;
}

template <typename S>
struct DecodeStepGraph {
    typename Tape<S>::Val logits;   // 1 x V
    typename Tape<S>::Val alpha;    // 1 x T
    typename Tape<S>::Val context;  // 1 x 2H
    DecoderState<S> state;
};

// One decoder step: input [embed(y_prev); c_prev] through the LSTM stack,
// attend with the new top state, logits = W_o [s; c] + b_o.
// step_dropout, when given, holds one 1xH mask per layer boundary.
template <typename S>
DecodeStepGraph<S> decode_step(Tape<S>& t, int y_prev, const DecoderState<S>& state,
                               typename Tape<S>::Val c_prev, const Seq2SeqVals<S>& vals,
                               typename Tape<S>::Val annotations,
                               const std::vector<Matrix<S>>* step_dropout = nullptr, int valid_len = -1) {
    if (y_prev < 0 || y_prev >= vals.vocab_size) throw data_error("decode_step: token id out of range");
    auto x = t.concat_cols(t.embed_rows(vals.embedding, {y_prev}), c_prev);
    DecodeStepGraph<S> out;
    out.state.layers.reserve(state.layers.size());
    auto layer_in = x;
    for (std::size_t l = 0; l < vals.decoder.layers.size(); ++l) {
        auto next = lstm_step(t, layer_in, state.layers[l], vals.decoder.layers[l]);
        out.state.layers.push_back(next);
        layer_in = next.h;
        if (l + 1 < vals.decoder.layers.size() && step_dropout && !(*step_dropout)[l].data.empty())
            layer_in = t.hadamard(layer_in, t.constant((*step_dropout)[l]));
    }
    auto s_top = layer_in;
    auto att = attend(t, s_top, annotations, vals.attention, valid_len);
    out.logits = t.affine(t.concat_cols(s_top, att.context), vals.decoder.w_out, vals.decoder.b_out);
    out.alpha = att.alpha;
    out.context = att.context;
    return out;
}

template <typename S>
struct ExampleGraph {
    typename Tape<S>::Val loss_mean;  // 1 x 1, mean over this example's target positions
    typename Tape<S>::Val logits;     // steps x V, teacher-forced
    std::vector<int> targets;         // expansion ids + EOS
};

// Teacher forcing: gold y_{t-1} fed at step t, BOS first, EOS appended to
// the targets. The first attention context is zero. Dropout (training
// only) applies between stacked LSTM layers, never on recurrent paths.
template <typename S>
ExampleGraph<S> teacher_forced_graph(Tape<S>& t, const Seq2SeqVals<S>& vals, std::span<const int> src_ids,
                                     std::span<const int> tgt_ids, double dropout = 0.0,
                                     SeededRng* rng = nullptr) {
    if (src_ids.empty()) throw data_error("teacher_forced_graph: empty source");
    if (tgt_ids.empty()) throw data_error("teacher_forced_graph: empty target");
    const int T = static_cast<int>(src_ids.size());
    const int boundaries = vals.encoder.num_layers() - 1;
    const bool use_dropout = dropout > 0.0 && rng != nullptr;

    std::vector<Matrix<S>> enc_masks;
    if (use_dropout)
        for (int l = 0; l < boundaries; ++l)
            enc_masks.push_back(dropout_mask<S>(T, 2 * vals.hidden, dropout, *rng));

    auto inputs = t.embed_rows(vals.embedding, std::vector<int>(src_ids.begin(), src_ids.end()));
    auto enc = encode_on_tape(t, inputs, vals.encoder, use_dropout ? &enc_masks : nullptr);
    auto state = init_decoder_state(t, vals, enc.final_fwd, enc.final_bwd);

    std::vector<int> dec_inputs{Vocabulary::kBos};
    dec_inputs.insert(dec_inputs.end(), tgt_ids.begin(), tgt_ids.end());
    ExampleGraph<S> out;
    out.targets.assign(tgt_ids.begin(), tgt_ids.end());
    out.targets.push_back(Vocabulary::kEos);

    auto c_prev = t.constant(Matrix<S>::zeros(1, 2 * vals.hidden));
    std::vector<typename Tape<S>::Val> logit_rows;
    const int dec_boundaries = static_cast<int>(vals.decoder.layers.size()) - 1;
    for (int step = 0; step < static_cast<int>(dec_inputs.size()); ++step) {
        std::vector<Matrix<S>> step_masks;
        if (use_dropout)
            for (int l = 0; l < dec_boundaries; ++l)
                step_masks.push_back(dropout_mask<S>(1, vals.hidden, dropout, *rng));
        auto g = decode_step(t, dec_inputs[step], state, c_prev, vals, enc.annotations,
                             use_dropout ? &step_masks : nullptr);
        state = g.state;
        c_prev = g.context;
        logit_rows.push_back(g.logits);
    }
    out.logits = t.vstack(logit_rows);
    out.loss_mean = t.cross_entropy_mean(out.logits, out.targets);
    return out;
}

struct TrainConfig {
    int batch_size = 32;
    double lr0 = 0.001;
    double decay = 0.5;       // multiplicative, applied per epoch
    double dropout = 0.35;
    int epochs = 25;
    double clip_norm = 5.0;
    std::uint64_t seed = 1;
};

struct EpochLog {
    int epoch;
    double loss;  // token-weighted mean cross entropy over the epoch
    double token_accuracy;
    double lr;
};

namespace detail {

template <typename S>
struct EncodedExample {
    std::vector<int> src;
    std::vector<int> tgt;
};

template <typename S>
std::vector<EncodedExample<S>> encode_dataset(const std::vector<ExpansionExample>& dataset,
                                              const Vocabulary& vocab) {
    std::vector<EncodedExample<S>> out;
    out.reserve(dataset.size());
    for (const auto& ex : dataset) {
        if (ex.source.empty() || ex.expansion.empty())
            throw data_error("train: example with empty source or expansion");
        out.push_back({encode_ids(ex.source, vocab), encode_ids(ex.expansion, vocab)});
    }
    return out;
}

}  // namespace detail

// Fraction of target positions where the argmax of the teacher-forced
// logits equals the gold token. Dropout off.
template <typename S>
double token_accuracy(Seq2SeqModel<S>& model, const std::vector<ExpansionExample>& dataset) {
    if (dataset.empty()) throw data_error("token_accuracy: empty dataset (metric undefined)");
    auto encoded = detail::encode_dataset<S>(dataset, model.vocab);
    long long hits = 0, total = 0;
    for (const auto& ex : encoded) {
        Tape<S> t;
        auto vals = Seq2SeqVals<S>::bind(t, model.params);
        auto g = teacher_forced_graph(t, vals, ex.src, ex.tgt);
        const Matrix<S>& logits = t.value(g.logits);
        for (int r = 0; r < logits.rows; ++r) {
            int best = 0;
            for (int v = 1; v < logits.cols; ++v)
                if (logits.at(r, v) > logits.at(r, best)) best = v;
            hits += (best == g.targets[r]);
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

// SGD with per-epoch learning-rate decay over seeded-shuffled batches.
// Returns the per-epoch log. Loss for a batch is the token-weighted mean
// cross entropy over every target position in the batch.
template <typename S>
std::vector<EpochLog> train(const std::vector<ExpansionExample>& dataset, const TrainConfig& cfg,
                            Seq2SeqModel<S>& model) {
    if (dataset.empty()) throw data_error("train: empty dataset");
    if (cfg.batch_size < 1) throw data_error("train: batch_size must be >= 1");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw data_error("train: dropout must be in [0,1)");
    if (cfg.decay <= 0.0 || cfg.decay > 1.0) throw data_error("train: decay must be in (0,1]");

    auto encoded = detail::encode_dataset<S>(dataset, model.vocab);
    auto params = model.params.parameters();
    SeededRng rng(cfg.seed);
    std::vector<std::size_t> order(encoded.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochLog> log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr0 * std::pow(cfg.decay, epoch);
        rng.shuffle(order);
        double loss_sum = 0.0;
        long long token_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tape<S> t;
            auto vals = Seq2SeqVals<S>::bind(t, model.params);
            std::vector<typename Tape<S>::Val> losses;
            std::vector<int> counts;
            int batch_tokens = 0;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = encoded[order[i]];
                auto g = teacher_forced_graph(t, vals, ex.src, ex.tgt, cfg.dropout, &rng);
                losses.push_back(g.loss_mean);
                counts.push_back(static_cast<int>(g.targets.size()));
                batch_tokens += static_cast<int>(g.targets.size());
            }
            auto batch_loss = t.scale(losses[0], static_cast<double>(counts[0]) / batch_tokens);
            for (std::size_t i = 1; i < losses.size(); ++i)
                batch_loss = t.add(batch_loss, t.scale(losses[i], static_cast<double>(counts[i]) / batch_tokens));
            const double loss_value = static_cast<double>(t.value(batch_loss).at(0, 0));
            if (!std::isfinite(loss_value)) {
                std::string offender = "none";
                for (auto* p : params)
                    if (!all_finite(p->value)) {
                        offender = p->name;
                        break;
                    }
                throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                    std::to_string(start / cfg.batch_size) + " (offending parameter: " + offender +
                                    ")");
            }
            t.backward(batch_loss);
            sgd_step<S>(params, lr, cfg.clip_norm);
            loss_sum += loss_value * batch_tokens;
            token_sum += batch_tokens;
        }
        log.push_back({epoch, loss_sum / static_cast<double>(token_sum), token_accuracy(model, dataset), lr});
    }
    return log;
}

// epoch,loss,token_accuracy,lr
inline void write_train_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write training log " + path.string());
    out << "epoch,loss,token_accuracy,lr\n";
    out.precision(17);
    for (const auto& e : log)
        out << e.epoch << ',' << e.loss << ',' << e.token_accuracy << ',' << e.lr << '\n';
}

struct DecodeResult {
    std::vector<std::string> generated;    // emitted tokens, EOS excluded
    std::vector<double> step_probs;        // model probability of each performed step's choice (incl. EOS)
    Matrix<double> attention;              // one row per performed step, each sums to 1
    std::vector<std::string> expansion;    // generated minus query tokens, specials and duplicates
};

// Greedy argmax decoding until EOS or max_steps, then the decode-time
// word filter: tokens already present (case-folded) in the tokenized
// query are removed, then duplicates, order preserved. The expansion may
// legitimately come out empty.
template <typename S>
DecodeResult expand(const std::string& query, Seq2SeqModel<S>& model, int max_steps = kMaxExpansionLen) {
    const auto query_tokens = tokenize(query);
    if (query_tokens.empty()) throw data_error("expand: query has no tokens");
    const auto src_ids = encode_ids(query_tokens, model.vocab);

    Tape<S> t;
    auto vals = Seq2SeqVals<S>::bind(t, model.params);
    auto inputs = t.embed_rows(vals.embedding, src_ids);
    auto enc = encode_on_tape(t, inputs, vals.encoder);
    auto state = init_decoder_state(t, vals, enc.final_fwd, enc.final_bwd);
    auto c_prev = t.constant(Matrix<S>::zeros(1, 2 * model.params.hidden));

    DecodeResult out;
    std::vector<std::vector<double>> alpha_rows;
    int y_prev = Vocabulary::kBos;
    for (int step = 0; step < max_steps + 1; ++step) {
        auto g = decode_step(t, y_prev, state, c_prev, vals, enc.annotations);
        const Matrix<S>& logits = t.value(g.logits);
        int best = 0;
        for (int v = 1; v < logits.cols; ++v)
            if (logits.at(0, v) > logits.at(0, best)) best = v;
        // stable softmax probability of the chosen token
        double mx = static_cast<double>(logits.at(0, 0));
        for (int v = 1; v < logits.cols; ++v) mx = std::max(mx, static_cast<double>(logits.at(0, v)));
        double z = 0.0;
        for (int v = 0; v < logits.cols; ++v) z += std::exp(static_cast<double>(logits.at(0, v)) - mx);
        out.step_probs.push_back(std::exp(static_cast<double>(logits.at(0, best)) - mx) / z);

        const Matrix<S>& alpha = t.value(g.alpha);
        std::vector<double> row(alpha.cols);
        for (int c = 0; c < alpha.cols; ++c) row[c] = static_cast<double>(alpha.at(0, c));
        alpha_rows.push_back(std::move(row));

        if (best == Vocabulary::kEos) break;
        out.generated.push_back(model.vocab.token(best));
        if (static_cast<int>(out.generated.size()) == max_steps) break;
        state = g.state;
        c_prev = g.context;
        y_prev = best;
    }

    out.attention = Matrix<double>(static_cast<int>(alpha_rows.size()), static_cast<int>(src_ids.size()));
    for (std::size_t r = 0; r < alpha_rows.size(); ++r)
        for (std::size_t c = 0; c < alpha_rows[r].size(); ++c)
            out.attention.at(static_cast<int>(r), static_cast<int>(c)) = alpha_rows[r][c];

    std::unordered_set<std::string> forbidden(query_tokens.begin(), query_tokens.end());
    for (const char* s : Vocabulary::specials()) forbidden.insert(s);
    std::unordered_set<std::string> seen;
    for (const auto& tok : out.generated) {
        if (forbidden.count(tok) || seen.count(tok)) continue;
        seen.insert(tok);
        out.expansion.push_back(tok);
    }
    return out;
}

// Same architecture at another precision, parameter values cast over.
template <typename To, typename From>
Seq2SeqParams<To> cast_params(Seq2SeqParams<From>& src) {
    Seq2SeqParams<To> dst = Seq2SeqParams<To>::random(src.vocab_size(), src.emb_dim, src.hidden, src.attn,
                                                      src.encoder.num_layers(), 0);
    auto sp = src.parameters();
    auto dp = dst.parameters();
    for (std::size_t i = 0; i < sp.size(); ++i)
        for (std::size_t j = 0; j < sp[i]->value.data.size(); ++j)
            dp[i]->value.data[j] = static_cast<To>(sp[i]->value.data[j]);
    return dst;
}

// Mean teacher-forced cross entropy over one example, forward only.
template <typename S>
S teacher_forced_loss(Seq2SeqParams<S>& params, std::span<const int> src, std::span<const int> tgt) {
    Tape<S> t;
    auto vals = Seq2SeqVals<S>::bind(t, params);
    auto g = teacher_forced_graph(t, vals, src, tgt);
    return t.value(g.loss_mean).at(0, 0);
}

// Full-model gradient check on one (src, tgt) pair: analytic gradients at
// precision S against extended-precision central differences.
template <typename S>
double seq2seq_grad_check(Seq2SeqParams<S>& params, std::span<const int> src, std::span<const int> tgt,
                          double eps = 1e-5) {
    auto plist = params.parameters();
    std::function<double()> loss_fn = [&]() {
        Tape<S> t;
        auto vals = Seq2SeqVals<S>::bind(t, params);
        auto g = teacher_forced_graph(t, vals, src, tgt);
        t.backward(g.loss_mean);
        return static_cast<double>(t.value(g.loss_mean).at(0, 0));
    };
    std::function<long double()> value_fn = [&]() -> long double {
        auto mirror = cast_params<long double>(params);
        return teacher_forced_loss<long double>(mirror, src, tgt);
    };
    return grad_check<S>(loss_fn, value_fn, plist, eps);
}

// ------------------------- checkpoint binding -------------------------

template <typename S>
std::vector<NamedTensor<S>> named_tensors(Seq2SeqParams<S>& p) {
    std::vector<NamedTensor<S>> out;
    for (auto* param : p.parameters()) out.push_back({param->name, &param->value});
    return out;
}

template <typename S>
void save_seq2seq(const std::filesystem::path& path, Seq2SeqModel<S>& model) {
    nlohmann::json meta{{"kind", "seq2seq"},
                        {"emb_dim", model.params.emb_dim},
                        {"hidden", model.params.hidden},
                        {"attn", model.params.attn},
                        {"layers", model.params.encoder.num_layers()},
                        {"vocab", std::vector<std::string>(model.vocab.tokens().begin() + Vocabulary::kNumSpecials,
                                                           model.vocab.tokens().end())}};
    save_checkpoint<S>(path, meta, named_tensors(model.params));
}

template <typename S>
Seq2SeqModel<S> load_seq2seq(const std::filesystem::path& path) {
    auto ck = load_checkpoint<S>(path);
    if (ck.meta.value("kind", "") != "seq2seq")
        throw checkpoint_manifest_error("checkpoint: expected kind 'seq2seq' in " + path.string());
    Seq2SeqModel<S> model;
    model.vocab = Vocabulary::from_tokens(ck.meta["vocab"].template get<std::vector<std::string>>());
    model.params = Seq2SeqParams<S>::random(model.vocab.size(), ck.meta["emb_dim"], ck.meta["hidden"],
                                            ck.meta["attn"], ck.meta["layers"], 0);
    for (auto* param : model.params.parameters()) {
        const Matrix<S>& stored = ck.require(param->name);
        if (!stored.same_shape(param->value))
            throw checkpoint_manifest_error("checkpoint: tensor '" + param->name + "' has shape " +
                                            stored.shape_str() + ", model expects " + param->value.shape_str());
        param->value = stored;
    }
    return model;
}

}  // namespace qx
