// qxpand: query expansion toolkit
//
// Subcommands cover the full pipeline: building expansion training data
// from labeled sentence pairs, training the seq2seq expander, expanding
// queries, and measuring the effect on retrieval, answer preselection
// and text classification. Every run is deterministic given its --seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qxpand/classify.hpp"
#include "qxpand/dataset.hpp"
#include "qxpand/gradcheck.hpp"
#include "qxpand/index.hpp"
#include "qxpand/keywords.hpp"
#include "qxpand/metrics.hpp"
#include "qxpand/preselect.hpp"
#include "qxpand/seq2seq.hpp"
#include "qxpand/stats.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::optional<std::uint64_t> parse_random_spec(const std::string& spec) {
    if (spec.rfind("random:", 0) != 0) return std::nullopt;
    return std::stoull(spec.substr(7));
}

// Keyword function from either an encoder checkpoint or "random:SEED"
// (fresh random weights over a vocabulary built from fallback_corpus).
qx::KeywordFn make_keyword_fn(const std::string& encoder_spec,
                              const std::vector<std::vector<std::string>>& fallback_corpus, int emb_dim,
                              int hidden, int layers, int max_vocab) {
    if (auto seed = parse_random_spec(encoder_spec)) {
        auto vocab = qx::Vocabulary::build(fallback_corpus, 1, max_vocab);
        auto enc = std::make_shared<qx::SentenceEncoder<double>>(
            qx::SentenceEncoder<double>::random(std::move(vocab), emb_dim, hidden, layers, *seed));
        return [enc](const std::vector<std::string>& tokens) {
            return enc->keywords(tokens, qx::StopwordSet::english(), -1);
        };
    }
    auto manifest = qx::peek_checkpoint(encoder_spec);
    const std::string dtype = manifest["tensors"].empty() ? "f64" : manifest["tensors"][0].value("dtype", "f64");
    if (dtype == "f32") {
        auto enc = std::make_shared<qx::SentenceEncoder<float>>(qx::load_encoder<float>(encoder_spec));
        return [enc](const std::vector<std::string>& tokens) {
            return enc->keywords(tokens, qx::StopwordSet::english(), -1);
        };
    }
    auto enc = std::make_shared<qx::SentenceEncoder<double>>(qx::load_encoder<double>(encoder_spec));
    return [enc](const std::vector<std::string>& tokens) {
        return enc->keywords(tokens, qx::StopwordSet::english(), -1);
    };
}

qx::ExpandFn make_expander(const std::string& ckpt_path) {
    auto manifest = qx::peek_checkpoint(ckpt_path);
    const std::string dtype = manifest["tensors"].empty() ? "f64" : manifest["tensors"][0].value("dtype", "f64");
    if (dtype == "f32") {
        auto model = std::make_shared<qx::Seq2SeqModel<float>>(qx::load_seq2seq<float>(ckpt_path));
        return [model](const std::string& text) -> std::vector<std::string> {
            if (qx::tokenize(text).empty()) return {};
            return qx::expand(text, *model).expansion;
        };
    }
    auto model = std::make_shared<qx::Seq2SeqModel<double>>(qx::load_seq2seq<double>(ckpt_path));
    return [model](const std::string& text) -> std::vector<std::string> {
        if (qx::tokenize(text).empty()) return {};
        return qx::expand(text, *model).expansion;
    };
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw qx::io_error("cannot write " + path);
    out << content;
}

// ----------------------------- subcommands -----------------------------

struct BuildDatasetArgs {
    std::string pairs, format = "jsonl", encoder, out, stats;
    int min_len = qx::kMinExpansionLen, max_len = qx::kMaxExpansionLen;
    int emb_dim = 16, hidden = 64, layers = 2, max_vocab = 50000;
};

int run_build_dataset(const BuildDatasetArgs& a) {
    auto format = qx::pair_format_from_string(a.format);
    if (!format) throw qx::data_error("build-dataset: unknown format '" + a.format + "'");
    auto ingest = qx::ingest(a.pairs, *format);
    if (ingest.rejected)
        std::cerr << "warning: rejected " << ingest.rejected << " malformed or unknown-relation records\n";

    std::vector<std::vector<std::string>> corpus;
    for (const auto& p : ingest.pairs) {
        corpus.push_back(qx::tokenize(p.text_a));
        corpus.push_back(qx::tokenize(p.text_b));
    }
    auto keywords = make_keyword_fn(a.encoder, corpus, a.emb_dim, a.hidden, a.layers, a.max_vocab);
    auto built = qx::build_examples(ingest.pairs, keywords, a.min_len, a.max_len);
    qx::write_examples(built.examples, a.out);
    json stats = qx::stats_to_json(built.stats);
    stats["rejected_records"] = ingest.rejected;
    if (!a.stats.empty()) write_text_file(a.stats, stats.dump(1) + "\n");
    std::cout << stats.dump() << '\n';
    return 0;
}

struct KeywordsArgs {
    std::string encoder, text;
    int max_k = 10;
    int emb_dim = 16, hidden = 64, layers = 2;
};

int run_keywords(const KeywordsArgs& a) {
    auto tokens = qx::tokenize(a.text);
    auto keywords = make_keyword_fn(a.encoder, {tokens}, a.emb_dim, a.hidden, a.layers, 50000);
    auto ranked = keywords(tokens);
    if (a.max_k >= 0 && static_cast<int>(ranked.size()) > a.max_k) ranked.resize(a.max_k);
    std::cout << qx::join_tokens(ranked) << '\n';
    return 0;
}

struct TrainArgs {
    std::string data, embeddings, out, log;
    qx::TrainConfig cfg;
    int hidden = 500, layers = 2, attn = -1, emb_dim = 300, max_vocab = 50000;
    std::string precision = "test64";
};

template <typename S>
int run_train_typed(const TrainArgs& a) {
    auto dataset = qx::read_examples(a.data);
    if (dataset.empty()) throw qx::data_error("train: no examples in " + a.data);
    std::vector<std::vector<std::string>> corpus;
    for (const auto& ex : dataset) {
        corpus.push_back(ex.source);
        corpus.push_back(ex.expansion);
    }
    auto vocab = qx::Vocabulary::build(corpus, 1, a.max_vocab);

    qx::EmbeddingTable<S> emb;
    if (auto seed = parse_random_spec(a.embeddings))
        emb = qx::random_embeddings<S>(vocab, a.emb_dim, *seed);
    else
        emb = qx::load_embeddings<S>(a.embeddings, vocab, a.cfg.seed);

    qx::Seq2SeqModel<S> model;
    model.vocab = std::move(vocab);
    const int attn = a.attn > 0 ? a.attn : a.hidden;
    model.params = qx::Seq2SeqParams<S>::build(emb, a.hidden, attn, a.layers, a.cfg.seed);

    auto log = qx::train(dataset, a.cfg, model);
    if (!a.log.empty()) qx::write_train_log(a.log, log);
    qx::save_seq2seq(a.out, model);
    json summary{{"schema_version", 1},
                 {"metric", "train"},
                 {"epochs", static_cast<int>(log.size())},
                 {"final_loss", log.back().loss},
                 {"final_token_accuracy", log.back().token_accuracy}};
    std::cout << summary.dump() << '\n';
    return 0;
}

int run_train(const TrainArgs& a) {
    if (a.precision == "fast32") return run_train_typed<float>(a);
    if (a.precision == "test64") return run_train_typed<double>(a);
    throw qx::data_error("train: unknown precision '" + a.precision + "'");
}

struct ExpandArgs {
    std::string model, query, queries;
    int max_steps = qx::kMaxExpansionLen;
};

int run_expand(const ExpandArgs& a) {
    auto expander = make_expander(a.model);
    auto emit = [&](const std::string& q) { std::cout << qx::join_tokens(expander(q)) << '\n'; };
    if (!a.queries.empty()) {
        std::ifstream in(a.queries);
        if (!in) throw qx::io_error("cannot read queries file " + a.queries);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) emit(line);
    } else {
        emit(a.query);
    }
    return 0;
}

struct IndexArgs {
    std::string docs, out;
};

int run_index(const IndexArgs& a) {
    auto docs = qx::load_documents(a.docs);
    auto idx = qx::InvertedIndex::build(docs);
    idx.save(a.out);
    json summary{{"schema_version", 1}, {"metric", "index"}, {"n_docs", idx.n_docs()}, {"avgdl", idx.avgdl()}};
    std::cout << summary.dump() << '\n';
    return 0;
}

struct EvalIrArgs {
    std::string index, queries, qrels, scheme = "bm25", expander, run_out;
    int k = 1000;
};

int run_eval_ir(const EvalIrArgs& a) {
    auto scheme = qx::scheme_from_string(a.scheme);
    if (!scheme) throw qx::data_error("eval-ir: unknown scheme '" + a.scheme + "'");
    auto idx = qx::InvertedIndex::load(a.index);
    auto queries = qx::load_queries(a.queries);
    auto qrels = qx::load_qrels(a.qrels);

    auto run_condition = [&](const qx::ExpandFn* expander) {
        std::vector<qx::RankedList> runs;
        for (const auto& [qid, text] : queries) {
            auto tokens = qx::tokenize(text);
            if (expander && *expander)
                for (auto& term : (*expander)(text)) tokens.push_back(std::move(term));
            auto ranked = qx::search(tokens, idx, *scheme, a.k);
            ranked.query_id = qid;
            runs.push_back(std::move(ranked));
        }
        return runs;
    };

    auto base_runs = run_condition(nullptr);
    auto base = qx::mean_average_precision(base_runs, qrels);
    json out{{"schema_version", 1}, {"metric", "map"},      {"scheme", a.scheme},
             {"k", a.k},            {"n", base.scored},     {"skipped", base.skipped},
             {"value", base.map}};
    if (!a.run_out.empty()) qx::write_run(a.run_out + ".noqe.run", base_runs, "qxpand-noqe");

    if (!a.expander.empty()) {
        auto expander = make_expander(a.expander);
        auto qe_runs = run_condition(&expander);
        auto qe = qx::mean_average_precision(qe_runs, qrels);
        if (!a.run_out.empty()) qx::write_run(a.run_out + ".qe.run", qe_runs, "qxpand-qe");
        out["value_qe"] = qe.map;
        std::vector<double> base_ap, qe_ap;
        for (std::size_t i = 0; i < base.per_query.size(); ++i) {
            base_ap.push_back(base.per_query[i].second);
            qe_ap.push_back(qe.per_query[i].second);
        }
        auto tt = qx::paired_ttest(qe_ap, base_ap);
        out["t"] = tt.t;
        out["p_value"] = tt.p;
    }
    std::cout << out.dump() << '\n';
    return 0;
}

struct EvalPreselectArgs {
    std::string sets, expander, denom = "min-k";
    int k = 10;
};

int run_eval_preselect(const EvalPreselectArgs& a) {
    auto sets = qx::load_preselection_sets(a.sets);
    qx::PreselectDenominator denom;
    if (a.denom == "min-k") denom = qx::PreselectDenominator::min_k;
    else if (a.denom == "relevant") denom = qx::PreselectDenominator::relevant;
    else throw qx::data_error("eval-preselect: unknown denominator '" + a.denom + "'");

    auto base = qx::preselect(sets, nullptr, a.k, denom);
    json out{{"schema_version", 1}, {"metric", "preselection"}, {"k", a.k},
             {"n", base.n},         {"accuracy", base.accuracy}, {"coverage", base.coverage}};
    if (!a.expander.empty()) {
        auto expander = make_expander(a.expander);
        auto qe = qx::preselect(sets, &expander, a.k, denom);
        out["accuracy_qe"] = qe.accuracy;
        out["coverage_qe"] = qe.coverage;
        out["p_value_accuracy"] = qx::paired_ttest(qe.per_query_accuracy, base.per_query_accuracy).p;
        out["p_value_coverage"] = qx::paired_ttest(qe.per_query_coverage, base.per_query_coverage).p;
    }
    std::cout << out.dump() << '\n';
    return 0;
}

struct EvalClassifyArgs {
    std::string train, test, expander;
    int epochs = 20;
    double lr = 0.1;
    std::uint64_t seed = 1;
};

int run_eval_classify(const EvalClassifyArgs& a) {
    auto [train_labels, train_texts] = qx::load_labeled_tsv(a.train);
    auto [test_labels, test_texts] = qx::load_labeled_tsv(a.test);
    auto cls = qx::train_classifier(train_texts, train_labels, a.epochs, a.lr, a.seed);

    std::vector<double> base_items;
    const double base = qx::class_accuracy(cls, test_texts, test_labels, nullptr, &base_items);
    json out{{"schema_version", 1},
             {"metric", "classification_accuracy"},
             {"n_train", train_texts.size()},
             {"n_test", test_texts.size()},
             {"classes", cls.classes().size()},
             {"value", base}};
    if (!a.expander.empty()) {
        auto expander = make_expander(a.expander);
        std::vector<double> qe_items;
        out["value_qe"] = qx::class_accuracy(cls, test_texts, test_labels, &expander, &qe_items);
        out["p_value"] = qx::paired_ttest(qe_items, base_items).p;
    }
    std::cout << out.dump() << '\n';
    return 0;
}

struct GradcheckArgs {
    int hidden = 8, vocab = 24, attn = -1, emb_dim = 8, layers = 2, src_len = 4, tgt_len = 3;
    double eps = 1e-5;
    std::uint64_t seed = 12345;
};

int run_gradcheck(const GradcheckArgs& a) {
    constexpr double threshold = 1e-4;
    const int attn = a.attn > 0 ? a.attn : a.hidden;
    auto params = qx::Seq2SeqParams<double>::random(a.vocab, a.emb_dim, a.hidden, attn, a.layers, a.seed);
    qx::SeededRng rng(a.seed ^ 0x51AB0CF319D4E887ULL);
    auto draw_ids = [&](int n) {
        std::vector<int> ids(n);
        for (auto& id : ids)
            id = qx::Vocabulary::kNumSpecials +
                 static_cast<int>(rng.uniform_index(a.vocab - qx::Vocabulary::kNumSpecials));
        return ids;
    };
    auto src = draw_ids(a.src_len);
    auto tgt = draw_ids(a.tgt_len);
    const double err = qx::seq2seq_grad_check<double>(params, src, tgt, a.eps);
    json out{{"schema_version", 1},
             {"metric", "grad_check_max_rel_error"},
             {"value", err},
             {"threshold", threshold}};
    std::cout << out.dump() << '\n';
    return err < threshold ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qxpand: seq2seq query expansion toolkit"};
    app.require_subcommand(1);

    BuildDatasetArgs bd;
    auto* cmd_bd = app.add_subcommand("build-dataset", "turn labeled sentence pairs into expansion examples");
    cmd_bd->add_option("--pairs", bd.pairs, "pair file")->required();
    cmd_bd->add_option("--format", bd.format, "jsonl|tsv");
    cmd_bd->add_option("--encoder", bd.encoder, "encoder checkpoint or random:SEED")->required();
    cmd_bd->add_option("--out", bd.out, "output examples TSV")->required();
    cmd_bd->add_option("--stats", bd.stats, "output stats JSON");
    cmd_bd->add_option("--min-len", bd.min_len, "minimum expansion length");
    cmd_bd->add_option("--max-len", bd.max_len, "maximum expansion length");
    cmd_bd->add_option("--emb-dim", bd.emb_dim, "random encoder embedding dim");
    cmd_bd->add_option("--hidden", bd.hidden, "random encoder hidden size");
    cmd_bd->add_option("--layers", bd.layers, "random encoder layers");
    cmd_bd->add_option("--max-vocab", bd.max_vocab, "vocabulary cap for random encoders");

    KeywordsArgs kw;
    auto* cmd_kw = app.add_subcommand("keywords", "extract ranked keywords from a sentence");
    cmd_kw->add_option("--encoder", kw.encoder, "encoder checkpoint or random:SEED")->required();
    cmd_kw->add_option("--text", kw.text, "sentence")->required();
    cmd_kw->add_option("--max-k", kw.max_k, "maximum keywords");
    cmd_kw->add_option("--emb-dim", kw.emb_dim, "random encoder embedding dim");
    cmd_kw->add_option("--hidden", kw.hidden, "random encoder hidden size");
    cmd_kw->add_option("--layers", kw.layers, "random encoder layers");

    TrainArgs tr;
    auto* cmd_tr = app.add_subcommand("train", "train the expansion model");
    cmd_tr->add_option("--data", tr.data, "examples TSV")->required();
    cmd_tr->add_option("--embeddings", tr.embeddings, "embedding file or random:SEED")->required();
    cmd_tr->add_option("--out", tr.out, "output checkpoint")->required();
    cmd_tr->add_option("--log", tr.log, "per-epoch CSV log");
    cmd_tr->add_option("--batch", tr.cfg.batch_size, "batch size");
    cmd_tr->add_option("--lr", tr.cfg.lr0, "initial learning rate");
    cmd_tr->add_option("--decay", tr.cfg.decay, "per-epoch learning-rate decay");
    cmd_tr->add_option("--dropout", tr.cfg.dropout, "dropout between LSTM layers");
    cmd_tr->add_option("--epochs", tr.cfg.epochs, "training epochs");
    cmd_tr->add_option("--clip", tr.cfg.clip_norm, "global gradient-norm clip");
    cmd_tr->add_option("--seed", tr.cfg.seed, "seed");
    cmd_tr->add_option("--hidden", tr.hidden, "hidden units per LSTM layer");
    cmd_tr->add_option("--layers", tr.layers, "encoder/decoder layers");
    cmd_tr->add_option("--attn", tr.attn, "attention size (default: hidden)");
    cmd_tr->add_option("--emb-dim", tr.emb_dim, "embedding dim for random embeddings");
    cmd_tr->add_option("--max-vocab", tr.max_vocab, "vocabulary cap");
    cmd_tr->add_option("--precision", tr.precision, "test64|fast32");

    ExpandArgs ex;
    auto* cmd_ex = app.add_subcommand("expand", "expand queries with a trained model");
    cmd_ex->add_option("--model", ex.model, "seq2seq checkpoint")->required();
    auto* opt_q = cmd_ex->add_option("--query", ex.query, "single query");
    auto* opt_qs = cmd_ex->add_option("--queries", ex.queries, "file with one query per line");
    opt_q->excludes(opt_qs);
    cmd_ex->add_option("--max-steps", ex.max_steps, "maximum generated tokens");

    IndexArgs ix;
    auto* cmd_ix = app.add_subcommand("index", "build an inverted index from JSONL documents");
    cmd_ix->add_option("--docs", ix.docs, "documents JSONL")->required();
    cmd_ix->add_option("--out", ix.out, "output index file")->required();

    EvalIrArgs ir;
    auto* cmd_ir = app.add_subcommand("eval-ir", "ranked retrieval evaluation (MAP)");
    cmd_ir->add_option("--index", ir.index, "index file")->required();
    cmd_ir->add_option("--queries", ir.queries, "TSV qid<TAB>text")->required();
    cmd_ir->add_option("--qrels", ir.qrels, "TREC qrels")->required();
    cmd_ir->add_option("--scheme", ir.scheme, "tfidf|bm25");
    cmd_ir->add_option("--expander", ir.expander, "seq2seq checkpoint for the QE condition");
    cmd_ir->add_option("--k", ir.k, "retrieval depth");
    cmd_ir->add_option("--run-out", ir.run_out, "prefix for TREC run files");

    EvalPreselectArgs ps;
    auto* cmd_ps = app.add_subcommand("eval-preselect", "answer preselection accuracy/coverage");
    cmd_ps->add_option("--sets", ps.sets, "preselection JSONL")->required();
    cmd_ps->add_option("--expander", ps.expander, "seq2seq checkpoint for the QE condition");
    cmd_ps->add_option("--k", ps.k, "hypotheses per question");
    cmd_ps->add_option("--denom", ps.denom, "per-query accuracy denominator: min-k|relevant");

    EvalClassifyArgs ec;
    auto* cmd_ec = app.add_subcommand("eval-classify", "headline classification accuracy");
    cmd_ec->add_option("--train", ec.train, "training TSV label<TAB>text")->required();
    cmd_ec->add_option("--test", ec.test, "test TSV label<TAB>text")->required();
    cmd_ec->add_option("--expander", ec.expander, "seq2seq checkpoint for the QE condition");
    cmd_ec->add_option("--epochs", ec.epochs, "classifier epochs");
    cmd_ec->add_option("--lr", ec.lr, "classifier learning rate");
    cmd_ec->add_option("--seed", ec.seed, "classifier shuffle seed");

    GradcheckArgs gc;
    auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference check of the full model");
    cmd_gc->add_option("--hidden", gc.hidden, "hidden units");
    cmd_gc->add_option("--vocab", gc.vocab, "vocabulary size");
    cmd_gc->add_option("--attn", gc.attn, "attention size (default: hidden)");
    cmd_gc->add_option("--emb-dim", gc.emb_dim, "embedding dim");
    cmd_gc->add_option("--layers", gc.layers, "layers");
    cmd_gc->add_option("--src-len", gc.src_len, "source length");
    cmd_gc->add_option("--tgt-len", gc.tgt_len, "target length");
    cmd_gc->add_option("--eps", gc.eps, "finite-difference step");
    cmd_gc->add_option("--seed", gc.seed, "seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (cmd_bd->parsed()) return run_build_dataset(bd);
        if (cmd_kw->parsed()) return run_keywords(kw);
        if (cmd_tr->parsed()) return run_train(tr);
        if (cmd_ex->parsed()) return run_expand(ex);
        if (cmd_ix->parsed()) return run_index(ix);
        if (cmd_ir->parsed()) return run_eval_ir(ir);
        if (cmd_ps->parsed()) return run_eval_preselect(ps);
        if (cmd_ec->parsed()) return run_eval_classify(ec);
        if (cmd_gc->parsed()) return run_gradcheck(gc);
    } catch (const qx::numeric_error& e) {
        std::cerr << "numeric fault: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const qx::error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
