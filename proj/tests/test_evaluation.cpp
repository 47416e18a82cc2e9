#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "treevae/evaluation.hpp"

using namespace treevae;
using namespace treevae::eval;
using treelang::AstTree;

namespace {

using Toks = std::vector<std::string>;

std::vector<corpus::CorpusRecord> records_from(const std::vector<std::string>& sources) {
    std::vector<corpus::CorpusRecord> recs;
    for (std::size_t i = 0; i < sources.size(); ++i)
        recs.push_back(corpus::record_from_source("r" + std::to_string(i), sources[i]));
    return recs;
}

std::vector<std::string> memo_sources() {
    return {
        "int main ( ) { return 0 ; }",
        "int main ( ) { return 1 ; }",
        "int main ( ) { int x ; x = 2 ; return x ; }",
        "int main ( ) { print ( 1 ) ; return 0 ; }",
    };
}

nn::EncoderConfig small_enc() {
    nn::EncoderConfig ec;
    ec.embed_dim = 8;
    ec.hidden = 16;
    ec.latent = 4;
    ec.layers = 1;
    ec.dropout = 0.1;
    return ec;
}

nn::DecoderConfig small_dec() {
    nn::DecoderConfig dc;
    dc.embed_dim = 8;
    dc.hidden = 16;
    dc.latent = 4;
    dc.literal_head = 2;
    dc.max_nodes = 64;
    return dc;
}

AstTree gold(const std::string& src) {
    return treelang::anonymize_identifiers(treelang::parse_source(src));
}

void zero_params(nn::ParamRegistry& reg) {
    for (const auto& p : reg.all()) std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
}

}  // namespace

TEST_SUITE("evaluation bleu") {
    TEST_CASE("hand-scored n-gram oracle") {
        Toks cand = {"a", "b", "c", "d"};
        Toks ref = {"a", "b", "c", "e"};
        // precisions 3/4, 2/3, 1/2, then a smoothed zero for the 4-gram
        CHECK(bleu(cand, ref, 1) == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(bleu(cand, ref, 2) == doctest::Approx(0.7071067811865476).epsilon(1e-12));
        CHECK(bleu(cand, ref, 3) == doctest::Approx(0.6299605249474366).epsilon(1e-12));
        CHECK(bleu(cand, ref, 4) == doctest::Approx(0.0039763536438352535).epsilon(1e-9));
    }

    TEST_CASE("equal streams score exactly one") {
        Toks t = {"int", "main", "(", ")"};
        for (int n = 1; n <= 4; ++n) CHECK(bleu(t, t, n) == 1.0);
    }

    TEST_CASE("disjoint streams land on the smoothing floor") {
        CHECK(bleu({"x", "y"}, {"a", "b"}, 1) == doctest::Approx(1e-9).epsilon(1e-12));
        CHECK(bleu({"x", "y"}, {"a", "b"}, 2) == doctest::Approx(1e-9).epsilon(1e-12));
    }

    TEST_CASE("brevity penalty for short candidates") {
        // perfect unigrams but half the reference length: exp(1 - 4/2)
        CHECK(bleu({"a", "b"}, {"a", "b", "c", "d"}, 1) ==
              doctest::Approx(0.36787944117144233).epsilon(1e-12));
        CHECK(bleu({"a", "a"}, {"a", "a", "a"}, 1) ==
              doctest::Approx(0.6065306597126334).epsilon(1e-12));
    }

    TEST_CASE("counts are clipped to the reference") {
        CHECK(bleu({"a", "a", "a"}, {"a"}, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }

    TEST_CASE("orders beyond the candidate length are smoothed") {
        // p1 = 1, no bigrams at all, BP = exp(1 - 2)
        CHECK(bleu({"a"}, {"a", "b"}, 2) ==
              doctest::Approx(1.1633369384516796e-05).epsilon(1e-9));
    }

    TEST_CASE("edge inputs") {
        CHECK(bleu({}, {"a"}, 4) == 0.0);
        CHECK_THROWS_AS((void)bleu({"a"}, {}, 1), EmptyReference);
        CHECK_THROWS_AS((void)bleu({"a"}, {"a"}, 0), OutOfRange);
        CHECK_THROWS_AS((void)bleu({"a"}, {"a"}, 5), OutOfRange);
    }

    TEST_CASE("token stream splitting") {
        CHECK(split_tokens("int main") == Toks{"int", "main"});
        CHECK(split_tokens("x") == Toks{"x"});
        CHECK(split_tokens("").empty());
    }

    TEST_CASE("error taxonomy histograms failing reports") {
        auto r1 = treelang::validate(treelang::parse_source("int main ( ) { return x ; }"));
        auto r2 = treelang::validate(
            treelang::parse_source("int main ( ) { int x ; int x ; return 0 ; }"));
        auto ok = treelang::validate(treelang::parse_source("int main ( ) { return 0 ; }"));
        REQUIRE(!r1.ok);
        REQUIRE(!r2.ok);
        REQUIRE(ok.ok);
        REQUIRE(r1.errors.size() == 1);
        REQUIRE(r2.errors.size() == 1);

        auto hist = error_taxonomy({r1, r2, ok, r1});
        CHECK(hist.size() == 2);
        CHECK(hist.at("UndeclaredReference") == 2);
        CHECK(hist.at("Redeclaration") == 1);
        CHECK(error_taxonomy({ok}).empty());
    }
}

TEST_SUITE("evaluation reconstruction") {
    TEST_CASE("memorized tree model scores perfect reconstruction") {
        auto sources = memo_sources();
        auto recs = records_from(sources);
        train::TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 2);

        std::vector<AstTree> trees;
        for (const auto& s : sources) trees.push_back(gold(s));
        REQUIRE(train::overfit_trees(m, trees, 500, 5e-3, 2, 0.05) < 0.05);

        EvalOptions opt;
        EvalReport rep = evaluate_tree(m, recs, opt);
        CHECK(rep.model_kind == "tree2tree");
        CHECK(rep.count == 4);
        for (int n = 0; n < 4; ++n) CHECK(rep.raw[n] == 1.0);
        CHECK(rep.compile_rate == 1.0);
        CHECK(!rep.has_correction);
        REQUIRE(rep.buckets.size() == 1);
        CHECK(rep.buckets[0].bucket == "small");
        CHECK(rep.buckets[0].count == 4);
        CHECK(rep.buckets[0].raw[0] == 1.0);
        CHECK(rep.buckets[0].compile_rate == 1.0);
    }

    TEST_CASE("correction on a constant decoder cancels the raw score exactly") {
        auto recs = records_from(memo_sources());
        train::TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 7);
        zero_params(m.reg);

        EvalOptions opt;
        opt.corrected = true;
        opt.seed = 11;
        EvalReport rep = evaluate_tree(m, recs, opt);
        CHECK(rep.has_correction);
        for (int n = 0; n < 4; ++n) {
            CHECK(rep.raw[n] == rep.correction[n]);
            CHECK(rep.corrected[n] == 0.0);
        }
        for (const auto& b : rep.buckets) {
            for (int n = 0; n < 4; ++n) {
                CHECK(b.raw[n] == b.correction[n]);
                CHECK(b.corrected[n] == 0.0);
            }
        }
    }

    TEST_CASE("overall scores are count-weighted bucket means") {
        std::string medium = "int main ( ) { ";
        for (int i = 0; i < 60; ++i) medium += "print ( 1 ) ; ";
        medium += "return 0 ; }";
        auto recs = records_from(
            {"int main ( ) { return 0 ; }", "int main ( ) { return 1 ; }", medium});
        REQUIRE(recs[2].token_count > 250);
        REQUIRE(recs[2].token_count <= 500);

        train::TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 3);
        EvalOptions opt;
        EvalReport rep = evaluate_tree(m, recs, opt);
        REQUIRE(rep.buckets.size() == 2);
        CHECK(rep.buckets[0].bucket == "small");
        CHECK(rep.buckets[0].count == 2);
        CHECK(rep.buckets[1].bucket == "medium");
        CHECK(rep.buckets[1].count == 1);
        CHECK(rep.count == 3);
        for (int n = 0; n < 4; ++n) {
            CHECK(rep.raw[n] >= 0.0);
            CHECK(rep.raw[n] <= 1.0);
            double weighted =
                (2.0 * rep.buckets[0].raw[n] + 1.0 * rep.buckets[1].raw[n]) / 3.0;
            CHECK(rep.raw[n] == doctest::Approx(weighted).epsilon(1e-12));
        }
        double weighted_cr = (2.0 * rep.buckets[0].compile_rate +
                              1.0 * rep.buckets[1].compile_rate) / 3.0;
        CHECK(rep.compile_rate == doctest::Approx(weighted_cr).epsilon(1e-12));
    }

    TEST_CASE("reports are byte reproducible") {
        auto recs = records_from(memo_sources());
        auto run_once = [&recs]() {
            train::TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 5);
            EvalOptions opt;
            opt.corrected = true;
            opt.n_random = 3;
            opt.seed = 9;
            EvalReport rep = evaluate_tree(m, recs, opt);
            return rep.to_text() + "\n" + rep.to_json().dump();
        };
        CHECK(run_once() == run_once());
    }

    TEST_CASE("memorized sequence model scores perfect reconstruction") {
        // single program: a multi-program fit would have to beat the usual
        // collapse of an unregularized sequence VAE, which is not what this
        // pins down. The target is the scoring path itself: sentinel
        // stripping, token joining and validation.
        auto recs = records_from({"int main ( ) { return 0 ; }"});
        nn::BaselineConfig cfg;
        cfg.embed_dim = 8;
        cfg.hidden = 16;
        cfg.latent = 4;
        cfg.adaptive_head = 64;
        cfg.max_len = 32;
        train::SeqModel m(nn::build_seq_vocab(recs), cfg, 11);

        auto ids = nn::to_ids(m.vocab, nn::sequence_tokens(recs[0].source));
        nn::Adam adam(5e-3);
        double loss_value = 1e30;
        for (int step = 0; step < 1000 && loss_value > 0.02; ++step) {
            nn::Graph g;
            m.reg.zero_grad();
            auto post = m.vae->encode_sequence(g, ids, false, nullptr);
            nn::Graph::Ref loss = m.vae->reconstruction_nll(g, ids, post.z, false, nullptr);
            loss_value = g.scalar(loss);
            g.backward(loss);
            adam.step(m.reg);
        }
        REQUIRE(loss_value < 0.05);

        EvalOptions opt;
        EvalReport rep = evaluate_seq(m, recs, opt);
        CHECK(rep.model_kind == "seq2seq");
        CHECK(rep.count == 1);
        for (int n = 0; n < 4; ++n) CHECK(rep.raw[n] == 1.0);
        CHECK(rep.compile_rate == 1.0);
        REQUIRE(rep.buckets.size() == 1);
        CHECK(rep.buckets[0].bucket == "small");
    }

    TEST_CASE("unparseable sequence output still scores on its raw tokens") {
        auto recs = records_from(memo_sources());
        nn::BaselineConfig cfg;
        cfg.embed_dim = 4;
        cfg.hidden = 5;
        cfg.latent = 3;
        cfg.adaptive_head = 8;
        cfg.max_len = 24;
        train::SeqModel m(nn::build_seq_vocab(recs), cfg, 13);
        zero_params(m.reg);

        // all-zero logits decode to a sentinel stream: never a program, but
        // still a scorable token sequence
        EvalOptions opt;
        EvalReport rep = evaluate_seq(m, recs, opt);
        CHECK(rep.compile_rate == 0.0);
        CHECK(rep.raw[0] >= 0.0);
        CHECK(rep.raw[0] < 1e-6);
    }

    TEST_CASE("bad options are rejected") {
        auto recs = records_from(memo_sources());
        train::TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 1);

        EvalOptions bad;
        bad.sampler.k = 0;
        CHECK_THROWS_AS((void)evaluate_tree(m, recs, bad), ConfigError);

        EvalOptions opt;
        CHECK_THROWS_AS((void)evaluate_tree(m, {}, opt), EmptyInput);
    }
}

TEST_SUITE("evaluation generative") {
    TEST_CASE("tree decodes from the prior are structurally sound and reproducible") {
        auto recs = records_from(memo_sources());
        train::TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 5);

        GenerativeReport rep = generative_tree(m, 25, 7);
        CHECK(rep.model_kind == "tree2tree");
        CHECK(rep.n == 25);
        CHECK(rep.greedy.wellformed_rate == 1.0);
        CHECK(rep.sampled.wellformed_rate == 1.0);
        CHECK(rep.greedy.compile_rate >= 0.0);
        CHECK(rep.greedy.compile_rate <= 1.0);
        CHECK(rep.sampled.compile_rate >= 0.0);
        CHECK(rep.sampled.compile_rate <= 1.0);

        GenerativeReport again = generative_tree(m, 25, 7);
        CHECK(rep.to_json().dump() == again.to_json().dump());
        CHECK(rep.to_text() == again.to_text());
    }

    TEST_CASE("sequence study separates parse failures from validator failures") {
        auto recs = records_from(memo_sources());
        nn::BaselineConfig cfg;
        cfg.embed_dim = 4;
        cfg.hidden = 5;
        cfg.latent = 3;
        cfg.adaptive_head = 8;
        cfg.max_len = 24;
        train::SeqModel m(nn::build_seq_vocab(recs), cfg, 13);
        zero_params(m.reg);

        GenerativeReport rep = generative_seq(m, 10, 3);
        CHECK(rep.model_kind == "seq2seq");
        CHECK(rep.n == 10);
        CHECK(rep.greedy.wellformed_rate == 0.0);
        CHECK(rep.greedy.compile_rate == 0.0);
        CHECK(rep.greedy.errors.empty());
        CHECK(rep.sampled.compile_rate <= rep.sampled.wellformed_rate);
    }

    TEST_CASE("sample count must be positive") {
        auto recs = records_from(memo_sources());
        train::TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 1);
        CHECK_THROWS_AS((void)generative_tree(m, 0, 1), ConfigError);
    }
}

TEST_SUITE("evaluation reports") {
    TEST_CASE("evaluation text layout is pinned") {
        EvalReport rep;
        rep.model_kind = "tree2tree";
        rep.count = 3;
        rep.raw = {0.5, 0.25, 0.125, 0.0625};
        rep.compile_rate = 2.0 / 3.0;
        rep.has_correction = true;
        rep.correction = {0.1, 0.1, 0.2, 0.0625};
        rep.corrected = {0.4, 0.15, 0.0, 0.0};
        BucketScores b;
        b.bucket = "small";
        b.count = 3;
        b.raw = rep.raw;
        b.compile_rate = rep.compile_rate;
        b.correction = rep.correction;
        b.corrected = rep.corrected;
        rep.buckets.push_back(b);

        std::string expected =
            "model: tree2tree\n"
            "test records: 3\n"
            "overall: bleu1 0.5000 bleu2 0.2500 bleu3 0.1250 bleu4 0.0625 compile_rate 0.6667\n"
            "bucket small (n=3): bleu1 0.5000 bleu2 0.2500 bleu3 0.1250 bleu4 0.0625 "
            "compile_rate 0.6667\n"
            "correction: bleu1 0.1000 bleu2 0.1000 bleu3 0.2000 bleu4 0.0625\n"
            "corrected: bleu1 0.4000 bleu2 0.1500 bleu3 0.0000 bleu4 0.0000\n"
            "bucket small corrected: bleu1 0.4000 bleu2 0.1500 bleu3 0.0000 bleu4 0.0000\n";
        CHECK(rep.to_text() == expected);

        auto j = rep.to_json();
        CHECK(j["model_kind"] == "tree2tree");
        CHECK(j["count"] == 3);
        CHECK(j["raw"]["bleu1"] == 0.5);
        CHECK(j["buckets"].size() == 1);
        CHECK(j["buckets"][0]["bucket"] == "small");
        CHECK(j["corrected"]["bleu2"] == 0.15);

        rep.has_correction = false;
        auto plain = rep.to_json();
        CHECK(!plain.contains("correction"));
        CHECK(!plain.contains("corrected"));
    }

    TEST_CASE("generative text layout is pinned") {
        GenerativeReport rep;
        rep.model_kind = "seq2seq";
        rep.n = 10;
        rep.greedy = {0.5, 0.75, {{"MissingMain", 2}, {"TypeMismatch", 1}}};
        rep.sampled = {0.0, 0.1, {}};

        std::string expected =
            "model: seq2seq\n"
            "prior samples: 10\n"
            "greedy: compile_rate 0.5000 wellformed_rate 0.7500\n"
            "  MissingMain 2\n"
            "  TypeMismatch 1\n"
            "sampled: compile_rate 0.0000 wellformed_rate 0.1000\n";
        CHECK(rep.to_text() == expected);

        auto j = rep.to_json();
        CHECK(j["n"] == 10);
        CHECK(j["greedy"]["errors"]["MissingMain"] == 2);
        CHECK(j["sampled"]["errors"].empty());
    }
}
