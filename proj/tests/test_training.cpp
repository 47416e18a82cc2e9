#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "treevae/training.hpp"

using namespace treevae;
using namespace treevae::train;
using treelang::AstTree;

namespace {

std::vector<corpus::CorpusRecord> records_from(const std::vector<std::string>& sources) {
    std::vector<corpus::CorpusRecord> recs;
    for (std::size_t i = 0; i < sources.size(); ++i)
        recs.push_back(corpus::record_from_source("r" + std::to_string(i), sources[i]));
    return recs;
}

std::vector<corpus::CorpusRecord> fixture_records() {
    return records_from({
        "int main ( ) { int x ; x = read ( ) ; if ( x > 1 ) { print ( x + 2 ) ; } return 0 ; }",
        "int main ( ) { int[] a ; push ( a , 7 ) ; bool b ; b = true ; while ( b ) { b = false ; } "
        "return len ( a ) ; }",
    });
}

nn::EncoderConfig small_enc() {
    nn::EncoderConfig ec;
    ec.embed_dim = 5;
    ec.hidden = 4;
    ec.latent = 3;
    ec.layers = 1;
    ec.dropout = 0.1;
    return ec;
}

nn::DecoderConfig small_dec() {
    nn::DecoderConfig dc;
    dc.embed_dim = 5;
    dc.hidden = 4;
    dc.latent = 3;
    dc.literal_head = 2;
    dc.max_nodes = 64;
    return dc;
}

AstTree gold(const std::string& src) {
    return treelang::anonymize_identifiers(treelang::parse_source(src));
}

}  // namespace

TEST_SUITE("training losses") {
    TEST_CASE("closed-form KL against hand values and the tape op") {
        CHECK(kl_divergence({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}) == 0.0);
        CHECK(kl_divergence({1.0, 0.0}, {0.0, 0.0}) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK_THROWS_AS((void)kl_divergence({1.0}, {0.0, 0.0}), ShapeMismatch);

        std::vector<double> mu = {0.5, -0.3, 0.8}, lv = {0.2, -0.5, 0.1};
        nn::Graph g;
        double from_op = g.scalar(g.kl_gauss(g.constant(mu), g.constant(lv)));
        CHECK(from_op == doctest::Approx(kl_divergence(mu, lv)).epsilon(1e-12));
    }

    TEST_CASE("closed-form KL matches a Monte Carlo estimate within 2 percent") {
        std::vector<double> mu = {0.5, -0.3, 0.8}, lv = {0.2, -0.5, 0.1};
        double analytic = kl_divergence(mu, lv);
        rng::Rng r = rng::substream(123, "mc");
        const int n = 100000;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < mu.size(); ++d) {
                double eps = r.normal();
                double z = mu[d] + std::exp(0.5 * lv[d]) * eps;
                acc += -0.5 * (lv[d] + eps * eps) + 0.5 * z * z;
            }
        }
        double mc = acc / n;
        CHECK(std::abs(mc - analytic) / analytic < 0.02);
    }

    TEST_CASE("binary cross entropy hand values and the 1e-7 clamp") {
        CHECK(binary_cross_entropy(1.0, 1.0) < 1e-6);
        CHECK(binary_cross_entropy(0.0, 0.0) < 1e-6);
        CHECK(binary_cross_entropy(0.5, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(binary_cross_entropy(0.5, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(binary_cross_entropy(0.0, 1.0) ==
              doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
    }

    TEST_CASE("triplet hinge") {
        CHECK(triplet_hinge(0.9, 0.2) == 0.0);
        CHECK(triplet_hinge(0.2, 0.9) == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(triplet_hinge(0.4, 0.4) == 0.0);
    }

    TEST_CASE("cyclic KL weight: resets, ramp, plateau") {
        // 80 steps, 4 cycles of 20, ramp over the first half of each cycle
        CHECK(cyclic_kl_weight(0, 80, 4, 0.5) == 0.0);
        CHECK(cyclic_kl_weight(5, 80, 4, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(cyclic_kl_weight(15, 80, 4, 0.5) == 1.0);
        for (long start : {0L, 20L, 40L, 60L}) CHECK(cyclic_kl_weight(start, 80, 4, 0.5) == 0.0);
        for (long s = 10; s < 20; ++s) CHECK(cyclic_kl_weight(s, 80, 4, 0.5) == 1.0);
        for (long s = 0; s < 80; ++s) {
            double w = cyclic_kl_weight(s, 80, 4, 0.5);
            CHECK(w >= 0.0);
            CHECK(w <= 1.0);
        }
        // ramp over the whole cycle never quite reaches the plateau
        CHECK(cyclic_kl_weight(10, 80, 4, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK_THROWS_AS((void)cyclic_kl_weight(0, 0, 4, 0.5), ConfigError);
        CHECK_THROWS_AS((void)cyclic_kl_weight(0, 80, 0, 0.5), ConfigError);
    }

    TEST_CASE("early stopping stops patience epochs after the best") {
        EarlyStopping stop(3);
        CHECK(stop.update(5.0));
        CHECK(stop.update(4.0));
        CHECK_FALSE(stop.update(4.5));
        CHECK_FALSE(stop.update(4.2));
        CHECK_FALSE(stop.exhausted());
        CHECK_FALSE(stop.update(4.1));
        CHECK(stop.exhausted());
        CHECK(stop.best_epoch() == 2);
        CHECK(stop.best_loss() == 4.0);

        EarlyStopping reset(2);
        reset.update(5.0);
        reset.update(6.0);
        CHECK_FALSE(reset.exhausted());
        CHECK(reset.update(3.0));  // improvement clears the counter
        CHECK_FALSE(reset.exhausted());
        CHECK(reset.best_epoch() == 3);
    }

    TEST_CASE("bucket batches partition indices without mixing keys") {
        std::vector<int> key = {0, 0, 0, 1, 1, 2, 0, 2, 1};
        rng::Rng r(7);
        auto batches = bucket_batches(key, 2, r);
        REQUIRE(batches.size() == 5);  // 4 zeros -> 2, 3 ones -> 2, 2 twos -> 1
        std::set<int> seen;
        for (const auto& b : batches) {
            REQUIRE(!b.empty());
            CHECK(b.size() <= 2);
            for (int i : b) {
                CHECK(key[i] == key[b[0]]);
                CHECK(seen.insert(i).second);
            }
        }
        CHECK(seen.size() == key.size());

        rng::Rng r2(7);
        CHECK(bucket_batches(key, 2, r2) == batches);
        rng::Rng r3(8);
        CHECK(bucket_batches(key, 2, r3) != batches);
        CHECK_THROWS_AS((void)bucket_batches(key, 0, r3), ConfigError);
    }

    TEST_CASE("example loss composition for the tree model") {
        TreeModel m(nn::build_vocab(fixture_records()), small_enc(), small_dec(), 3);
        AstTree t = gold("int main ( ) { int x ; x = 1 ; print ( x ) ; return x ; }");
        LossWeights lw;
        nn::Graph g;
        rng::Rng neg(5);
        ExampleLoss el = tree_example_loss(g, m, t, 0.7, lw, false, nullptr, &neg);

        CHECK(el.values.l_a >= 0.0);
        CHECK(el.values.l_f >= 0.0);
        CHECK(el.values.l_r >= 0.0);
        CHECK(el.values.l_label > 0.0);
        CHECK(el.values.l_ident >= 0.0);
        CHECK(el.values.kl >= 0.0);
        CHECK(el.values.w == 0.7);
        CHECK(el.values.l_rec_total ==
              doctest::Approx(el.values.l_a + el.values.l_f + el.values.l_r + el.values.l_label +
                              el.values.l_ident)
                  .epsilon(1e-9));
        CHECK(el.values.total ==
              doctest::Approx(el.values.l_rec_total + 0.7 * el.values.kl).epsilon(1e-9));

        // w = 0 drops the KL term exactly
        nn::Graph g2;
        rng::Rng neg2(5);
        ExampleLoss rec_only = tree_example_loss(g2, m, t, 0.0, lw, false, nullptr, &neg2);
        CHECK(rec_only.values.total == rec_only.values.l_rec_total);
    }

    TEST_CASE("zeroing one component weight removes exactly that term") {
        TreeModel m(nn::build_vocab(fixture_records()), small_enc(), small_dec(), 3);
        AstTree t = gold("int main ( ) { int x ; x = 1 ; print ( x ) ; return x ; }");

        LossWeights off;
        off.label = 0.0;
        nn::Graph g;
        rng::Rng neg(5);
        m.reg.zero_grad();
        ExampleLoss without = tree_example_loss(g, m, t, 0.3, off, false, nullptr, &neg);
        g.backward(without.total);
        for (const auto& p : m.reg.all()) {
            if (p->name.rfind("dec.label.", 0) != 0) continue;
            for (float gr : p->grad.data) CHECK(gr == 0.0f);
        }

        nn::Graph g2;
        rng::Rng neg2(5);
        m.reg.zero_grad();
        LossWeights lw;
        ExampleLoss with = tree_example_loss(g2, m, t, 0.3, lw, false, nullptr, &neg2);
        g2.backward(with.total);
        double label_grad_mass = 0.0;
        for (const auto& p : m.reg.all()) {
            if (p->name.rfind("dec.label.", 0) != 0) continue;
            for (float gr : p->grad.data) label_grad_mass += std::abs(gr);
        }
        CHECK(label_grad_mass > 0.0);
        CHECK(with.values.total - without.values.total ==
              doctest::Approx(with.values.l_label).epsilon(1e-9));
    }

    TEST_CASE("example loss composition for the sequence model") {
        nn::BaselineConfig bc;
        bc.embed_dim = 4;
        bc.hidden = 5;
        bc.latent = 3;
        bc.adaptive_head = 4;
        bc.max_len = 32;
        SeqModel m(nn::build_seq_vocab(fixture_records()), bc, 6);
        auto ids = nn::to_ids(m.vocab, nn::sequence_tokens("int main ( ) { return 0 ; }"));

        nn::Graph g;
        ExampleLoss el = seq_example_loss(g, m, ids, 0.4, false, nullptr, nullptr);
        CHECK(el.values.l_label > 0.0);
        CHECK(el.values.l_rec_total == el.values.l_label);
        CHECK(el.values.l_a == 0.0);
        CHECK(el.values.l_ident == 0.0);
        CHECK(el.values.total ==
              doctest::Approx(el.values.l_rec_total + 0.4 * el.values.kl).epsilon(1e-9));
    }
}

TEST_SUITE("training loop") {
    TEST_CASE("tree training is deterministic and logs one line per epoch") {
        auto recs = corpus::generate_corpus(12, 5);
        corpus::CorpusSplits splits = corpus::filter_and_split(recs, {});
        nn::Vocab vocab = nn::build_vocab(recs);

        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 4;
        cfg.seed = 14;

        std::ostringstream log_a;
        TreeModel a(vocab, small_enc(), small_dec(), 14);
        TrainResult ra = train_tree(a, splits, cfg, &log_a);

        std::ostringstream log_b;
        TreeModel b(vocab, small_enc(), small_dec(), 14);
        TrainResult rb = train_tree(b, splits, cfg, &log_b);

        REQUIRE(ra.metrics.size() == 2);
        CHECK(log_a.str() == log_b.str());
        CHECK(ra.best_epoch == rb.best_epoch);
        const auto& pa = a.reg.all();
        const auto& pb = b.reg.all();
        REQUIRE(pa.size() == pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);

        int lines = 0;
        std::istringstream in(log_a.str());
        std::string line;
        while (std::getline(in, line)) {
            auto j = nlohmann::json::parse(line);
            ++lines;
            CHECK(j.at("epoch").get<int>() == lines);
            CHECK(j.at("w_mean").get<double>() >= 0.0);
            CHECK(j.at("w_mean").get<double>() <= 1.0);
            CHECK(std::isfinite(j.at("train_loss").get<double>()));
            CHECK(std::isfinite(j.at("valid_loss").get<double>()));
            CHECK(std::isfinite(j.at("kl").get<double>()));
        }
        CHECK(lines == 2);

        CHECK(ra.best_valid ==
              std::min(ra.metrics[0].valid_loss, ra.metrics[1].valid_loss));
        CHECK(ra.metrics[ra.best_epoch - 1].valid_loss == ra.best_valid);
    }

    TEST_CASE("the model keeps the best-validation parameters") {
        auto recs = corpus::generate_corpus(12, 5);
        corpus::CorpusSplits splits = corpus::filter_and_split(recs, {});
        TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 14);

        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.batch_size = 4;
        cfg.seed = 14;
        TrainResult res = train_tree(m, splits, cfg);

        // re-score the validation split against the restored parameters
        double vsum = 0.0;
        nn::Graph g;
        for (std::size_t i = 0; i < splits.valid.size(); ++i) {
            g.reset();
            rng::Rng neg = rng::substream(cfg.seed, "valid-negative", i);
            AstTree t = gold(splits.valid[i].source);
            vsum += tree_example_loss(g, m, t, 1.0, cfg.weights, false, nullptr, &neg)
                        .values.total;
        }
        CHECK(vsum / splits.valid.size() == doctest::Approx(res.best_valid).epsilon(1e-12));
    }

    TEST_CASE("sequence training is deterministic") {
        auto recs = corpus::generate_corpus(12, 5);
        corpus::CorpusSplits splits = corpus::filter_and_split(recs, {});
        nn::SeqVocab vocab = nn::build_seq_vocab(recs);
        nn::BaselineConfig bc;
        bc.embed_dim = 4;
        bc.hidden = 5;
        bc.latent = 3;
        bc.adaptive_head = 64;
        bc.max_len = 128;

        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 4;
        cfg.seed = 15;

        std::ostringstream la, lb;
        SeqModel a(vocab, bc, 15);
        train_seq(a, splits, cfg, &la);
        SeqModel b(vocab, bc, 15);
        train_seq(b, splits, cfg, &lb);
        CHECK(la.str() == lb.str());
        const auto& pa = a.reg.all();
        const auto& pb = b.reg.all();
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
    }

    TEST_CASE("a poisoned parameter raises DivergedLoss") {
        auto recs = corpus::generate_corpus(12, 5);
        corpus::CorpusSplits splits = corpus::filter_and_split(recs, {});
        TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 14);
        m.reg.all()[0]->value.data[0] = std::numeric_limits<float>::quiet_NaN();
        TrainConfig cfg;
        cfg.epochs = 1;
        CHECK_THROWS_AS((void)train_tree(m, splits, cfg), DivergedLoss);
    }

    TEST_CASE("empty splits are rejected") {
        auto recs = corpus::generate_corpus(8, 5);
        corpus::CorpusSplits empty_valid;
        empty_valid.train = recs;
        TreeModel m(nn::build_vocab(recs), small_enc(), small_dec(), 14);
        TrainConfig cfg;
        CHECK_THROWS_AS((void)train_tree(m, empty_valid, cfg), EmptySplit);
    }

    TEST_CASE("four tiny programs can be memorized") {
        std::vector<std::string> sources = {
            "int main ( ) { return 0 ; }",
            "int main ( ) { return 1 ; }",
            "int main ( ) { int x ; x = 2 ; return x ; }",
            "int main ( ) { print ( 1 ) ; return 0 ; }",
        };
        auto recs = records_from(sources);
        nn::EncoderConfig ec = small_enc();
        ec.embed_dim = 8;
        ec.hidden = 16;
        ec.latent = 4;
        nn::DecoderConfig dc = small_dec();
        dc.embed_dim = 8;
        dc.hidden = 16;
        dc.latent = 4;
        TreeModel m(nn::build_vocab(recs), ec, dc, 2);

        std::vector<AstTree> trees;
        for (const auto& s : sources) trees.push_back(gold(s));
        double per_node = overfit_trees(m, trees, 500, 5e-3, 2, 0.05);
        CHECK(per_node < 0.05);

        // memorized programs come back exactly under greedy decoding, in
        // their anonymized training form
        sampling::SamplerConfig greedy;
        for (const auto& s : sources) {
            nn::Graph g;
            auto out = m.encoder->encode(g, gold(s), false, nullptr);
            AstTree back = m.decoder->decode(g.value(out.mu), greedy);
            CHECK(treelang::serialize(back) == treelang::serialize(gold(s)));
        }
    }
}

TEST_SUITE("training config and checkpoints") {
    TEST_CASE("run config parses every key and keeps defaults otherwise") {
        RunConfig defaults = parse_run_config("");
        CHECK(defaults.train.lr == 1e-3);
        CHECK(defaults.train.epochs == 10);
        CHECK(defaults.train.patience == 3);
        CHECK(defaults.train.batch_size == 32);
        CHECK(defaults.train.cycles == 4);
        CHECK(defaults.train.ramp_fraction == 0.5);
        CHECK(defaults.embed_dim == 64);
        CHECK(defaults.max_nodes == 750);

        std::string text =
            "# run settings\n"
            "lr = 0.002\n"
            "epochs = 3\n"
            "patience = 2\n"
            "batch_size = 8\n"
            "cycles = 2\n"
            "ramp_fraction = 0.25\n"
            "word_dropout = 0.1\n"
            "seed = 42\n"
            "w_offspring = 1.0\n"
            "w_sibling = 0.5\n"
            "w_reserved = 1\n"
            "w_label = 2\n"
            "w_identifier = 0\n"
            "\n"
            "embed_dim = 16\n"
            "hidden = 24\n"
            "latent = 8\n"
            "layers = 2\n"
            "enc_dropout = 0.15\n"
            "literal_head = 12\n"
            "adaptive_head = 20\n"
            "max_nodes = 300\n"
            "max_len = 400\n";
        RunConfig rc = parse_run_config(text);
        CHECK(rc.train.lr == 0.002);
        CHECK(rc.train.epochs == 3);
        CHECK(rc.train.patience == 2);
        CHECK(rc.train.batch_size == 8);
        CHECK(rc.train.cycles == 2);
        CHECK(rc.train.ramp_fraction == 0.25);
        CHECK(rc.train.word_dropout == 0.1);
        CHECK(rc.train.seed == 42);
        CHECK(rc.train.weights.sibling == 0.5);
        CHECK(rc.train.weights.label == 2.0);
        CHECK(rc.train.weights.identifier == 0.0);
        CHECK(rc.embed_dim == 16);
        CHECK(rc.hidden == 24);
        CHECK(rc.latent == 8);
        CHECK(rc.layers == 2);
        CHECK(rc.enc_dropout == 0.15);
        CHECK(rc.literal_head == 12);
        CHECK(rc.adaptive_head == 20);
        CHECK(rc.max_nodes == 300);
        CHECK(rc.max_len == 400);

        nn::EncoderConfig ec = rc.encoder_config();
        CHECK(ec.hidden == 24);
        CHECK(ec.dropout == 0.15);
        nn::DecoderConfig dc = rc.decoder_config();
        CHECK(dc.literal_head == 12);
        nn::BaselineConfig bc = rc.baseline_config();
        CHECK(bc.word_dropout == 0.1);
        CHECK(bc.max_len == 400);
    }

    TEST_CASE("config rejections") {
        CHECK_THROWS_AS((void)parse_run_config("turbo = 9\n"), ConfigError);
        CHECK_THROWS_AS((void)parse_run_config("epochs = soon\n"), ConfigError);
        CHECK_THROWS_AS((void)parse_run_config("epochs\n"), ConfigError);
        CHECK_THROWS_AS((void)parse_run_config("lr = 0\n"), ConfigError);
        CHECK_THROWS_AS((void)parse_run_config("ramp_fraction = 1.5\n"), ConfigError);
        CHECK_THROWS_AS((void)parse_run_config("w_label = -1\n"), ConfigError);
        CHECK_THROWS_AS((void)parse_run_config("hidden = 0\n"), ConfigError);
        CHECK_THROWS_AS((void)load_run_config("/nonexistent/config.txt"), ConfigError);
    }

    TEST_CASE("tree checkpoints round trip bit for bit") {
        TreeModel m(nn::build_vocab(fixture_records()), small_enc(), small_dec(), 9);
        const std::string path = "/tmp/treevae_test_tree.ckpt";
        save_tree_model(path, m);
        CHECK(checkpoint_kind(path) == std::string(kTreeKind));

        auto back = load_tree_model(path);
        const auto& pa = m.reg.all();
        const auto& pb = back->reg.all();
        REQUIRE(pa.size() == pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            CHECK(pa[i]->name == pb[i]->name);
            CHECK(pa[i]->value.data == pb[i]->value.data);
        }
        CHECK(back->enc_cfg.layers == m.enc_cfg.layers);
        CHECK(back->dec_cfg.literal_head == m.dec_cfg.literal_head);

        sampling::SamplerConfig greedy;
        std::vector<double> z(3, 0.2);
        CHECK(treelang::tree_equal(m.decoder->decode(z, greedy), back->decoder->decode(z, greedy)));
        CHECK_THROWS_AS((void)load_seq_model(path), KindMismatch);
        std::remove(path.c_str());
    }

    TEST_CASE("sequence checkpoints round trip bit for bit") {
        nn::BaselineConfig bc;
        bc.embed_dim = 4;
        bc.hidden = 5;
        bc.latent = 3;
        bc.adaptive_head = 4;
        bc.max_len = 40;
        SeqModel m(nn::build_seq_vocab(fixture_records()), bc, 21);
        const std::string path = "/tmp/treevae_test_seq.ckpt";
        save_seq_model(path, m);
        CHECK(checkpoint_kind(path) == std::string(kSeqKind));

        auto back = load_seq_model(path);
        const auto& pa = m.reg.all();
        const auto& pb = back->reg.all();
        REQUIRE(pa.size() == pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i)
            CHECK(pa[i]->value.data == pb[i]->value.data);
        CHECK(back->vocab.tokens == m.vocab.tokens);
        CHECK(back->cfg.max_len == 40);

        sampling::SamplerConfig greedy;
        std::vector<double> z(3, -0.4);
        CHECK(m.vae->decode_sequence(z, greedy) == back->vae->decode_sequence(z, greedy));
        CHECK_THROWS_AS((void)load_tree_model(path), KindMismatch);
        std::remove(path.c_str());
    }
}
