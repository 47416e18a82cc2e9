#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "treevae/checkpoint.hpp"
#include "treevae/graph.hpp"
#include "treevae/nncore.hpp"

using namespace treevae;
using namespace treevae::nn;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

std::vector<corpus::CorpusRecord> tiny_records() {
    std::vector<std::string> sources = {
        "int main ( ) { int x ; x = read ( ) ; print ( x + 2 ) ; return 0 ; }",
        "int main ( ) { int[] a ; push ( a , 7 ) ; bool b ; b = true ; return len ( a ) ; }",
    };
    std::vector<corpus::CorpusRecord> recs;
    for (std::size_t i = 0; i < sources.size(); ++i)
        recs.push_back(corpus::record_from_source("t" + std::to_string(i), sources[i]));
    return recs;
}

}  // namespace

TEST_SUITE("nncore") {

TEST_CASE("tensor shapes and registry") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.data.size() == 6);

    ParamRegistry reg;
    Param* a = reg.add("a", Tensor::full({2}, 1.5f));
    CHECK(a->value.data[0] == 1.5f);
    CHECK(a->grad.data.size() == 2);
    CHECK_THROWS_AS(reg.add("a", Tensor({1})), Error);
    a->grad.data[0] = 3.0f;
    reg.zero_grad();
    CHECK(a->grad.data[0] == 0.0f);
    reg.add("b", Tensor({3, 4}));
    CHECK(reg.total_parameters() == 14);
    CHECK(reg.find("b") != nullptr);
    CHECK(reg.find("missing") == nullptr);
}

TEST_CASE("init is deterministic and bounded") {
    rng::Rng r1 = rng::substream(9, "init", 0);
    rng::Rng r2 = rng::substream(9, "init", 0);
    Tensor a = xavier_init(8, 4, r1);
    Tensor b = xavier_init(8, 4, r2);
    CHECK(a.data == b.data);
    float limit = std::sqrt(6.0f / 12.0f);
    for (float v : a.data) CHECK(std::fabs(v) <= limit);
}

TEST_CASE("base64 known vectors and round trip") {
    auto enc = [](const std::string& s) {
        return base64_encode(reinterpret_cast<const unsigned char*>(s.data()), s.size());
    };
    CHECK(enc("Man") == "TWFu");
    CHECK(enc("Ma") == "TWE=");
    CHECK(enc("M") == "TQ==");
    CHECK(enc("") == "");
    auto back = base64_decode("TWFu");
    CHECK(std::string(back.begin(), back.end()) == "Man");
    std::vector<unsigned char> bytes;
    for (int i = 0; i < 300; ++i) bytes.push_back(static_cast<unsigned char>(i * 7));
    CHECK(base64_decode(base64_encode(bytes.data(), bytes.size())) == bytes);
    CHECK_THROWS_AS(base64_decode("abc"), CorruptCheckpoint);
    CHECK_THROWS_AS(base64_decode("ab!c"), CorruptCheckpoint);
    CHECK_THROWS_AS(base64_decode("a==="), CorruptCheckpoint);
    CHECK_THROWS_AS(base64_decode("TWE=TWE="), CorruptCheckpoint);
}

TEST_CASE("linear matches a straight triple loop") {
    std::vector<double> w = {1, 2, 3, 4, 5, 6};  // 2x3
    std::vector<double> x = {0.5, -1, 2};
    std::vector<double> b = {10, 20};
    auto y = linear(w, 2, 3, x, &b);
    std::vector<double> expect(2, 0.0);
    for (int i = 0; i < 2; ++i) {
        expect[i] = b[i];
        for (int j = 0; j < 3; ++j) expect[i] += w[i * 3 + j] * x[j];
    }
    CHECK(y == expect);
    CHECK_THROWS_AS(linear(w, 2, 3, {1.0}, nullptr), ShapeMismatch);
}

TEST_CASE("softmax and log_softmax agree with raw arithmetic") {
    std::vector<double> v = {1.0, 2.0, 3.0};
    auto sm = nn::softmax(v);
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(sm[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-12));
    CHECK(sm[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-12));
    auto lsm = nn::log_softmax(v);
    double total = 0;
    for (double l : lsm) total += std::exp(l);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> big = {1000.0, 1000.0};
    auto sb = nn::softmax(big);
    CHECK(sb[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(nn::softmax({}), EmptyInput);
}

TEST_CASE("lstm_cell against scalar hand computation") {
    std::vector<double> w = {0.5, -0.25, 0.3, 0.8};
    std::vector<double> u = {0.1, 0.2, -0.1, 0.05};
    std::vector<double> b = {0.01, 0.02, 0.03, 0.04};
    LstmState prev{{0.5}, {-0.3}};
    auto next = lstm_cell(w, u, b, 1, 1, {1.0}, prev);
    double i = sig(0.5 + 0.1 * 0.5 + 0.01);
    double f = sig(-0.25 + 0.2 * 0.5 + 0.02);
    double o = sig(0.3 - 0.1 * 0.5 + 0.03);
    double g = std::tanh(0.8 + 0.05 * 0.5 + 0.04);
    double c = f * -0.3 + i * g;
    CHECK(next.c[0] == doctest::Approx(c).epsilon(1e-14));
    CHECK(next.h[0] == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));
}

TEST_CASE("graph forward ops match direct math") {
    Graph g;
    auto x = g.constant({0.5, -1.0, 2.0});
    ParamRegistry reg;
    Param* w = reg.add("w", Tensor({2, 3}));
    for (int i = 0; i < 6; ++i) w->value.data[i] = static_cast<float>(i + 1);
    Param* b = reg.add("b", Tensor::from_vector({10.0f, 20.0f}));
    auto y = g.affine(g.param(w), x, g.param(b));
    CHECK(g.value(y)[0] == doctest::Approx(10 + 1 * 0.5 - 2 + 6).epsilon(1e-12));
    CHECK(g.value(y)[1] == doctest::Approx(20 + 4 * 0.5 - 5 + 12).epsilon(1e-12));

    auto rows = g.affine_rows(g.param(w), x, 1, 1, g.param(b));
    CHECK(g.len(rows) == 1);
    CHECK(g.value(rows)[0] == doctest::Approx(g.value(y)[1]).epsilon(1e-12));

    auto s = g.slice(x, 1, 2);
    CHECK(g.value(s) == std::vector<double>{-1.0, 2.0});
    CHECK_THROWS_AS(g.slice(x, 2, 2), ShapeMismatch);

    auto m = g.mul(s, s);
    CHECK(g.value(m) == std::vector<double>{1.0, 4.0});
    auto sc = g.scale(s, -2.0);
    CHECK(g.value(sc) == std::vector<double>{2.0, -4.0});
    auto sm = g.sigmoid(x);
    CHECK(g.value(sm)[0] == doctest::Approx(sig(0.5)).epsilon(1e-14));
    auto th = g.tanh_op(x);
    CHECK(g.value(th)[2] == doctest::Approx(std::tanh(2.0)).epsilon(1e-14));
    auto ex = g.exp_op(x);
    CHECK(g.value(ex)[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    auto re = g.relu(x);
    CHECK(g.value(re) == std::vector<double>{0.5, 0.0, 2.0});
    auto su = g.sub(x, x);
    CHECK(g.value(su) == std::vector<double>{0.0, 0.0, 0.0});

    auto mr = g.max_rows({x, g.constant({0.4, 0.0, 5.0})});
    CHECK(g.value(mr) == std::vector<double>{0.5, 0.0, 5.0});

    auto cs = g.cosine(g.constant({1.0, 0.0}), g.constant({0.0, 1.0}));
    CHECK(g.scalar(cs) == doctest::Approx(0.0));
    auto cs2 = g.cosine(g.constant({2.0, 0.0}), g.constant({5.0, 0.0}));
    CHECK(g.scalar(cs2) == doctest::Approx(1.0).epsilon(1e-14));
    auto cs3 = g.cosine(g.constant({0.0, 0.0}), g.constant({5.0, 0.0}));
    CHECK(g.scalar(cs3) == 0.0);

    auto lg = g.constant({0.1, -0.4, 2.0});
    auto nll = g.nll_log_softmax(lg, 1);
    double lse = std::log(std::exp(0.1) + std::exp(-0.4) + std::exp(2.0));
    CHECK(g.scalar(nll) == doctest::Approx(lse + 0.4).epsilon(1e-12));

    auto bc = g.bce_logit(g.constant_scalar(0.0), 1.0);
    CHECK(g.scalar(bc) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    auto bc2 = g.bce_logit(g.constant_scalar(-100.0), 1.0);
    CHECK(g.scalar(bc2) == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));

    auto kl = g.kl_gauss(g.constant({1.0, 0.0}), g.constant({0.0, 0.0}));
    CHECK(g.scalar(kl) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("embedding rows slice the table") {
    Graph g;
    ParamRegistry reg;
    Param* emb = reg.add("emb", Tensor({3, 2}));
    for (int i = 0; i < 6; ++i) emb->value.data[i] = static_cast<float>(i);
    auto row = g.embedding_row(g.param(emb), 1);
    CHECK(g.value(row) == std::vector<double>{2.0, 3.0});
    CHECK_THROWS_AS(g.embedding_row(g.param(emb), 3), IndexOutOfRange);
}

TEST_CASE("graph lstm step equals the reference cell") {
    rng::Rng r = rng::substream(4, "lstm", 0);
    int hidden = 5, input = 3;
    ParamRegistry reg;
    Param* w = reg.add("w", xavier_init(4 * hidden, input, r));
    Param* u = reg.add("u", xavier_init(4 * hidden, hidden, r));
    Param* b = reg.add("b", uniform_init({4 * hidden}, 0.2f, r));
    std::vector<double> x = r.normal_vec(input);
    LstmState prev;
    prev.h = r.normal_vec(hidden);
    prev.c = r.normal_vec(hidden);

    Graph g;
    Graph::State gs;
    gs.h = g.constant(prev.h);
    gs.c = g.constant(prev.c);
    auto next = g.lstm_step(g.param(w), g.param(u), g.param(b), hidden, g.constant(x), gs);

    std::vector<double> wd(w->value.data.begin(), w->value.data.end());
    std::vector<double> ud(u->value.data.begin(), u->value.data.end());
    std::vector<double> bd(b->value.data.begin(), b->value.data.end());
    auto ref = lstm_cell(wd, ud, bd, hidden, input, x, prev);
    auto gh = g.value(next.h);
    auto gc = g.value(next.c);
    for (int k = 0; k < hidden; ++k) {
        CHECK(gh[k] == doctest::Approx(ref.h[k]).epsilon(1e-12));
        CHECK(gc[k] == doctest::Approx(ref.c[k]).epsilon(1e-12));
    }
}

TEST_CASE("backward on a hand-checkable product") {
    // loss = kl_gauss(a*b, 0) = 0.5 * sum((a*b)^2); d/da = (a*b)*b
    ParamRegistry reg;
    Param* a = reg.add("a", Tensor::from_vector({2.0f, -1.0f}));
    Param* b = reg.add("b", Tensor::from_vector({3.0f, 4.0f}));
    Graph g;
    auto prod = g.mul(g.param(a), g.param(b));
    auto loss = g.kl_gauss(prod, g.zeros(2));
    CHECK(g.scalar(loss) == doctest::Approx(0.5 * (36.0 + 16.0)).epsilon(1e-12));
    reg.zero_grad();
    g.backward(loss);
    CHECK(a->grad.data[0] == doctest::Approx(6.0 * 3.0));
    CHECK(a->grad.data[1] == doctest::Approx(-4.0 * 4.0));
    CHECK(b->grad.data[0] == doctest::Approx(6.0 * 2.0));
    CHECK(b->grad.data[1] == doctest::Approx(-4.0 * -1.0));
    CHECK_THROWS_AS(g.backward(loss), Error);
}

TEST_CASE("max_rows ties route gradient to the first row") {
    ParamRegistry reg;
    Param* a = reg.add("a", Tensor::from_vector({1.0f, 5.0f}));
    Param* b = reg.add("b", Tensor::from_vector({1.0f, 3.0f}));
    Graph g;
    auto m = g.max_rows({g.param(a), g.param(b)});
    auto loss = g.add(g.slice(m, 0, 1), g.slice(m, 1, 1));
    reg.zero_grad();
    g.backward(loss);
    CHECK(a->grad.data[0] == 1.0f);
    CHECK(a->grad.data[1] == 1.0f);
    CHECK(b->grad.data[0] == 0.0f);
    CHECK(b->grad.data[1] == 0.0f);
}

TEST_CASE("finite differences confirm gradients across the op set") {
    ParamRegistry reg;
    rng::Rng r = rng::substream(11, "fd", 0);
    Param* emb = reg.add("emb", xavier_init(5, 3, r));
    Param* w1 = reg.add("w1", xavier_init(4, 3, r));
    Param* b1 = reg.add("b1", uniform_init({4}, 0.3f, r));
    Param* w2 = reg.add("w2", xavier_init(3, 4, r));
    Param* w3 = reg.add("w3", xavier_init(5, 3, r));

    auto build = [&](Graph& g) {
        auto x = g.embedding_row(g.param(emb), 2);
        auto h = g.tanh_op(g.affine(g.param(w1), x, g.param(b1)));
        auto y = g.relu(g.affine(g.param(w2), h));
        auto m = g.max_rows({y, x});
        auto cos = g.cosine(y, x);
        auto kl = g.kl_gauss(g.slice(h, 0, 2), g.slice(h, 2, 2));
        auto nll = g.nll_log_softmax(g.affine(g.param(w3), m), 3);
        auto bce = g.bce_logit(g.slice(h, 0, 1), 1.0);
        auto u = g.mul(g.sigmoid(y), g.exp_op(g.scale(x, 0.1)));
        auto reduce = g.kl_gauss(u, g.zeros(3));
        return g.add_n({g.scale(cos, 0.7), kl, nll, bce, reduce});
    };
    auto rep = grad_check(reg, build, 1e-4, 64, 0);
    CHECK(rep.elements_checked == 15 + 12 + 4 + 12 + 15);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("finite differences confirm lstm and per-row affine gradients") {
    ParamRegistry reg;
    rng::Rng r = rng::substream(12, "fdlstm", 0);
    int hidden = 4, input = 3;
    Param* w = reg.add("w", xavier_init(4 * hidden, input, r));
    Param* u = reg.add("u", xavier_init(4 * hidden, hidden, r));
    Param* b = reg.add("b", uniform_init({4 * hidden}, 0.2f, r));
    std::vector<double> x1 = r.normal_vec(input);
    std::vector<double> x2 = r.normal_vec(input);

    auto build = [&](Graph& g) {
        Graph::State st;
        st = g.lstm_step(g.param(w), g.param(u), g.param(b), hidden, g.constant(x1), st);
        st = g.lstm_step(g.param(w), g.param(u), g.param(b), hidden, g.constant(x2), st);
        auto f = g.sigmoid(g.affine_rows(g.param(u), st.h, hidden, hidden,
                                         g.param(b)));
        return g.kl_gauss(f, g.zeros(hidden));
    };
    auto rep = grad_check(reg, build, 1e-4, 48, 3);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("grad_check rejects non-finite losses") {
    ParamRegistry reg;
    Param* a = reg.add("a", Tensor::from_vector({2000.0f}));
    auto build = [&](Graph& g) { return g.kl_gauss(g.zeros(1), g.param(a)); };
    CHECK_THROWS_AS(grad_check(reg, build), NonFinite);
}

TEST_CASE("kl matches a monte carlo estimate") {
    std::vector<double> mu = {0.6, -0.3, 1.1};
    std::vector<double> lv = {0.2, -0.5, 0.0};
    Graph g;
    auto kl = g.kl_gauss(g.constant(mu), g.constant(lv));
    double exact = g.scalar(kl);

    rng::Rng r = rng::substream(21, "mc", 0);
    int n = 200000;
    double acc = 0;
    for (int k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < mu.size(); ++i) {
            double sd = std::exp(0.5 * lv[i]);
            double z = mu[i] + sd * r.normal();
            double logq = -0.5 * (std::log(2 * M_PI) + lv[i]) -
                          0.5 * (z - mu[i]) * (z - mu[i]) / (sd * sd);
            double logp = -0.5 * std::log(2 * M_PI) - 0.5 * z * z;
            acc += logq - logp;
        }
    }
    double mc = acc / n;
    CHECK(std::fabs(mc - exact) / std::fabs(exact) < 0.02);
}

TEST_CASE("adaptive softmax degenerates to a full softmax") {
    rng::Rng r = rng::substream(31, "asm", 0);
    ParamRegistry reg;
    std::vector<std::int64_t> freq = {5, 9, 2, 7};
    AdaptiveSoftmax a(reg, "lit", 6, freq, 32, r);
    CHECK(a.degenerate());
    CHECK(a.head_size() == 4);
    Graph g;
    auto h = g.constant(rng::substream(31, "h", 0).normal_vec(6));
    auto lp = a.log_probs(g, h);
    double total = 0;
    for (double l : lp) total += std::exp(l);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    for (int t = 0; t < 4; ++t) {
        Graph g2;
        auto h2 = g2.constant(g.value(h));
        CHECK(g2.scalar(a.nll(g2, h2, t)) == doctest::Approx(-lp[t]).epsilon(1e-9));
    }
}

TEST_CASE("adaptive softmax splits head and tail consistently") {
    rng::Rng r = rng::substream(32, "asm2", 0);
    ParamRegistry reg;
    std::vector<std::int64_t> freq(11);
    for (int i = 0; i < 11; ++i) freq[i] = (i * 13) % 23;
    AdaptiveSoftmax a(reg, "lit", 6, freq, 4, r);
    CHECK(!a.degenerate());
    CHECK(a.head_size() == 4);
    CHECK(a.vocab_size() == 11);
    Graph g;
    auto h = g.constant(rng::substream(32, "h", 0).normal_vec(6));
    auto lp = a.log_probs(g, h);
    double total = 0;
    for (double l : lp) total += std::exp(l);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    for (int t : {0, 3, 7, 10}) {
        Graph g2;
        auto h2 = g2.constant(g.value(h));
        CHECK(g2.scalar(a.nll(g2, h2, t)) == doctest::Approx(-lp[t]).epsilon(1e-9));
    }

    auto build_head = [&](Graph& gg) {
        return a.nll(gg, gg.constant(g.value(h)), 9);  // most frequent -> head
    };
    auto build_tail = [&](Graph& gg) {
        return a.nll(gg, gg.constant(g.value(h)), 0);  // freq 0 -> tail
    };
    CHECK(grad_check(reg, build_head, 1e-4, 64, 1).max_rel_err < 1e-3);
    CHECK(grad_check(reg, build_tail, 1e-4, 64, 2).max_rel_err < 1e-3);
}

TEST_CASE("adam follows the update rule exactly") {
    ParamRegistry reg;
    Param* p = reg.add("p", Tensor::from_vector({1.0f, -2.0f}));
    Adam opt(1e-3, 0.9, 0.999, 1e-8);

    std::vector<double> m(2, 0.0), v(2, 0.0);
    std::vector<float> expect = {1.0f, -2.0f};
    std::vector<std::vector<float>> grads = {{1.0f, -2.0f}, {0.5f, 0.25f}};
    for (int t = 1; t <= 2; ++t) {
        p->grad.data = grads[t - 1];
        opt.step(reg);
        for (int i = 0; i < 2; ++i) {
            double g = grads[t - 1][i];
            m[i] = 0.9 * m[i] + 0.1 * g;
            v[i] = 0.999 * v[i] + 0.001 * g * g;
            double mh = m[i] / (1.0 - std::pow(0.9, t));
            double vh = v[i] / (1.0 - std::pow(0.999, t));
            expect[i] = static_cast<float>(expect[i] - 1e-3 * mh / (std::sqrt(vh) + 1e-8));
        }
        CHECK(p->value.data[0] == expect[0]);
        CHECK(p->value.data[1] == expect[1]);
    }
    CHECK(opt.steps_taken() == 2);
}

TEST_CASE("adam drives a quadratic to its minimum") {
    ParamRegistry reg;
    Param* p = reg.add("p", Tensor::from_vector({4.0f}));
    Adam opt(0.05);
    for (int step = 0; step < 400; ++step) {
        reg.zero_grad();
        Graph g;
        auto loss = g.kl_gauss(g.param(p), g.zeros(1));  // 0.5 * p^2
        g.backward(loss);
        opt.step(reg);
    }
    CHECK(std::fabs(p->value.data[0]) < 1e-2);
}

TEST_CASE("vocabulary built over anonymized programs") {
    auto v = build_vocab(tiny_records(), 8);
    using treelang::TokenCategory;
    CHECK(v.find_id(TokenCategory::Type, "int") >= 0);
    CHECK(v.find_id(TokenCategory::Type, "int[]") >= 0);
    CHECK(v.find_id(TokenCategory::Builtin, "print") >= 0);
    CHECK(v.find_id(TokenCategory::Builtin, "len") >= 0);
    CHECK(v.find_id(TokenCategory::Reserved, "program") >= 0);
    CHECK(v.find_id(TokenCategory::Reserved, "func-decl") >= 0);
    CHECK(v.find_id(TokenCategory::Literal, "true") >= 0);
    CHECK(v.find_id(TokenCategory::Literal, "7") >= 0);
    CHECK(v.find_id(TokenCategory::Identifier, "ID0") == 0);
    // three declarations in the second program, plus headroom
    CHECK(v.size(TokenCategory::Identifier) == 3 + 8);
    CHECK(v.find_id(TokenCategory::Identifier, "main") == -1);
    CHECK_THROWS_AS(v.id_of(TokenCategory::Literal, "99"), OutOfVocab);

    int lit0 = v.id_of(TokenCategory::Literal, "0");
    CHECK(v.literal_counts[lit0] == 1);

    auto j = v.to_json();
    auto w = Vocab::from_json(j);
    for (int c = 0; c < 5; ++c) CHECK(w.tables[c] == v.tables[c]);
    CHECK(w.literal_counts == v.literal_counts);
    CHECK_THROWS_AS(Vocab::from_json(nlohmann::json::object()), CorruptCheckpoint);
}

TEST_CASE("checkpoints round trip bit exactly and reproducibly") {
    rng::Rng r = rng::substream(41, "ckpt", 0);
    ParamRegistry reg;
    reg.add("enc.w", xavier_init(4, 3, r));
    reg.add("enc.b", uniform_init({4}, 0.5f, r));
    auto vocab = build_vocab(tiny_records()).to_json();
    nlohmann::json hp = {{"hidden", 4}, {"latent", 2}};

    auto dir = std::filesystem::temp_directory_path();
    std::string p1 = (dir / "treevae_ck1.json").string();
    std::string p2 = (dir / "treevae_ck2.json").string();
    save_checkpoint(p1, "tree2tree", hp, vocab, reg);
    save_checkpoint(p2, "tree2tree", hp, vocab, reg);
    CHECK(slurp(p1) == slurp(p2));

    auto ck = load_checkpoint(p1);
    CHECK(ck.model_kind == "tree2tree");
    CHECK(ck.hyperparams.at("hidden").get<int>() == 4);
    REQUIRE(ck.params.size() == 2);
    CHECK(ck.params[0].first == "enc.w");

    ParamRegistry reg2;
    reg2.add("enc.w", Tensor({4, 3}));
    reg2.add("enc.b", Tensor({4}));
    load_into_registry(ck, reg2);
    CHECK(reg2.find("enc.w")->value.data == reg.find("enc.w")->value.data);
    CHECK(reg2.find("enc.b")->value.data == reg.find("enc.b")->value.data);

    expect_kind(ck, "tree2tree");
    CHECK_THROWS_AS(expect_kind(ck, "seq2seq"), KindMismatch);

    ParamRegistry wrong;
    wrong.add("enc.w", Tensor({3, 4}));
    wrong.add("enc.b", Tensor({4}));
    CHECK_THROWS_AS(load_into_registry(ck, wrong), CorruptCheckpoint);
    ParamRegistry fewer;
    fewer.add("enc.w", Tensor({4, 3}));
    CHECK_THROWS_AS(load_into_registry(ck, fewer), CorruptCheckpoint);

    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
    auto dir = std::filesystem::temp_directory_path();
    std::string path = (dir / "treevae_bad.json").string();
    {
        std::ofstream out(path);
        out << "not json";
    }
    CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);
    {
        std::ofstream out(path);
        out << R"({"version":"other","model_kind":"x","hyperparams":{},"vocab":{},"params":[]})";
    }
    CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);
    {
        std::ofstream out(path);
        out << R"({"version":"treevae-ckpt-v1","model_kind":"x","hyperparams":{},"vocab":{},)"
            << R"("params":[{"name":"a","shape":[2],"data":"AAAAAA=="}]})";
    }
    CHECK_THROWS_AS(load_checkpoint(path), CorruptCheckpoint);
    CHECK_THROWS_AS(load_checkpoint((dir / "treevae_missing.json").string()), CorruptCheckpoint);
    std::remove(path.c_str());
}

}  // TEST_SUITE
