#include "treevae/baseline.hpp"

#include <algorithm>
#include <map>

#include "treevae/treelang.hpp"

namespace treevae::nn {

using nlohmann::json;

int SeqVocab::id_of(const std::string& text) const {
    auto it = index.find(text);
    if (it == index.end()) throw OutOfVocab("token not in sequence vocabulary: " + text);
    return it->second;
}

json SeqVocab::to_json() const {
    return json{{"tokens", tokens}, {"frequencies", frequencies}};
}

SeqVocab SeqVocab::from_json(const json& j) {
    SeqVocab v;
    v.tokens = j.at("tokens").get<std::vector<std::string>>();
    v.frequencies = j.at("frequencies").get<std::vector<std::int64_t>>();
    if (v.frequencies.size() != v.tokens.size())
        throw CorruptCheckpoint("sequence vocabulary tokens and frequencies disagree");
    v.rebuild_index();
    return v;
}

void SeqVocab::rebuild_index() {
    index.clear();
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i) index[tokens[i]] = i;
}

std::vector<std::string> sequence_tokens(const std::string& source) {
    std::string canon =
        treelang::serialize(treelang::anonymize_identifiers(treelang::parse_source(source)));
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < canon.size()) {
        std::size_t sp = canon.find(' ', pos);
        if (sp == std::string::npos) sp = canon.size();
        out.push_back(canon.substr(pos, sp - pos));
        pos = sp + 1;
    }
    return out;
}

SeqVocab build_seq_vocab(const std::vector<corpus::CorpusRecord>& records) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& rec : records)
        for (const auto& tok : sequence_tokens(rec.source)) ++counts[tok];

    SeqVocab v;
    v.tokens = {"<s>", "</s>", "<unk>"};
    auto n = static_cast<std::int64_t>(records.size());
    v.frequencies = {n, n, 0};  // one begin and one end sentinel per program
    for (const auto& [tok, c] : counts) {
        v.tokens.push_back(tok);
        v.frequencies.push_back(c);
    }
    v.rebuild_index();
    return v;
}

std::vector<int> to_ids(const SeqVocab& vocab, const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 2);
    ids.push_back(SeqVocab::kBos);
    for (const auto& tok : tokens) {
        auto it = vocab.index.find(tok);
        ids.push_back(it == vocab.index.end() ? SeqVocab::kUnk : it->second);
    }
    ids.push_back(SeqVocab::kEos);
    return ids;
}

std::vector<int> word_dropout(const std::vector<int>& ids, double rate, rng::Rng& r) {
    std::vector<int> out = ids;
    for (int& id : out) {
        if (id == SeqVocab::kBos || id == SeqVocab::kEos) continue;
        if (r.bernoulli(rate)) id = SeqVocab::kUnk;
    }
    return out;
}

SeqVae::SeqVae(ParamRegistry& reg, const SeqVocab* vocab, BaselineConfig cfg, rng::Rng& init)
    : vocab_(vocab), cfg_(cfg) {
    if (vocab == nullptr || vocab->size() < 3)
        throw ConfigError("sequence vocabulary must hold the three sentinels");
    if (cfg.embed_dim < 1 || cfg.hidden < 1 || cfg.latent < 1 || cfg.max_len < 1)
        throw ConfigError("baseline dimensions must be positive");

    int V = vocab->size(), E = cfg.embed_dim, H = cfg.hidden, L = cfg.latent;
    embed_ = reg.add("seq.embed", xavier_init(V, E, init));
    ew_ = reg.add("seq.enc.w", xavier_init(4 * H, E, init));
    eu_ = reg.add("seq.enc.u", xavier_init(4 * H, H, init));
    eb_ = reg.add("seq.enc.b", Tensor({4 * H}));
    mu_w_ = reg.add("seq.mu.w", xavier_init(L, H, init));
    mu_b_ = reg.add("seq.mu.b", Tensor({L}));
    lv_w_ = reg.add("seq.lv.w", xavier_init(L, H, init));
    lv_b_ = reg.add("seq.lv.b", Tensor({L}));
    zw_ = reg.add("seq.z.w", xavier_init(H, L, init));
    zb_ = reg.add("seq.z.b", Tensor({H}));
    dw_ = reg.add("seq.dec.w", xavier_init(4 * H, E, init));
    du_ = reg.add("seq.dec.u", xavier_init(4 * H, H, init));
    db_ = reg.add("seq.dec.b", Tensor({4 * H}));
    out_ = AdaptiveSoftmax(reg, "seq.out", H, vocab->frequencies, cfg.adaptive_head, init);
}

SeqVae::Posterior SeqVae::encode_sequence(Graph& g, const std::vector<int>& ids, bool training,
                                          rng::Rng* noise) const {
    if (ids.empty()) throw EmptyInput("cannot encode an empty id sequence");
    Graph::Ref table = g.param(embed_);
    Graph::State st{g.zeros(cfg_.hidden), g.zeros(cfg_.hidden)};
    for (int id : ids)
        st = g.lstm_step(g.param(ew_), g.param(eu_), g.param(eb_), cfg_.hidden,
                         g.embedding_row(table, id), st);

    Posterior p;
    p.mu = g.affine(g.param(mu_w_), st.h, g.param(mu_b_));
    p.logvar = g.affine(g.param(lv_w_), st.h, g.param(lv_b_));
    if (training) {
        Graph::Ref eps = g.constant(noise->normal_vec(cfg_.latent));
        p.z = g.add(p.mu, g.mul(g.exp_op(g.scale(p.logvar, 0.5)), eps));
    } else {
        p.z = p.mu;
    }
    return p;
}

Graph::Ref SeqVae::reconstruction_nll(Graph& g, const std::vector<int>& ids, Graph::Ref z,
                                      bool training, rng::Rng* drop) const {
    if (ids.size() < 2) throw EmptyInput("id sequence has no transitions to score");
    if (g.len(z) != cfg_.latent) throw ShapeMismatch("latent width mismatch");

    std::vector<int> inputs(ids.begin(), ids.end() - 1);
    if (training) inputs = word_dropout(inputs, cfg_.word_dropout, *drop);

    Graph::Ref table = g.param(embed_);
    Graph::State st{g.affine(g.param(zw_), z, g.param(zb_)), g.zeros(cfg_.hidden)};
    std::vector<Graph::Ref> terms;
    terms.reserve(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        st = g.lstm_step(g.param(dw_), g.param(du_), g.param(db_), cfg_.hidden,
                         g.embedding_row(table, inputs[t]), st);
        terms.push_back(out_.nll(g, st.h, ids[t + 1]));
    }
    return g.add_n(terms);
}

std::vector<int> SeqVae::decode_sequence(const std::vector<double>& z,
                                         const sampling::SamplerConfig& sampler,
                                         int max_len) const {
    sampler.validate();
    if (static_cast<int>(z.size()) != cfg_.latent) throw ShapeMismatch("latent width mismatch");
    int cap = max_len > 0 ? max_len : cfg_.max_len;
    rng::Rng r = rng::substream(sampler.seed, "decode");

    Graph g;
    Graph::Ref table = g.param(embed_);
    Graph::State st{g.affine(g.param(zw_), g.constant(z), g.param(zb_)), g.zeros(cfg_.hidden)};

    std::vector<int> ids{SeqVocab::kBos};
    int prev = SeqVocab::kBos;
    for (int produced = 0; produced < cap; ++produced) {
        st = g.lstm_step(g.param(dw_), g.param(du_), g.param(db_), cfg_.hidden,
                         g.embedding_row(table, prev), st);
        int id = sampling::sample_label(out_.log_probs(g, st.h), sampler, r);
        ids.push_back(id);
        if (id == SeqVocab::kEos) break;
        prev = id;
    }
    return ids;
}

}  // namespace treevae::nn
