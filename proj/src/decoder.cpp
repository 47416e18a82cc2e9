#include "treevae/decoder.hpp"

#include <cmath>
#include <map>
#include <utility>

namespace treevae::nn {

using treelang::AstNode;
using treelang::AstTree;
using treelang::TokenCategory;

namespace {

double sigmoid_d(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// plain-double twin of the graph cosine op, same vanishing-norm convention
double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
    double na = 0, nb = 0, d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
        d += a[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return d / (na * nb);
}

}  // namespace

TreeDecoder::TreeDecoder(ParamRegistry& reg, const Vocab* vocab, const EmbeddingSet& embeddings,
                         DecoderConfig cfg, rng::Rng& init)
    : vocab_(vocab), emb_(embeddings), cfg_(cfg) {
    if (emb_.dim != cfg_.embed_dim) throw ConfigError("embedding width disagrees with decoder");
    if (cfg_.max_nodes < 1) throw ConfigError("decoder needs a positive node budget");
    int H = cfg_.hidden, E = cfg_.embed_dim, L = cfg_.latent;
    zw_ = reg.add("dec.z.w", xavier_init(H, L, init));
    zb_ = reg.add("dec.z.b", Tensor({H}));
    aw_ = reg.add("dec.a.w", xavier_init(4 * H, E, init));
    au_ = reg.add("dec.a.u", xavier_init(4 * H, H, init));
    ab_ = reg.add("dec.a.b", Tensor({4 * H}));
    fw_ = reg.add("dec.f.w", xavier_init(4 * H, E, init));
    fu_ = reg.add("dec.f.u", xavier_init(4 * H, H, init));
    fb_ = reg.add("dec.f.b", Tensor({4 * H}));
    fh0_ = reg.add("dec.f.h0", Tensor({H}));
    fc0_ = reg.add("dec.f.c0", Tensor({H}));
    pwa_ = reg.add("dec.pred.wa", xavier_init(H, H, init));
    pba_ = reg.add("dec.pred.ba", Tensor({H}));
    pwf_ = reg.add("dec.pred.wf", xavier_init(H, H, init));
    pbf_ = reg.add("dec.pred.bf", Tensor({H}));
    gwa_ = reg.add("dec.gate.wa", xavier_init(H, H, init));
    gba_ = reg.add("dec.gate.ba", Tensor({H}));
    gwm_ = reg.add("dec.gate.wm", xavier_init(H, H, init));
    gbm_ = reg.add("dec.gate.bm", Tensor({H}));
    ta_w_ = reg.add("dec.topo.a.w", xavier_init(1, H, init));
    ta_b_ = reg.add("dec.topo.a.b", Tensor({1}));
    tf_w_ = reg.add("dec.topo.f.w", xavier_init(1, H, init));
    tf_b_ = reg.add("dec.topo.f.b", Tensor({1}));
    res_w_ = reg.add("dec.res.w", xavier_init(1, H, init));
    res_b_ = reg.add("dec.res.b", Tensor({1}));
    const struct {
        const char* name;
        TokenCategory cat;
    } dense[3] = {{"dec.label.reserved", TokenCategory::Reserved},
                  {"dec.label.type", TokenCategory::Type},
                  {"dec.label.builtin", TokenCategory::Builtin}};
    for (const auto& d : dense) {
        int rows = vocab_->size(d.cat);
        if (rows == 0) throw EmptyCategoryTable(std::string(d.name) + " covers an empty table");
        int c = static_cast<int>(d.cat);
        lab_w_[c] = reg.add(std::string(d.name) + ".w", xavier_init(rows, H, init));
        lab_b_[c] = reg.add(std::string(d.name) + ".b", Tensor({rows}));
    }
    literal_ = AdaptiveSoftmax(reg, "dec.label.literal", H, vocab_->literal_counts,
                               cfg_.literal_head, init);
    id_w_ = reg.add("dec.ident.w", xavier_init(H, H, init));
    id_b_ = reg.add("dec.ident.b", Tensor({H}));
}

Graph::State TreeDecoder::root_state(Graph& g, Graph::Ref z) const {
    Graph::State s;
    s.h = g.affine(g.param(zw_), z, g.param(zb_));
    s.c = g.zeros(cfg_.hidden);
    return s;
}

Graph::State TreeDecoder::start_state(Graph& g) const {
    return Graph::State{g.param(fh0_), g.param(fc0_)};
}

Graph::Ref TreeDecoder::predict_hidden(Graph& g, Graph::Ref h_a, Graph::Ref h_f) const {
    Graph::Ref a = g.affine(g.param(pwa_), h_a, g.param(pba_));
    Graph::Ref f = g.affine(g.param(pwf_), h_f, g.param(pbf_));
    return g.tanh_op(g.add(a, f));
}

Graph::Ref TreeDecoder::apply_add_gate(Graph& g, Graph::Ref h_a, Graph::Ref h_f) const {
    Graph::Ref a = g.tanh_op(g.affine(g.param(gwa_), h_f, g.param(gba_)));
    Graph::Ref m = g.sigmoid(g.affine(g.param(gwm_), h_f, g.param(gbm_)));
    return g.add(h_a, g.mul(a, m));
}

DrnnState TreeDecoder::drnn_step(Graph& g, const Graph::State& parent,
                                 const Graph::State* prev_sibling, Graph::Ref parent_input,
                                 Graph::Ref sibling_input) const {
    DrnnState out;
    out.ancestral =
        g.lstm_step(g.param(aw_), g.param(au_), g.param(ab_), cfg_.hidden, parent_input, parent);
    if (prev_sibling)
        out.fraternal = g.lstm_step(g.param(fw_), g.param(fu_), g.param(fb_), cfg_.hidden,
                                    sibling_input, *prev_sibling);
    else
        out.fraternal = start_state(g);
    out.h_pred = predict_hidden(g, out.ancestral.h, out.fraternal.h);
    return out;
}

Graph::Ref TreeDecoder::offspring_logit(Graph& g, Graph::Ref h_pred) const {
    return g.affine(g.param(ta_w_), h_pred, g.param(ta_b_));
}

Graph::Ref TreeDecoder::sibling_logit(Graph& g, Graph::Ref h_pred) const {
    return g.affine(g.param(tf_w_), h_pred, g.param(tf_b_));
}

Graph::Ref TreeDecoder::reserved_logit(Graph& g, Graph::Ref h_pred) const {
    return g.affine(g.param(res_w_), h_pred, g.param(res_b_));
}

Graph::Ref TreeDecoder::label_logits(Graph& g, Graph::Ref h_pred, TokenCategory cat) const {
    int c = static_cast<int>(cat);
    if (!lab_w_[c])
        throw Error(std::string("no dense label head for category ") +
                    treelang::category_name(cat));
    return g.affine(g.param(lab_w_[c]), h_pred, g.param(lab_b_[c]));
}

Graph::Ref TreeDecoder::ident_projection(Graph& g, Graph::Ref h_pred) const {
    return g.affine(g.param(id_w_), h_pred, g.param(id_b_));
}

Graph::Ref TreeDecoder::embed_row(Graph& g, TokenCategory cat, int row) const {
    return g.embedding_row(g.param(emb_.tables[static_cast<int>(cat)]), row);
}

// ---------------------------------------------------------------------------
// teacher forcing

struct TreeDecoder::ForcedCtx {
    std::vector<Graph::Ref> topo_a, topo_f, res, lab, ident;
    std::vector<std::pair<double, double>> probs;
    std::vector<Graph::Ref> hpred;
    std::vector<Graph::Ref> reg_proj;  // registry, declaration order
    std::map<int, int> decl_slot;      // declaration node id -> registry slot
    const treelang::Bindings* bindings = nullptr;
    rng::Rng* negative = nullptr;
};

void TreeDecoder::forced_group(Graph& g, const Graph::State& base,
                               const std::string& parent_label,
                               const std::vector<const AstNode*>& kids, ForcedCtx& ctx) const {
    int H = cfg_.hidden;
    Graph::Ref r = base.h;
    Graph::State frat;
    for (std::size_t i = 0; i < kids.size(); ++i) {
        const AstNode& n = *kids[i];
        if (i == 0) {
            frat = start_state(g);
        } else {
            const AstNode& prev = *kids[i - 1];
            Graph::Ref px = embed_row(g, prev.category, vocab_->id_of(prev.category, prev.label));
            frat = g.lstm_step(g.param(fw_), g.param(fu_), g.param(fb_), H, px, frat);
        }
        Graph::Ref hp = predict_hidden(g, r, frat.h);
        ctx.hpred.push_back(hp);

        bool truth_child = !n.is_leaf();
        bool truth_sib = i + 1 < kids.size();
        Graph::Ref la = offspring_logit(g, hp);
        Graph::Ref lf = sibling_logit(g, hp);
        ctx.probs.emplace_back(sigmoid_d(g.scalar(la)), sigmoid_d(g.scalar(lf)));
        ctx.topo_a.push_back(g.bce_logit(la, truth_child ? 1.0 : 0.0));
        ctx.topo_f.push_back(g.bce_logit(lf, truth_sib ? 1.0 : 0.0));

        bool truth_res = n.category == TokenCategory::Reserved;
        ctx.res.push_back(g.bce_logit(reserved_logit(g, hp), truth_res ? 1.0 : 0.0));

        bool ident = n.is_leaf() && n.category == TokenCategory::Identifier;
        bool decl = ident && treelang::is_declaration_site(parent_label, static_cast<int>(i));
        if (decl) {
            int slot = static_cast<int>(ctx.reg_proj.size());
            ctx.reg_proj.push_back(ident_projection(g, hp));
            ctx.decl_slot[n.node_id] = slot;
        } else if (ident) {
            // reference: hinge against one sampled negative declaration
            auto bound = ctx.bindings->reference_to_declaration.find(n.node_id);
            int nreg = static_cast<int>(ctx.reg_proj.size());
            if (bound != ctx.bindings->reference_to_declaration.end() && nreg >= 2 &&
                ctx.negative) {
                auto slot = ctx.decl_slot.find(bound->second);
                if (slot != ctx.decl_slot.end()) {
                    int true_slot = slot->second;
                    std::int64_t pick = ctx.negative->uniform_int(0, nreg - 2);
                    int neg_slot = static_cast<int>(pick >= true_slot ? pick + 1 : pick);
                    Graph::Ref py = ident_projection(g, hp);
                    Graph::Ref s_true = g.cosine(py, ctx.reg_proj[true_slot]);
                    Graph::Ref s_neg = g.cosine(py, ctx.reg_proj[neg_slot]);
                    ctx.ident.push_back(g.relu(g.sub(s_neg, s_true)));
                }
            }
        } else {
            int row = vocab_->id_of(n.category, n.label);
            if (n.category == TokenCategory::Literal)
                ctx.lab.push_back(literal_.nll(g, hp, row));
            else
                ctx.lab.push_back(g.nll_log_softmax(label_logits(g, hp, n.category), row));
        }

        r = apply_add_gate(g, r, frat.h);
        if (!n.is_leaf()) {
            Graph::Ref x = embed_row(g, n.category, vocab_->id_of(n.category, n.label));
            Graph::State child_base = g.lstm_step(g.param(aw_), g.param(au_), g.param(ab_), H, x,
                                                  Graph::State{r, base.c});
            std::vector<const AstNode*> ck;
            ck.reserve(n.children.size());
            for (const auto& c : n.children) ck.push_back(&c);
            forced_group(g, child_base, n.label, ck, ctx);
        }
    }
}

TreeDecoder::ForcedLosses TreeDecoder::teacher_forced(Graph& g, const AstTree& tree, Graph::Ref z,
                                                      rng::Rng* negative) const {
    treelang::Bindings bind = treelang::resolve_bindings(tree);
    ForcedCtx ctx;
    ctx.bindings = &bind;
    ctx.negative = negative;
    forced_group(g, root_state(g, z), "", {&tree.root}, ctx);

    auto sum = [&g](const std::vector<Graph::Ref>& v) {
        if (v.empty()) return g.constant_scalar(0.0);
        if (v.size() == 1) return v[0];
        return g.add_n(v);
    };
    ForcedLosses out;
    out.offspring = sum(ctx.topo_a);
    out.sibling = sum(ctx.topo_f);
    out.reserved = sum(ctx.res);
    out.label = sum(ctx.lab);
    out.identifier = sum(ctx.ident);
    out.total = g.add_n({out.offspring, out.sibling, out.reserved, out.label, out.identifier});
    out.nodes = static_cast<int>(ctx.probs.size());
    out.identifier_terms = static_cast<int>(ctx.ident.size());
    out.topology_probs = std::move(ctx.probs);
    out.node_h_pred = std::move(ctx.hpred);
    return out;
}

// ---------------------------------------------------------------------------
// free decoding

struct TreeDecoder::DecodeCtx {
    sampling::SamplerConfig cfg;
    rng::Rng rng{0};
    int budget = 0;
    int count = 0;
    DecodeStats stats;
    std::vector<std::vector<double>> proj;  // identifier registry
    std::vector<std::string> labels;
    std::vector<int> rows;
};

void TreeDecoder::decode_group(Graph& g, const Graph::State& base,
                               const std::string& parent_label, std::vector<AstNode>& out,
                               bool root_group, DecodeCtx& ctx) const {
    int H = cfg_.hidden;
    auto marker = treelang::marker_category(parent_label);
    Graph::Ref r = base.h;
    Graph::State frat;
    bool first = true;
    bool more = true;
    int prev_row = 0;
    TokenCategory prev_cat = TokenCategory::Reserved;
    while (more) {
        if (ctx.count >= ctx.budget) {
            // a committed sibling no longer fits in the node budget
            ctx.stats.hit_cap = true;
            return;
        }
        if (first)
            frat = start_state(g);
        else
            frat = g.lstm_step(g.param(fw_), g.param(fu_), g.param(fb_), H,
                               embed_row(g, prev_cat, prev_row), frat);
        first = false;
        ++ctx.count;
        Graph::Ref hp = predict_hidden(g, r, frat.h);
        bool at_cap = ctx.count >= ctx.budget;

        bool has_child;
        if (marker) {
            has_child = false;  // marker children are leaves by construction
        } else if (at_cap) {
            has_child = false;
            ctx.stats.hit_cap = true;
        } else {
            has_child = sampling::decide(g.scalar(offspring_logit(g, hp)), ctx.cfg, ctx.rng);
        }
        bool has_sibling;
        if (root_group) {
            has_sibling = false;
        } else if (at_cap) {
            has_sibling = false;
            ctx.stats.hit_cap = true;
        } else {
            has_sibling = sampling::decide(g.scalar(sibling_logit(g, hp)), ctx.cfg, ctx.rng);
        }

        TokenCategory cat;
        bool is_decl = false;
        if (has_child)
            cat = TokenCategory::Reserved;  // internal nodes are Reserved by the structural law
        else if (marker)
            cat = *marker;
        else if (sampling::decide(g.scalar(reserved_logit(g, hp)), ctx.cfg, ctx.rng))
            cat = TokenCategory::Reserved;
        else {
            cat = TokenCategory::Identifier;
            is_decl = treelang::is_declaration_site(parent_label, static_cast<int>(out.size()));
        }

        std::string label;
        int row = 0;
        if (cat == TokenCategory::Identifier) {
            std::vector<double> py = g.value(ident_projection(g, hp));
            int table = vocab_->size(TokenCategory::Identifier);
            if (!is_decl && ctx.labels.empty()) {
                is_decl = true;  // nothing to refer to yet: declare instead
                ++ctx.stats.repairs;
            }
            if (is_decl) {
                int k = static_cast<int>(ctx.labels.size());
                label = "ID" + std::to_string(k);
                row = std::min(k, table - 1);
                if (k >= table) ++ctx.stats.repairs;  // past the embedding table
                ctx.labels.push_back(label);
                ctx.rows.push_back(row);
                ctx.proj.push_back(std::move(py));
            } else {
                int best = 0;
                double best_s = -2.0;
                for (int j = 0; j < static_cast<int>(ctx.proj.size()); ++j) {
                    double s = cos_sim(py, ctx.proj[j]);
                    if (s > best_s) {
                        best_s = s;
                        best = j;
                    }
                }
                label = ctx.labels[best];
                row = ctx.rows[best];
            }
        } else {
            std::vector<double> scores;
            if (cat == TokenCategory::Literal)
                scores = literal_.log_probs(g, hp);
            else
                scores = g.value(label_logits(g, hp, cat));
            row = sampling::sample_label(scores, ctx.cfg, ctx.rng);
            label = vocab_->table(cat)[row];
        }

        r = apply_add_gate(g, r, frat.h);
        out.emplace_back();
        AstNode& node = out.back();
        node.label = label;
        node.category = cat;
        if (has_child) {
            Graph::State child_base = g.lstm_step(g.param(aw_), g.param(au_), g.param(ab_), H,
                                                  embed_row(g, cat, row),
                                                  Graph::State{r, base.c});
            decode_group(g, child_base, label, node.children, false, ctx);
        }
        prev_row = row;
        prev_cat = cat;
        more = has_sibling;
    }
}

AstTree TreeDecoder::decode(const std::vector<double>& z, const sampling::SamplerConfig& sampler,
                            DecodeStats* stats, int max_nodes) const {
    sampler.validate();
    if (static_cast<int>(z.size()) != cfg_.latent)
        throw ShapeMismatch("latent vector width disagrees with the decoder");
    DecodeCtx ctx;
    ctx.cfg = sampler;
    ctx.rng = rng::substream(sampler.seed, "decode");
    ctx.budget = max_nodes > 0 ? max_nodes : cfg_.max_nodes;
    Graph g;
    std::vector<AstNode> top;
    decode_group(g, root_state(g, g.constant(z)), "", top, true, ctx);
    AstTree tree;
    tree.root = std::move(top.front());
    tree.finalize();
    ctx.stats.nodes = tree.size;
    if (stats) *stats = ctx.stats;
    return tree;
}

}  // namespace treevae::nn
