#include "treevae/encoder.hpp"

namespace treevae::nn {

namespace {

const char* kTableNames[5] = {"embed.reserved", "embed.type", "embed.builtin",
                              "embed.literal", "embed.identifier"};

}  // namespace

EmbeddingSet make_embeddings(ParamRegistry& reg, const Vocab& vocab, int dim, rng::Rng& r) {
    EmbeddingSet e;
    e.dim = dim;
    for (int c = 0; c < 5; ++c) {
        int rows = static_cast<int>(vocab.tables[c].size());
        if (rows == 0) throw EmptyCategoryTable(std::string(kTableNames[c]) + " has no rows");
        e.tables[c] = reg.add(kTableNames[c], xavier_init(rows, dim, r));
    }
    return e;
}

TreeEncoder::TreeEncoder(ParamRegistry& reg, const Vocab* vocab, const EmbeddingSet& embeddings,
                         EncoderConfig cfg, rng::Rng& init)
    : vocab_(vocab), emb_(embeddings), cfg_(cfg) {
    if (cfg_.layers < 1) throw ConfigError("encoder needs at least one layer");
    if (emb_.dim != cfg_.embed_dim) throw ConfigError("embedding width disagrees with encoder");
    for (int l = 0; l < cfg_.layers; ++l) {
        Layer layer;
        int in = l == 0 ? cfg_.embed_dim : cfg_.hidden;
        std::string p = "enc.l" + std::to_string(l);
        layer.w = reg.add(p + ".w", xavier_init(4 * cfg_.hidden, in, init));
        layer.u = reg.add(p + ".u", xavier_init(4 * cfg_.hidden, cfg_.hidden, init));
        layer.b = reg.add(p + ".b", Tensor({4 * cfg_.hidden}));
        layers_.push_back(layer);
    }
    attn_w_ = reg.add("enc.attn.w", xavier_init(cfg_.hidden, cfg_.hidden, init));
    attn_b_ = reg.add("enc.attn.b", Tensor({cfg_.hidden}));
    mu_w_ = reg.add("enc.mu.w", xavier_init(cfg_.latent, cfg_.hidden, init));
    mu_b_ = reg.add("enc.mu.b", Tensor({cfg_.latent}));
    lv_w_ = reg.add("enc.lv.w", xavier_init(cfg_.latent, cfg_.hidden, init));
    lv_b_ = reg.add("enc.lv.b", Tensor({cfg_.latent}));
}

Graph::Ref TreeEncoder::embed(Graph& g, const treelang::AstNode& n) const {
    auto cat = n.is_leaf() ? n.category : treelang::TokenCategory::Reserved;
    int row = vocab_->id_of(cat, n.label);
    return g.embedding_row(g.param(emb_.tables[static_cast<int>(cat)]), row);
}

std::vector<TreeEncoder::NodeState> TreeEncoder::encode_node(
    Graph& g, const treelang::AstNode& n, bool training, rng::Rng* noise,
    std::vector<Graph::Ref>& top) const {
    std::vector<std::vector<NodeState>> child_states;
    child_states.reserve(n.children.size());
    // preorder: reserve this node's slot before descending
    std::size_t slot = top.size();
    top.push_back(Graph::kNone);
    for (const auto& ch : n.children)
        child_states.push_back(encode_node(g, ch, training, noise, top));

    int H = cfg_.hidden;
    std::vector<NodeState> states(layers_.size());
    Graph::Ref x = embed(g, n);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (l > 0) {
            x = states[l - 1].h;
            if (training && cfg_.dropout > 0.0) {
                std::vector<double> mask(H);
                double keep = 1.0 - cfg_.dropout;
                for (int i = 0; i < H; ++i)
                    mask[i] = noise->bernoulli(cfg_.dropout) ? 0.0 : 1.0 / keep;
                x = g.mul(x, g.constant(mask));
            }
        }
        const Layer& ly = layers_[l];
        Graph::Ref pre_x = g.affine(g.param(ly.w), x, g.param(ly.b));
        Graph::Ref i, o, u, c;
        if (child_states.empty()) {
            i = g.sigmoid(g.slice(pre_x, 0, H));
            o = g.sigmoid(g.slice(pre_x, 2 * H, H));
            u = g.tanh_op(g.slice(pre_x, 3 * H, H));
            c = g.mul(i, u);
        } else {
            std::vector<Graph::Ref> hs;
            for (auto& cs : child_states) hs.push_back(cs[l].h);
            Graph::Ref hsum = hs.size() == 1 ? hs[0] : g.add_n(hs);
            Graph::Ref pre_h = g.affine(g.param(ly.u), hsum);
            i = g.sigmoid(g.add(g.slice(pre_x, 0, H), g.slice(pre_h, 0, H)));
            o = g.sigmoid(g.add(g.slice(pre_x, 2 * H, H), g.slice(pre_h, 2 * H, H)));
            u = g.tanh_op(g.add(g.slice(pre_x, 3 * H, H), g.slice(pre_h, 3 * H, H)));
            std::vector<Graph::Ref> cell_terms = {g.mul(i, u)};
            Graph::Ref fx = g.slice(pre_x, H, H);
            for (auto& cs : child_states) {
                Graph::Ref fz =
                    g.sigmoid(g.add(fx, g.affine_rows(g.param(ly.u), cs[l].h, H, H)));
                cell_terms.push_back(g.mul(fz, cs[l].c));
            }
            c = g.add_n(cell_terms);
        }
        states[l] = {g.mul(o, g.tanh_op(c)), c};
    }
    top[slot] = states.back().h;
    return states;
}

TreeEncoder::Output TreeEncoder::encode(Graph& g, const treelang::AstTree& tree, bool training,
                                        rng::Rng* noise) const {
    if (training && !noise) throw ConfigError("training-mode encode needs a noise stream");
    Output out;
    encode_node(g, tree.root, training, noise, out.node_h);

    std::vector<Graph::Ref> attended;
    attended.reserve(out.node_h.size());
    for (Graph::Ref h : out.node_h)
        attended.push_back(g.mul(h, g.tanh_op(g.affine(g.param(attn_w_), h, g.param(attn_b_)))));
    Graph::Ref pooled = g.max_rows(attended);

    out.mu = g.affine(g.param(mu_w_), pooled, g.param(mu_b_));
    out.logvar = g.affine(g.param(lv_w_), pooled, g.param(lv_b_));
    if (training) {
        Graph::Ref eps = g.constant(noise->normal_vec(cfg_.latent));
        out.z = g.add(out.mu, g.mul(g.exp_op(g.scale(out.logvar, 0.5)), eps));
    } else {
        out.z = out.mu;
    }
    return out;
}

}  // namespace treevae::nn
