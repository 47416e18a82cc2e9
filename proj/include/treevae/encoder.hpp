#pragma once

#include <array>

#include "treevae/graph.hpp"
#include "treevae/nncore.hpp"
#include "treevae/treelang.hpp"

namespace treevae::nn {

// One embedding table per token category, shared by encoder and decoder.
struct EmbeddingSet {
    std::array<Param*, 5> tables{};
    int dim = 0;
};

EmbeddingSet make_embeddings(ParamRegistry& reg, const Vocab& vocab, int dim, rng::Rng& r);

struct EncoderConfig {
    int embed_dim = 64;
    int hidden = 64;
    int latent = 32;
    int layers = 3;
    double dropout = 0.2;
};

// Stacked child-sum tree recurrence over the AST, self-attentive max pooling,
// then Gaussian posterior heads. Gate layout matches lstm_cell, so a chain of
// single-child nodes reduces to the plain recurrent cell.
class TreeEncoder {
public:
    TreeEncoder(ParamRegistry& reg, const Vocab* vocab, const EmbeddingSet& embeddings,
                EncoderConfig cfg, rng::Rng& init);

    struct Output {
        Graph::Ref mu = Graph::kNone;
        Graph::Ref logvar = Graph::kNone;
        Graph::Ref z = Graph::kNone;
        std::vector<Graph::Ref> node_h;  // top layer, preorder
    };

    // training=true draws reparameterization noise and applies inter-layer
    // dropout from `noise`; eval uses the posterior mean and no masks.
    Output encode(Graph& g, const treelang::AstTree& tree, bool training,
                  rng::Rng* noise) const;

    const EncoderConfig& config() const { return cfg_; }
    Graph::Ref embed(Graph& g, const treelang::AstNode& n) const;

private:
    struct Layer {
        Param *w, *u, *b;
    };
    struct NodeState {
        Graph::Ref h, c;
    };

    std::vector<NodeState> encode_node(Graph& g, const treelang::AstNode& n, bool training,
                                       rng::Rng* noise, std::vector<Graph::Ref>& top) const;

    const Vocab* vocab_;
    EmbeddingSet emb_;
    EncoderConfig cfg_;
    std::vector<Layer> layers_;
    Param *attn_w_, *attn_b_;
    Param *mu_w_, *mu_b_, *lv_w_, *lv_b_;
};

}  // namespace treevae::nn
