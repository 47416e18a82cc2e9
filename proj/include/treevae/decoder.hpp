#pragma once

#include <string>
#include <utility>
#include <vector>

#include "treevae/encoder.hpp"
#include "treevae/graph.hpp"
#include "treevae/nncore.hpp"
#include "treevae/sampling.hpp"
#include "treevae/treelang.hpp"

namespace treevae::nn {

struct DecoderConfig {
    int embed_dim = 64;
    int hidden = 64;
    int latent = 32;
    int literal_head = 32;  // head size of the literal adaptive softmax
    int max_nodes = 750;
};

// Ancestral and fraternal recurrence pairs plus the combined hidden state
// every prediction is made from.
struct DrnnState {
    Graph::State ancestral;
    Graph::State fraternal;
    Graph::Ref h_pred = Graph::kNone;
};

struct DecodeStats {
    int nodes = 0;
    int repairs = 0;     // reference with empty registry, identifier table overflow
    bool hit_cap = false;
};

// Doubly recurrent tree decoder. Grows an AST top-down from z: an ancestral
// LSTM runs parent to child, a fraternal LSTM runs along each sibling chain,
// and each node predicts offspring/sibling topology, reserved-category
// membership, and a label routed by category. After a node's label its own
// fraternal state feeds an additive gate into the running ancestral hidden,
// so later siblings and the node's own subtree see a corrected path. The
// gate accumulates along the sibling chain. Identifier declarations issue
// positional reusable IDs; references resolve by cosine similarity over a
// learned projection against the declarations registered so far, so an
// undeclared reference can never be emitted.
class TreeDecoder {
public:
    TreeDecoder(ParamRegistry& reg, const Vocab* vocab, const EmbeddingSet& embeddings,
                DecoderConfig cfg, rng::Rng& init);

    // formula-level pieces, exposed so tests can check them in isolation

    Graph::State root_state(Graph& g, Graph::Ref z) const;  // h = W z + b, c = 0
    Graph::State start_state(Graph& g) const;               // learned fraternal start
    Graph::Ref predict_hidden(Graph& g, Graph::Ref h_a, Graph::Ref h_f) const;
    // h_a + tanh(W_a h_f + b_a) * sigmoid(W_m h_f + b_m)
    Graph::Ref apply_add_gate(Graph& g, Graph::Ref h_a, Graph::Ref h_f) const;

    // One ancestral step plus one fraternal step plus the combined hidden.
    // prev_sibling == nullptr means first child: the fraternal pair is the
    // learned start state and sibling_input is ignored.
    DrnnState drnn_step(Graph& g, const Graph::State& parent, const Graph::State* prev_sibling,
                        Graph::Ref parent_input, Graph::Ref sibling_input) const;

    Graph::Ref offspring_logit(Graph& g, Graph::Ref h_pred) const;
    Graph::Ref sibling_logit(Graph& g, Graph::Ref h_pred) const;
    Graph::Ref reserved_logit(Graph& g, Graph::Ref h_pred) const;
    // reserved / type / builtin softmax logits; literals go through the
    // adaptive head instead
    Graph::Ref label_logits(Graph& g, Graph::Ref h_pred, treelang::TokenCategory cat) const;
    Graph::Ref ident_projection(Graph& g, Graph::Ref h_pred) const;
    const AdaptiveSoftmax& literal_head() const { return literal_; }

    struct ForcedLosses {
        Graph::Ref offspring = Graph::kNone;   // sum of offspring BCE
        Graph::Ref sibling = Graph::kNone;     // sum of sibling BCE
        Graph::Ref reserved = Graph::kNone;    // sum of membership BCE
        Graph::Ref label = Graph::kNone;       // sum of category NLLs
        Graph::Ref identifier = Graph::kNone;  // sum of triplet hinges
        Graph::Ref total = Graph::kNone;       // plain sum of the five
        int nodes = 0;
        int identifier_terms = 0;
        std::vector<std::pair<double, double>> topology_probs;  // (p_a, p_f) per node, preorder
        std::vector<Graph::Ref> node_h_pred;                    // preorder
    };

    // Consumes the gold tree in preorder with gold decisions. `negative`
    // draws the contrastive declaration for reference nodes; with nullptr
    // those hinge terms are skipped. The tree must be finalized, anonymized,
    // and inside the vocabulary.
    ForcedLosses teacher_forced(Graph& g, const treelang::AstTree& tree, Graph::Ref z,
                                rng::Rng* negative) const;

    // Grows a tree from a latent vector. Always returns a structurally sound
    // tree with at most max_nodes nodes (config default when <= 0). Greedy
    // mode is a pure function of (parameters, z, cap).
    treelang::AstTree decode(const std::vector<double>& z, const sampling::SamplerConfig& sampler,
                             DecodeStats* stats = nullptr, int max_nodes = 0) const;

    const DecoderConfig& config() const { return cfg_; }

private:
    struct ForcedCtx;
    struct DecodeCtx;

    Graph::Ref embed_row(Graph& g, treelang::TokenCategory cat, int row) const;
    void forced_group(Graph& g, const Graph::State& base, const std::string& parent_label,
                      const std::vector<const treelang::AstNode*>& kids, ForcedCtx& ctx) const;
    void decode_group(Graph& g, const Graph::State& base, const std::string& parent_label,
                      std::vector<treelang::AstNode>& out, bool root_group, DecodeCtx& ctx) const;

    const Vocab* vocab_;
    EmbeddingSet emb_;
    DecoderConfig cfg_;
    Param *zw_, *zb_;                      // latent -> root ancestral hidden
    Param *aw_, *au_, *ab_;                // ancestral LSTM
    Param *fw_, *fu_, *fb_;                // fraternal LSTM
    Param *fh0_, *fc0_;                    // fraternal start state
    Param *pwa_, *pba_, *pwf_, *pbf_;      // predictive combination
    Param *gwa_, *gba_, *gwm_, *gbm_;      // add gate
    Param *ta_w_, *ta_b_, *tf_w_, *tf_b_;  // topology heads
    Param *res_w_, *res_b_;                // reserved membership head
    Param *lab_w_[5] = {}, *lab_b_[5] = {};  // reserved/type/builtin label heads
    Param *id_w_, *id_b_;                  // identifier similarity projection
    AdaptiveSoftmax literal_;
};

}  // namespace treevae::nn
