#pragma once

#include <map>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "treevae/corpus.hpp"
#include "treevae/graph.hpp"
#include "treevae/nncore.hpp"
#include "treevae/sampling.hpp"

namespace treevae::nn {

// Flat surface-token vocabulary for the sequence model: begin / end / unknown
// sentinels first, then the corpus tokens sorted lexicographically.
struct SeqVocab {
    std::vector<std::string> tokens;
    std::map<std::string, int> index;
    std::vector<std::int64_t> frequencies;  // aligned with tokens

    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kUnk = 2;

    int size() const { return static_cast<int>(tokens.size()); }
    int id_of(const std::string& text) const;  // throws OutOfVocab
    nlohmann::json to_json() const;
    static SeqVocab from_json(const nlohmann::json& j);
    void rebuild_index();
};

// Tokens of the identifier-anonymized program, as the sequence model sees it.
std::vector<std::string> sequence_tokens(const std::string& source);

SeqVocab build_seq_vocab(const std::vector<corpus::CorpusRecord>& records);

// Sentinel-wrapped id sequence for one program.
std::vector<int> to_ids(const SeqVocab& vocab, const std::vector<std::string>& tokens);

// Each non-sentinel token is independently replaced by the unknown id with
// probability rate. Targets are never touched, only what the decoder reads.
std::vector<int> word_dropout(const std::vector<int>& ids, double rate, rng::Rng& r);

struct BaselineConfig {
    int embed_dim = 64;
    int hidden = 64;
    int latent = 32;
    int adaptive_head = 64;  // head size of the output adaptive softmax
    double word_dropout = 0.25;
    int max_len = 750;  // generated tokens after the begin sentinel
};

// Sequence VAE: single-layer LSTM encoder over the token ids, Gaussian
// latent, and a single-layer LSTM language model whose initial hidden state
// is a linear map of z. Output layer is an adaptive softmax over the tokens.
class SeqVae {
public:
    SeqVae(ParamRegistry& reg, const SeqVocab* vocab, BaselineConfig cfg, rng::Rng& init);

    struct Posterior {
        Graph::Ref mu = Graph::kNone;
        Graph::Ref logvar = Graph::kNone;
        Graph::Ref z = Graph::kNone;
    };

    // training=true draws reparameterization noise from `noise`; evaluation
    // uses the posterior mean.
    Posterior encode_sequence(Graph& g, const std::vector<int>& ids, bool training,
                              rng::Rng* noise) const;

    // Teacher-forced negative log likelihood, summed over the sequence.
    // training=true corrupts decoder inputs with word dropout from `drop`.
    Graph::Ref reconstruction_nll(Graph& g, const std::vector<int>& ids, Graph::Ref z,
                                  bool training, rng::Rng* drop) const;

    // Autoregressive generation from the begin sentinel until the end
    // sentinel or the length cap. Returned ids include both sentinels when
    // generation terminates on its own.
    std::vector<int> decode_sequence(const std::vector<double>& z,
                                     const sampling::SamplerConfig& sampler,
                                     int max_len = 0) const;

    const BaselineConfig& config() const { return cfg_; }
    const AdaptiveSoftmax& output_head() const { return out_; }

private:
    const SeqVocab* vocab_;
    BaselineConfig cfg_;
    Param* embed_;
    Param *ew_, *eu_, *eb_;  // encoder LSTM
    Param *mu_w_, *mu_b_, *lv_w_, *lv_b_;
    Param *zw_, *zb_;        // latent -> decoder start hidden
    Param *dw_, *du_, *db_;  // decoder LSTM
    AdaptiveSoftmax out_;
};

}  // namespace treevae::nn
