#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "treevae/baseline.hpp"
#include "treevae/corpus.hpp"
#include "treevae/decoder.hpp"
#include "treevae/encoder.hpp"

namespace treevae::train {

// Raw (unweighted) term values of one example or one epoch mean.
struct LossBreakdown {
    double l_a = 0.0;          // offspring topology BCE
    double l_f = 0.0;          // sibling topology BCE
    double l_r = 0.0;          // reserved membership BCE
    double l_label = 0.0;      // label NLL (token NLL for the sequence model)
    double l_ident = 0.0;      // identifier triplet hinge
    double l_rec_total = 0.0;  // weighted sum of the five
    double kl = 0.0;
    double w = 0.0;  // KL weight in force
    double total = 0.0;        // l_rec_total + w * kl
};

// Per-term multipliers on the reconstruction components. All 1.0 by default;
// setting one to 0 removes exactly that term from value and gradient.
struct LossWeights {
    double offspring = 1.0;
    double sibling = 1.0;
    double reserved = 1.0;
    double label = 1.0;
    double identifier = 1.0;
};

struct TrainConfig {
    double lr = 1e-3;
    int epochs = 10;
    int patience = 3;
    int batch_size = 32;
    int cycles = 4;
    double ramp_fraction = 0.5;
    double word_dropout = 0.25;  // sequence model only
    std::uint64_t seed = 0;
    LossWeights weights;

    void validate() const;  // throws ConfigError
};

// Closed-form KL(q(z|x) || N(0, I)) for a diagonal Gaussian posterior,
// 0.5 * sum(exp(lv) + mu^2 - lv - 1). Twin of the tape op, kept as an
// independent reference.
double kl_divergence(const std::vector<double>& mu, const std::vector<double>& logvar);

// Elementary per-node loss pieces in plain doubles. Probabilities are
// clamped to [1e-7, 1 - 1e-7] before the log.
double binary_cross_entropy(double p, double truth);
double triplet_hinge(double s_true, double s_negative);

// Weight of the KL term at a global step. Each of `cycles` equal spans of
// total_steps restarts at 0, ramps linearly to 1 over ramp_fraction of the
// span, and holds 1 for the rest.
double cyclic_kl_weight(long step, long total_steps, int cycles, double ramp_fraction);

// Stops after `patience` epochs without a strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}
    bool update(double valid_loss);  // true when this epoch is a new best
    bool exhausted() const { return since_best_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }

private:
    int patience_;
    int seen_ = 0, best_epoch_ = 0, since_best_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

// Batches of example indices grouped by bucket key: indices are shuffled
// within each bucket, cut into runs of at most batch_size, and the batch
// order is shuffled. Every index appears exactly once; no batch mixes keys.
std::vector<std::vector<int>> bucket_batches(const std::vector<int>& bucket_key, int batch_size,
                                             rng::Rng& r);

// Tree VAE assembled from shared embeddings; owns its vocabulary and
// parameters. Not movable: encoder and decoder hold pointers into it.
class TreeModel {
public:
    TreeModel(nn::Vocab vocab, nn::EncoderConfig enc_cfg, nn::DecoderConfig dec_cfg,
              std::uint64_t seed);
    TreeModel(const TreeModel&) = delete;
    TreeModel& operator=(const TreeModel&) = delete;

    nn::Vocab vocab;
    nn::EncoderConfig enc_cfg;
    nn::DecoderConfig dec_cfg;
    nn::ParamRegistry reg;
    nn::EmbeddingSet emb;
    std::unique_ptr<nn::TreeEncoder> encoder;
    std::unique_ptr<nn::TreeDecoder> decoder;
};

// Sequence VAE counterpart.
class SeqModel {
public:
    SeqModel(nn::SeqVocab vocab, nn::BaselineConfig cfg, std::uint64_t seed);
    SeqModel(const SeqModel&) = delete;
    SeqModel& operator=(const SeqModel&) = delete;

    nn::SeqVocab vocab;
    nn::BaselineConfig cfg;
    nn::ParamRegistry reg;
    std::unique_ptr<nn::SeqVae> vae;
};

inline constexpr const char* kTreeKind = "tree2tree";
inline constexpr const char* kSeqKind = "seq2seq";

void save_tree_model(const std::string& path, const TreeModel& m);
std::unique_ptr<TreeModel> load_tree_model(const std::string& path);  // KindMismatch
void save_seq_model(const std::string& path, const SeqModel& m);
std::unique_ptr<SeqModel> load_seq_model(const std::string& path);
std::string checkpoint_kind(const std::string& path);

struct ExampleLoss {
    nn::Graph::Ref total = nn::Graph::kNone;
    LossBreakdown values;
};

// Full per-example objective on the tape: weighted reconstruction terms plus
// w * KL. Eval mode (training=false) encodes to the posterior mean; a null
// `negative` skips the identifier hinge terms.
ExampleLoss tree_example_loss(nn::Graph& g, const TreeModel& m, const treelang::AstTree& tree,
                              double w, const LossWeights& lw, bool training, rng::Rng* noise,
                              rng::Rng* negative);

// Sequence counterpart; the token NLL is reported under l_label.
ExampleLoss seq_example_loss(nn::Graph& g, const SeqModel& m, const std::vector<int>& ids,
                             double w, bool training, rng::Rng* noise, rng::Rng* drop);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;  // mean per train example, annealed objective
    double valid_loss = 0.0;  // mean per valid example at w = 1
    double kl = 0.0;          // mean raw KL on train
    double w_mean = 0.0;      // mean KL weight over the epoch's steps
    nlohmann::json to_json() const;
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;
    int best_epoch = 0;
    double best_valid = std::numeric_limits<double>::infinity();
};

// Adam loop with bucket batching, batch-sum gradients, cyclic KL annealing
// laid over the nominal epoch budget, and early stopping on validation loss.
// The model is left holding the best-validation parameters. Deterministic
// per config seed. Throws DivergedLoss on any non-finite loss, EmptySplit on
// an empty train or valid split. metrics_log, when given, receives one JSON
// line per epoch.
TrainResult train_tree(TreeModel& m, const corpus::CorpusSplits& splits, const TrainConfig& cfg,
                       std::ostream* metrics_log = nullptr);
TrainResult train_seq(SeqModel& m, const corpus::CorpusSplits& splits, const TrainConfig& cfg,
                      std::ostream* metrics_log = nullptr);

// Pure-autoencoder memorization: full-batch Adam steps on fixed trees with
// the KL off and posterior-mean codes. Stops early once the mean per-node
// reconstruction loss falls below stop_below (0 runs all steps); returns
// that final mean.
double overfit_trees(TreeModel& m, const std::vector<treelang::AstTree>& trees, int steps,
                     double lr, std::uint64_t seed, double stop_below = 0.0);

// Flat key=value run configuration: training fields plus model dimensions.
// Unknown keys and malformed values are ConfigErrors.
struct RunConfig {
    TrainConfig train;
    int embed_dim = 64;
    int hidden = 64;
    int latent = 32;
    int layers = 3;
    double enc_dropout = 0.2;
    int literal_head = 32;
    int adaptive_head = 64;
    int max_nodes = 750;
    int max_len = 750;

    nn::EncoderConfig encoder_config() const;
    nn::DecoderConfig decoder_config() const;
    nn::BaselineConfig baseline_config() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);  // ConfigError when unreadable

}  // namespace treevae::train
