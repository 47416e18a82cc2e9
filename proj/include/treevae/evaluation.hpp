#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "treevae/corpus.hpp"
#include "treevae/sampling.hpp"
#include "treevae/training.hpp"
#include "treevae/treelang.hpp"

namespace treevae::eval {

// Sentence-level cumulative BLEU: geometric mean of modified n-gram
// precisions for n = 1..max_n with brevity penalty; zero precisions are
// smoothed to 1e-9. Empty candidate scores 0; empty reference throws
// EmptyReference; max_n outside 1..4 throws OutOfRange.
double bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            int max_n);

// Splits a canonical single-space token string.
std::vector<std::string> split_tokens(const std::string& canonical);

// Histogram of validator error kinds over the failing reports; passing
// reports contribute nothing.
std::map<std::string, int> error_taxonomy(const std::vector<treelang::ValidationReport>& reports);

struct EvalOptions {
    sampling::SamplerConfig sampler;  // greedy unless configured otherwise
    bool corrected = false;
    int n_random = 0;  // prior decodes per bucket for the correction; 0 = bucket size
    std::uint64_t seed = 0;
};

struct BucketScores {
    std::string bucket;
    int count = 0;
    std::array<double, 4> raw{};  // mean per-record BLEU-1..4
    double compile_rate = 0.0;
    std::array<double, 4> correction{};
    std::array<double, 4> corrected{};
};

struct EvalReport {
    std::string model_kind;
    int count = 0;
    std::array<double, 4> raw{};
    double compile_rate = 0.0;
    bool has_correction = false;
    std::array<double, 4> correction{};
    std::array<double, 4> corrected{};  // max(0, raw - correction)
    std::vector<BucketScores> buckets;  // non-empty buckets, small to large

    nlohmann::json to_json() const;
    // fixed layout, reproducible bytes; bucket rows optional
    std::string to_text(bool with_buckets = true) const;
};

// Reconstruction scoring: encode each test program to its posterior mean,
// decode, and compare token streams against the anonymized original.
// Compile rate is the fraction whose decode passes validation (sequence
// decodes that fail to parse count as not compiled but still score BLEU on
// the raw token stream). With opt.corrected, per-bucket correction scores
// come from decoding z ~ N(0, I) against the same references.
EvalReport evaluate_tree(const train::TreeModel& m,
                         const std::vector<corpus::CorpusRecord>& test, const EvalOptions& opt);
EvalReport evaluate_seq(const train::SeqModel& m, const std::vector<corpus::CorpusRecord>& test,
                        const EvalOptions& opt);

struct GenerativeModeReport {
    double compile_rate = 0.0;
    double wellformed_rate = 0.0;  // structurally sound trees / parseable sequences
    std::map<std::string, int> errors;
};

// Prior-generation study over n draws z ~ N(0, I): greedy decoding and
// stochastic sampling at k=40, p=0.9, temperature=0.7.
struct GenerativeReport {
    std::string model_kind;
    int n = 0;
    GenerativeModeReport greedy;
    GenerativeModeReport sampled;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

GenerativeReport generative_tree(const train::TreeModel& m, int n, std::uint64_t seed);
GenerativeReport generative_seq(const train::SeqModel& m, int n, std::uint64_t seed);

}  // namespace treevae::eval
