#pragma once

#include <cstdint>
#include <vector>

#include "treevae/errors.hpp"
#include "treevae/rng.hpp"

namespace treevae::sampling {

enum class Mode { Greedy, Sample };

struct SamplerConfig {
    Mode mode = Mode::Greedy;
    int k = 40;
    double p = 0.9;
    double temperature = 0.7;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// Support after temperature -> top-k -> nucleus, in probability-descending
// order (ties broken by logit then lower index), probabilities renormalized.
struct FilteredDist {
    std::vector<int> support;
    std::vector<double> probs;
};

FilteredDist filter_distribution(const std::vector<double>& logits, double temperature, int k,
                                 double p);

int greedy_index(const std::vector<double>& logits);  // argmax, lowest index wins ties

int sample_filtered(const FilteredDist& dist, rng::Rng& r);  // CDF walk over the support

// Full label chain: greedy argmax, or temperature/top-k/nucleus draw.
int sample_label(const std::vector<double>& logits, const SamplerConfig& cfg, rng::Rng& r);

// Binary decision from a logit: greedy thresholds sigmoid at strictly 0.5,
// sampling draws Bernoulli(sigmoid(logit / temperature)).
bool decide(double logit, const SamplerConfig& cfg, rng::Rng& r);

}  // namespace treevae::sampling
