#include "treevae/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace treevae::sampling {

void SamplerConfig::validate() const {
    if (k < 1) throw ConfigError("sampler k must be at least 1");
    if (!(p > 0.0) || p > 1.0) throw ConfigError("sampler p must lie in (0,1]");
    if (!(temperature > 0.0)) throw ConfigError("sampler temperature must be positive");
}

FilteredDist filter_distribution(const std::vector<double>& logits, double temperature, int k,
                                 double p) {
    if (logits.empty()) throw EmptyInput("cannot sample from an empty distribution");
    if (k < 1 || !(p > 0.0) || p > 1.0 || !(temperature > 0.0))
        throw ConfigError("bad sampling parameters");
    int n = static_cast<int>(logits.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (logits[a] != logits[b]) return logits[a] > logits[b];
        return a < b;
    });
    int keep = std::min(k, n);
    order.resize(keep);

    // softmax of kept logits at the given temperature
    std::vector<double> probs(keep);
    double mx = logits[order[0]] / temperature;
    double sum = 0;
    for (int i = 0; i < keep; ++i) {
        probs[i] = std::exp(logits[order[i]] / temperature - mx);
        sum += probs[i];
    }
    for (auto& q : probs) q /= sum;

    // smallest probability-descending prefix reaching mass p
    int cut = keep;
    double cum = 0;
    for (int i = 0; i < keep; ++i) {
        cum += probs[i];
        if (cum >= p) {
            cut = i + 1;
            break;
        }
    }
    order.resize(cut);
    probs.resize(cut);
    double mass = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (auto& q : probs) q /= mass;

    FilteredDist out;
    out.support = std::move(order);
    out.probs = std::move(probs);
    return out;
}

int greedy_index(const std::vector<double>& logits) {
    if (logits.empty()) throw EmptyInput("cannot take the argmax of nothing");
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

int sample_filtered(const FilteredDist& dist, rng::Rng& r) {
    if (dist.support.empty()) throw EmptyInput("empty filtered support");
    double u = r.uniform();
    double cum = 0;
    for (std::size_t i = 0; i < dist.support.size(); ++i) {
        cum += dist.probs[i];
        if (u < cum) return dist.support[i];
    }
    return dist.support.back();
}

int sample_label(const std::vector<double>& logits, const SamplerConfig& cfg, rng::Rng& r) {
    if (cfg.mode == Mode::Greedy) return greedy_index(logits);
    auto dist = filter_distribution(logits, cfg.temperature, cfg.k, cfg.p);
    return sample_filtered(dist, r);
}

bool decide(double logit, const SamplerConfig& cfg, rng::Rng& r) {
    if (cfg.mode == Mode::Greedy) return logit > 0.0;
    double scaled = logit / cfg.temperature;
    double prob = scaled >= 0 ? 1.0 / (1.0 + std::exp(-scaled))
                              : std::exp(scaled) / (1.0 + std::exp(scaled));
    return r.bernoulli(prob);
}

}  // namespace treevae::sampling
