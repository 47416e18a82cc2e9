#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treevae/sampling.hpp"
#include "treevae/training.hpp"
#include "treevae/treelang.hpp"

namespace treevae::search {

// One unit test for a decoded program: read() consumes input, print()
// must reproduce expected_output exactly.
struct FitnessCase {
    std::vector<std::int64_t> input;
    std::vector<std::int64_t> expected_output;
};

// One case per line, "inputs -> outputs" with space-separated integers on
// either side (either may be empty). Blank lines and # comments are
// skipped. Malformed lines are ConfigErrors.
std::vector<FitnessCase> parse_cases(const std::string& text);
std::vector<FitnessCase> load_cases(const std::string& path);

struct SearchConfig {
    int population = 50;
    int generations = 20;
    double mutation_sigma = 0.1;
    double elite_fraction = 0.1;
    std::uint64_t seed = 0;
    int max_nodes = 0;                // decode budget; 0 = decoder default
    sampling::SamplerConfig sampler;  // greedy by default; sampling widens the search

    void validate() const;  // ConfigError
};

// Fraction of cases the program passes: status Ok and exact output match.
// Trees that fail validation score 0; there is no partial credit within a
// case. Deterministic for a fixed tree and case set.
double fitness(const treelang::AstTree& tree, const std::vector<FitnessCase>& cases);

struct GenerationStats {
    int generation = 0;  // 0 = the initial population
    double best = 0.0;
    double mean = 0.0;
};

struct SearchResult {
    std::vector<double> best_z;
    treelang::AstTree best_tree;
    double best_fitness = 0.0;
    std::vector<GenerationStats> stats;  // generations + 1 entries
};

// Evolution over latent vectors: the initial population is z ~ N(0, I);
// each generation every member spawns one offspring perturbed by
// N(0, mutation_sigma^2 I), and the next population keeps the best
// elite_fraction of the parents unchanged plus the best offspring. Best
// fitness never decreases. Deterministic under cfg.seed; in sampling mode
// each decode draws its own derived seed.
SearchResult evolve(const train::TreeModel& m, const std::vector<FitnessCase>& cases,
                    const SearchConfig& cfg);

struct ProbePoint {
    std::vector<double> z;
    treelang::AstTree tree;
    bool equal_to_center = false;
    double bleu = 0.0;  // BLEU-4 against the center decode
};

struct NeighborhoodReport {
    treelang::AstTree center;
    std::vector<ProbePoint> points;
    double fraction_equal = 0.0;
};

// Greedy-decodes n points at exactly `radius` from z (uniform random
// directions) and compares each against the center decode; a diagnostic
// for latent smoothness. radius 0 reproduces the center everywhere.
NeighborhoodReport neighborhood_probe(const train::TreeModel& m, const std::vector<double>& z,
                                      double radius, int n, std::uint64_t seed = 0);

}  // namespace treevae::search
