// Corpus management: seeded program generation, record storage, splits and
// size buckets. Records store sources verbatim; trees are always re-derived
// by parsing.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treevae/errors.hpp"
#include "treevae/rng.hpp"

namespace treevae::corpus {

struct CorpusRecord {
    std::string id;
    std::string source;       // canonical single-space token form
    int node_count = 0;
    int token_count = 0;
};

CorpusRecord record_from_source(std::string id, const std::string& source);

// One stochastic grammar expansion, unconstrained by size caps. Used by
// generate_corpus and by calibration tests that measure the raw size
// distribution. Output always validates.
std::string generate_raw_program(rng::Rng& r);

// n distinct valid programs with node_count <= max_nodes (and token counts
// within the bucketable range). Deterministic per (n, seed, max_nodes):
// attempt k draws from an independent substream, so results are byte-stable.
// Throws GenerationBudgetExceeded after 1000*n failed attempts.
std::vector<CorpusRecord> generate_corpus(int n, std::uint64_t seed, int max_nodes = 750);

struct SplitSpec {
    double train_fraction = 0.8;
    double valid_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct CorpusSplits {
    std::vector<CorpusRecord> train, valid, test;
};

// Drops records that exceed the modelling caps, shuffles (seeded), and
// splits by fraction (train and valid round down, test takes the rest).
// Throws EmptySplit when any split would be empty.
CorpusSplits filter_and_split(const std::vector<CorpusRecord>& records, const SplitSpec& spec);

enum class SizeBucket { Small, Medium, Large };

const char* bucket_name(SizeBucket b);

// Small <= 250, Medium 251..500, Large 501..750; anything else throws OutOfRange.
SizeBucket bucket_of(int token_count);

// Line-delimited storage, one structured-text object per record.
void write_corpus(const std::string& path, const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_corpus(const std::string& path);

}  // namespace treevae::corpus
