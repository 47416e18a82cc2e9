#include "treevae/latentsearch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "treevae/evaluation.hpp"
#include "treevae/rng.hpp"

namespace treevae::search {

std::vector<FitnessCase> parse_cases(const std::string& text) {
    std::vector<FitnessCase> cases;
    std::istringstream in(text);
    std::string line;
    auto ints = [](const std::string& part) {
        std::vector<std::int64_t> out;
        std::istringstream ps(part);
        std::string tok;
        while (ps >> tok) {
            try {
                std::size_t pos = 0;
                out.push_back(std::stoll(tok, &pos));
                if (pos != tok.size()) throw ConfigError("bad integer '" + tok + "' in case file");
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception&) {
                throw ConfigError("bad integer '" + tok + "' in case file");
            }
        }
        return out;
    };
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::size_t arrow = line.find("->");
        if (arrow == std::string::npos)
            throw ConfigError("fitness case needs 'inputs -> outputs': " + line);
        FitnessCase c;
        c.input = ints(line.substr(0, arrow));
        c.expected_output = ints(line.substr(arrow + 2));
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<FitnessCase> load_cases(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read case file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_cases(buf.str());
}

void SearchConfig::validate() const {
    if (population < 2) throw ConfigError("population must be at least 2");
    if (generations < 0) throw ConfigError("generations must be non-negative");
    if (!(mutation_sigma > 0.0)) throw ConfigError("mutation_sigma must be positive");
    if (!(elite_fraction > 0.0) || !(elite_fraction < 1.0))
        throw ConfigError("elite_fraction must lie in (0,1)");
    if (max_nodes < 0) throw ConfigError("max_nodes must be non-negative");
    sampler.validate();
}

double fitness(const treelang::AstTree& tree, const std::vector<FitnessCase>& cases) {
    if (cases.empty()) throw EmptyInput("fitness needs at least one case");
    if (!treelang::validate(tree).ok) return 0.0;
    int passed = 0;
    for (const auto& c : cases) {
        treelang::ExecResult r = treelang::interpret(tree, c.input);
        if (r.status == treelang::ExecStatus::Ok && r.output == c.expected_output) ++passed;
    }
    return static_cast<double>(passed) / static_cast<double>(cases.size());
}

namespace {

struct Member {
    std::vector<double> z;
    treelang::AstTree tree;
    double fit = 0.0;
};

void sort_desc(std::vector<Member>& pop) {
    std::stable_sort(pop.begin(), pop.end(),
                     [](const Member& a, const Member& b) { return a.fit > b.fit; });
}

}  // namespace

SearchResult evolve(const train::TreeModel& m, const std::vector<FitnessCase>& cases,
                    const SearchConfig& cfg) {
    cfg.validate();
    if (cases.empty()) throw EmptyInput("evolve needs at least one fitness case");
    const int latent = m.dec_cfg.latent;

    std::uint64_t decode_counter = 0;
    auto make_member = [&](std::vector<double> z) {
        sampling::SamplerConfig s = cfg.sampler;
        if (s.mode == sampling::Mode::Sample)
            s.seed = rng::derive(cfg.seed, "decode", decode_counter++);
        Member mem;
        mem.tree = m.decoder->decode(z, s, nullptr, cfg.max_nodes);
        mem.fit = fitness(mem.tree, cases);
        mem.z = std::move(z);
        return mem;
    };

    std::vector<Member> pop;
    pop.reserve(cfg.population);
    rng::Rng init = rng::substream(cfg.seed, "init");
    for (int i = 0; i < cfg.population; ++i) pop.push_back(make_member(init.normal_vec(latent)));
    sort_desc(pop);

    SearchResult res;
    auto record = [&](int gen) {
        double sum = 0.0;
        for (const auto& mem : pop) sum += mem.fit;
        res.stats.push_back({gen, pop.front().fit, sum / cfg.population});
    };
    record(0);

    int n_elite = std::max(1, static_cast<int>(cfg.elite_fraction * cfg.population));
    for (int gen = 1; gen <= cfg.generations; ++gen) {
        rng::Rng mut = rng::substream(cfg.seed, "mutate", static_cast<std::uint64_t>(gen));
        std::vector<Member> offspring;
        offspring.reserve(cfg.population);
        for (const auto& parent : pop) {
            std::vector<double> z = parent.z;
            for (double& v : z) v += cfg.mutation_sigma * mut.normal();
            offspring.push_back(make_member(std::move(z)));
        }
        sort_desc(offspring);

        std::vector<Member> next;
        next.reserve(cfg.population);
        for (int i = 0; i < n_elite; ++i) next.push_back(std::move(pop[i]));
        for (int i = 0; i < cfg.population - n_elite; ++i)
            next.push_back(std::move(offspring[i]));
        sort_desc(next);
        pop = std::move(next);
        record(gen);
    }

    res.best_z = pop.front().z;
    res.best_tree = pop.front().tree;
    res.best_fitness = pop.front().fit;
    return res;
}

NeighborhoodReport neighborhood_probe(const train::TreeModel& m, const std::vector<double>& z,
                                      double radius, int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("probe needs at least one point");
    if (radius < 0.0) throw ConfigError("probe radius must be non-negative");

    sampling::SamplerConfig greedy;
    NeighborhoodReport rep;
    rep.center = m.decoder->decode(z, greedy);
    std::vector<std::string> center_tokens = eval::split_tokens(treelang::serialize(rep.center));

    int equal = 0;
    for (int i = 0; i < n; ++i) {
        rng::Rng r = rng::substream(seed, "probe", static_cast<std::uint64_t>(i));
        std::vector<double> u = r.normal_vec(static_cast<int>(z.size()));
        double norm = 0.0;
        for (double v : u) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) norm = 1.0;

        ProbePoint p;
        p.z = z;
        for (std::size_t d = 0; d < z.size(); ++d) p.z[d] += radius * u[d] / norm;
        p.tree = m.decoder->decode(p.z, greedy);
        p.equal_to_center = treelang::tree_equal(p.tree, rep.center);
        p.bleu = eval::bleu(eval::split_tokens(treelang::serialize(p.tree)), center_tokens, 4);
        equal += p.equal_to_center ? 1 : 0;
        rep.points.push_back(std::move(p));
    }
    rep.fraction_equal = static_cast<double>(equal) / n;
    return rep;
}

}  // namespace treevae::search
