#include "treevae/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"
#include "treevae/evaluation.hpp"
#include "treevae/latentsearch.hpp"
#include "treevae/rng.hpp"

namespace treevae::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string iso_now() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

json config_json(const train::RunConfig& rc) {
    return json{{"lr", rc.train.lr},
                {"epochs", rc.train.epochs},
                {"patience", rc.train.patience},
                {"batch_size", rc.train.batch_size},
                {"cycles", rc.train.cycles},
                {"ramp_fraction", rc.train.ramp_fraction},
                {"word_dropout", rc.train.word_dropout},
                {"seed", rc.train.seed},
                {"w_offspring", rc.train.weights.offspring},
                {"w_sibling", rc.train.weights.sibling},
                {"w_reserved", rc.train.weights.reserved},
                {"w_label", rc.train.weights.label},
                {"w_identifier", rc.train.weights.identifier},
                {"embed_dim", rc.embed_dim},
                {"hidden", rc.hidden},
                {"latent", rc.latent},
                {"layers", rc.layers},
                {"enc_dropout", rc.enc_dropout},
                {"literal_head", rc.literal_head},
                {"adaptive_head", rc.adaptive_head},
                {"max_nodes", rc.max_nodes},
                {"max_len", rc.max_len}};
}

// The manifest is the one artifact that carries timestamps; everything else
// is byte-reproducible from (command, config, seed, inputs).
void write_manifest(const std::string& manifest_path, const std::string& command,
                    const json& config, std::uint64_t seed, const std::string& started) {
    json m = {{"command", command},      {"config", config},
              {"seed", seed},            {"tool_version", kToolVersion},
              {"started", started},      {"finished", iso_now()}};
    write_text_file(manifest_path, m.dump(2) + "\n");
}

// Config file plus key=value overrides, last write wins.
train::RunConfig layered_config(const std::string& config_path,
                                const std::vector<std::string>& sets) {
    std::string text;
    if (!config_path.empty()) text = read_text_file(config_path);
    for (const auto& s : sets) {
        text += '\n';
        text += s;
    }
    return train::parse_run_config(text);
}

struct SampleFlags {
    std::string mode = "greedy";
    int k = 40;
    double p = 0.9;
    double temperature = 0.7;
    std::uint64_t seed = 0;
    int max_nodes = 0;
};

void add_sample_flags(CLI::App* sub, SampleFlags& f) {
    sub->add_option("--mode", f.mode, "decoding mode")
        ->check(CLI::IsMember({"greedy", "sample"}))
        ->capture_default_str();
    sub->add_option("--k", f.k, "top-k cutoff in sample mode")->capture_default_str();
    sub->add_option("--p", f.p, "nucleus mass in sample mode")->capture_default_str();
    sub->add_option("--temperature", f.temperature, "softmax temperature in sample mode")
        ->capture_default_str();
    sub->add_option("--seed", f.seed, "run seed")->capture_default_str();
    sub->add_option("--max-nodes", f.max_nodes, "decode budget, 0 = checkpoint default")
        ->capture_default_str();
}

sampling::SamplerConfig to_sampler(const SampleFlags& f) {
    sampling::SamplerConfig s;
    s.mode = f.mode == "sample" ? sampling::Mode::Sample : sampling::Mode::Greedy;
    s.k = f.k;
    s.p = f.p;
    s.temperature = f.temperature;
    s.seed = f.seed;
    s.validate();
    return s;
}

corpus::CorpusSplits read_splits(const std::string& dir) {
    corpus::CorpusSplits s;
    s.train = corpus::read_corpus((fs::path(dir) / "train.jsonl").string());
    s.valid = corpus::read_corpus((fs::path(dir) / "valid.jsonl").string());
    s.test = corpus::read_corpus((fs::path(dir) / "test.jsonl").string());
    return s;
}

std::string verdict_of(const treelang::ValidationReport& rep) {
    if (rep.ok) return "valid";
    std::string kinds;
    for (const auto& [kind, cnt] : eval::error_taxonomy({rep})) {
        if (!kinds.empty()) kinds += ", ";
        kinds += kind;
    }
    return "invalid (" + kinds + ")";
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string s;
    for (const auto& t : tokens) {
        if (!s.empty()) s += ' ';
        s += t;
    }
    return s;
}

std::vector<std::string> seq_tokens(const std::vector<int>& ids, const nn::SeqVocab& vocab) {
    std::vector<std::string> out;
    for (std::size_t i = 1; i < ids.size(); ++i) {
        if (ids[i] == nn::SeqVocab::kEos) break;
        out.push_back(vocab.tokens[ids[i]]);
    }
    return out;
}

void print_program_with_verdict(std::ostream& out, const std::string& program,
                                const std::string& verdict) {
    out << program << "\n  -> " << verdict << "\n";
}

// gen-corpus --n --seed --max-nodes --out
void cmd_gen_corpus(int n, std::uint64_t seed, int max_nodes, const std::string& out_path,
                    std::ostream& out) {
    std::string started = iso_now();
    auto records = corpus::generate_corpus(n, seed, max_nodes);
    corpus::write_corpus(out_path, records);
    write_manifest(out_path + ".manifest.json", "gen-corpus",
                   json{{"n", n}, {"max_nodes", max_nodes}}, seed, started);
    out << "wrote " << records.size() << " records to " << out_path << "\n";
}

// preprocess --in --out --train/--valid/--test fractions --seed
void cmd_preprocess(const std::string& in_path, const std::string& out_dir,
                    const corpus::SplitSpec& spec, std::ostream& out) {
    std::string started = iso_now();
    auto records = corpus::read_corpus(in_path);
    auto splits = corpus::filter_and_split(records, spec);
    fs::create_directories(out_dir);
    corpus::write_corpus((fs::path(out_dir) / "train.jsonl").string(), splits.train);
    corpus::write_corpus((fs::path(out_dir) / "valid.jsonl").string(), splits.valid);
    corpus::write_corpus((fs::path(out_dir) / "test.jsonl").string(), splits.test);
    write_manifest((fs::path(out_dir) / "manifest.json").string(), "preprocess",
                   json{{"in", in_path},
                        {"train_fraction", spec.train_fraction},
                        {"valid_fraction", spec.valid_fraction},
                        {"test_fraction", spec.test_fraction}},
                   spec.seed, started);
    out << "split " << records.size() << " records into " << splits.train.size() << "/"
        << splits.valid.size() << "/" << splits.test.size() << " at " << out_dir << "\n";
}

// train --model --config --corpus --out [--log] [--set key=value ...]
void cmd_train(const std::string& model, const std::string& config_path,
               const std::string& corpus_dir, const std::string& out_path,
               const std::string& log_path, const std::vector<std::string>& sets,
               std::ostream& out) {
    std::string started = iso_now();
    train::RunConfig rc = layered_config(config_path, sets);
    corpus::CorpusSplits splits = read_splits(corpus_dir);

    std::vector<corpus::CorpusRecord> all = splits.train;
    all.insert(all.end(), splits.valid.begin(), splits.valid.end());
    all.insert(all.end(), splits.test.begin(), splits.test.end());

    std::ofstream log;
    std::ostream* log_ptr = nullptr;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::binary);
        if (!log) throw ConfigError("cannot write " + log_path);
        log_ptr = &log;
    }

    train::TrainResult result;
    if (model == "tree2tree") {
        train::TreeModel m(nn::build_vocab(all), rc.encoder_config(), rc.decoder_config(),
                           rc.train.seed);
        result = train::train_tree(m, splits, rc.train, log_ptr);
        train::save_tree_model(out_path, m);
    } else {
        train::SeqModel m(nn::build_seq_vocab(all), rc.baseline_config(), rc.train.seed);
        result = train::train_seq(m, splits, rc.train, log_ptr);
        train::save_seq_model(out_path, m);
    }
    write_manifest(out_path + ".manifest.json", "train " + model, config_json(rc),
                   rc.train.seed, started);
    if (log_ptr)
        write_manifest(log_path + ".manifest.json", "train " + model, config_json(rc),
                       rc.train.seed, started);
    out << "trained " << model << " for " << result.metrics.size() << " epochs, best valid "
        << fmt(result.best_valid) << " at epoch " << result.best_epoch << ", saved to "
        << out_path << "\n";
}

// reconstruct --checkpoint --in [--n] [sampler flags]
void cmd_reconstruct(const std::string& ckpt, const std::string& in_path, int limit,
                     const SampleFlags& flags, std::ostream& out) {
    sampling::SamplerConfig sampler = to_sampler(flags);
    auto records = corpus::read_corpus(in_path);
    if (limit > 0 && static_cast<int>(records.size()) > limit) records.resize(limit);

    std::string kind = train::checkpoint_kind(ckpt);
    if (kind == train::kTreeKind) {
        auto m = train::load_tree_model(ckpt);
        for (const auto& rec : records) {
            auto tree = treelang::anonymize_identifiers(treelang::parse_source(rec.source));
            nn::Graph g;
            auto enc = m->encoder->encode(g, tree, false, nullptr);
            auto back = m->decoder->decode(g.value(enc.mu), sampler, nullptr, flags.max_nodes);
            out << treelang::serialize(back) << "\n";
        }
    } else {
        auto m = train::load_seq_model(ckpt);
        for (const auto& rec : records) {
            auto ids = nn::to_ids(m->vocab, nn::sequence_tokens(rec.source));
            nn::Graph g;
            auto post = m->vae->encode_sequence(g, ids, false, nullptr);
            auto decoded = m->vae->decode_sequence(g.value(post.mu), sampler);
            out << join_tokens(seq_tokens(decoded, m->vocab)) << "\n";
        }
    }
}

// sample --checkpoint --n [sampler flags]: programs from the prior, each
// followed by its validation verdict
void cmd_sample(const std::string& ckpt, int n, const SampleFlags& flags, std::ostream& out) {
    if (n < 1) throw UsageError("--n must be at least 1");
    sampling::SamplerConfig sampler = to_sampler(flags);

    std::string kind = train::checkpoint_kind(ckpt);
    if (kind == train::kTreeKind) {
        auto m = train::load_tree_model(ckpt);
        for (int i = 0; i < n; ++i) {
            auto z = rng::substream(flags.seed, "z", static_cast<std::uint64_t>(i))
                         .normal_vec(m->dec_cfg.latent);
            sampling::SamplerConfig s = sampler;
            if (s.mode == sampling::Mode::Sample)
                s.seed = rng::derive(flags.seed, "sample", static_cast<std::uint64_t>(i));
            auto tree = m->decoder->decode(z, s, nullptr, flags.max_nodes);
            print_program_with_verdict(out, treelang::serialize(tree),
                                       verdict_of(treelang::validate(tree)));
        }
    } else {
        auto m = train::load_seq_model(ckpt);
        for (int i = 0; i < n; ++i) {
            auto z = rng::substream(flags.seed, "z", static_cast<std::uint64_t>(i))
                         .normal_vec(m->cfg.latent);
            sampling::SamplerConfig s = sampler;
            if (s.mode == sampling::Mode::Sample)
                s.seed = rng::derive(flags.seed, "sample", static_cast<std::uint64_t>(i));
            auto tokens = seq_tokens(m->vae->decode_sequence(z, s), m->vocab);
            std::string verdict;
            try {
                verdict = verdict_of(treelang::validate(treelang::parse_source(join_tokens(tokens))));
            } catch (const Error&) {
                verdict = "unparseable";
            }
            print_program_with_verdict(out, join_tokens(tokens), verdict);
        }
    }
}

// evaluate --checkpoint --test --report [--buckets] [--corrected]
// [--generative --n] [--n-random --seed]
void cmd_evaluate(const std::string& ckpt, const std::string& test_path,
                  const std::string& report_path, bool buckets, bool corrected, bool generative,
                  int gen_n, int n_random, std::uint64_t seed, std::ostream& out) {
    std::string started = iso_now();
    auto records = corpus::read_corpus(test_path);

    eval::EvalOptions opt;
    opt.corrected = corrected;
    opt.n_random = n_random;
    opt.seed = seed;

    std::string kind = train::checkpoint_kind(ckpt);
    eval::EvalReport rep;
    json gen_json;
    std::string text;
    if (kind == train::kTreeKind) {
        auto m = train::load_tree_model(ckpt);
        rep = eval::evaluate_tree(*m, records, opt);
        text = rep.to_text(buckets);
        if (generative) {
            auto gen = eval::generative_tree(*m, gen_n, seed);
            text += "\n" + gen.to_text();
            gen_json = gen.to_json();
        }
    } else {
        auto m = train::load_seq_model(ckpt);
        rep = eval::evaluate_seq(*m, records, opt);
        text = rep.to_text(buckets);
        if (generative) {
            auto gen = eval::generative_seq(*m, gen_n, seed);
            text += "\n" + gen.to_text();
            gen_json = gen.to_json();
        }
    }

    write_text_file(report_path, text);
    json machine = {{"evaluation", rep.to_json()}};
    if (generative) machine["generative"] = gen_json;
    write_text_file(report_path + ".json", machine.dump(2) + "\n");
    write_manifest(report_path + ".manifest.json", "evaluate",
                   json{{"checkpoint", ckpt},
                        {"test", test_path},
                        {"buckets", buckets},
                        {"corrected", corrected},
                        {"generative", generative},
                        {"n", gen_n},
                        {"n_random", n_random}},
                   seed, started);
    out << "report written to " << report_path << "\n";
}

// search --checkpoint --tests [--pop --gens --sigma --elite --seed
// --max-nodes --out]
void cmd_search(const std::string& ckpt, const std::string& cases_path,
                const search::SearchConfig& cfg, const std::string& out_path,
                std::ostream& out) {
    std::string started = iso_now();
    auto m = train::load_tree_model(ckpt);
    auto cases = search::load_cases(cases_path);
    auto res = search::evolve(*m, cases, cfg);

    std::ostringstream text;
    for (const auto& s : res.stats)
        text << "gen " << s.generation << " best " << fmt(s.best) << " mean " << fmt(s.mean)
             << "\n";
    text << "best fitness " << fmt(res.best_fitness) << "\n";
    text << treelang::serialize(res.best_tree) << "\n";
    out << text.str();

    if (!out_path.empty()) {
        write_text_file(out_path, text.str());
        write_manifest(out_path + ".manifest.json", "search",
                       json{{"checkpoint", ckpt},
                            {"tests", cases_path},
                            {"population", cfg.population},
                            {"generations", cfg.generations},
                            {"mutation_sigma", cfg.mutation_sigma},
                            {"elite_fraction", cfg.elite_fraction},
                            {"max_nodes", cfg.max_nodes}},
                       cfg.seed, started);
    }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"tree-structured program autoencoding toolkit"};
    app.require_subcommand(1);

    // gen-corpus
    int gc_n = 1000;
    std::uint64_t gc_seed = 0;
    int gc_max_nodes = 750;
    std::string gc_out;
    auto* gen = app.add_subcommand("gen-corpus", "generate a program corpus");
    gen->add_option("--n", gc_n, "number of programs")->capture_default_str();
    gen->add_option("--seed", gc_seed, "generator seed")->capture_default_str();
    gen->add_option("--max-nodes", gc_max_nodes, "node budget per program")
        ->capture_default_str();
    gen->add_option("--out", gc_out, "output corpus file")->required();
    gen->callback([&] { cmd_gen_corpus(gc_n, gc_seed, gc_max_nodes, gc_out, out); });

    // preprocess
    std::string pp_in, pp_out;
    corpus::SplitSpec pp_spec;
    auto* pre = app.add_subcommand("preprocess", "filter and split a corpus");
    pre->add_option("--in", pp_in, "corpus file")->required();
    pre->add_option("--out", pp_out, "output directory for train/valid/test files")->required();
    pre->add_option("--train", pp_spec.train_fraction, "train fraction")->capture_default_str();
    pre->add_option("--valid", pp_spec.valid_fraction, "valid fraction")->capture_default_str();
    pre->add_option("--test", pp_spec.test_fraction, "test fraction")->capture_default_str();
    pre->add_option("--seed", pp_spec.seed, "shuffle seed")->capture_default_str();
    pre->callback([&] { cmd_preprocess(pp_in, pp_out, pp_spec, out); });

    // train
    std::string tr_model = "tree2tree", tr_config, tr_corpus, tr_out, tr_log;
    std::vector<std::string> tr_sets;
    std::uint64_t tr_seed = 0;
    auto* tr = app.add_subcommand("train", "train a model on a preprocessed corpus");
    tr->add_option("--model", tr_model, "model kind")
        ->check(CLI::IsMember({"tree2tree", "seq2seq"}))
        ->capture_default_str();
    tr->add_option("--config", tr_config, "run config file (key = value lines)");
    tr->add_option("--corpus", tr_corpus, "directory from preprocess")->required();
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--log", tr_log, "metrics JSONL path");
    tr->add_option("--set", tr_sets, "config override key=value, repeatable; flags win");
    tr->add_option("--seed", tr_seed, "run seed override");
    tr->callback([&] {
        std::vector<std::string> sets = tr_sets;
        if (tr->count("--seed") > 0) sets.push_back("seed=" + std::to_string(tr_seed));
        cmd_train(tr_model, tr_config, tr_corpus, tr_out, tr_log, sets, out);
    });

    // reconstruct
    std::string rc_ckpt, rc_in;
    int rc_n = 0;
    SampleFlags rc_flags;
    auto* rec = app.add_subcommand("reconstruct", "encode and decode programs from a corpus");
    rec->add_option("--checkpoint", rc_ckpt, "model checkpoint")->required();
    rec->add_option("--in", rc_in, "corpus file to reconstruct")->required();
    rec->add_option("--n", rc_n, "limit on records, 0 = all")->capture_default_str();
    add_sample_flags(rec, rc_flags);
    rec->callback([&] { cmd_reconstruct(rc_ckpt, rc_in, rc_n, rc_flags, out); });

    // sample
    std::string sm_ckpt;
    int sm_n = 5;
    SampleFlags sm_flags;
    auto* sm = app.add_subcommand("sample", "decode programs from the prior");
    sm->add_option("--checkpoint", sm_ckpt, "model checkpoint")->required();
    sm->add_option("--n", sm_n, "number of programs")->capture_default_str();
    add_sample_flags(sm, sm_flags);
    sm->callback([&] { cmd_sample(sm_ckpt, sm_n, sm_flags, out); });

    // evaluate
    std::string ev_ckpt, ev_test, ev_report;
    bool ev_buckets = false, ev_corrected = false, ev_generative = false;
    int ev_n = 1000, ev_n_random = 0;
    std::uint64_t ev_seed = 0;
    auto* ev = app.add_subcommand("evaluate", "score reconstruction on a test corpus");
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--test", ev_test, "test corpus file")->required();
    ev->add_option("--report", ev_report, "report file; a .json twin is written beside it")
        ->required();
    ev->add_flag("--buckets", ev_buckets, "include per-bucket rows");
    ev->add_flag("--corrected", ev_corrected, "subtract the random-decode BLEU correction");
    ev->add_flag("--generative", ev_generative, "append a prior-sample study");
    ev->add_option("--n", ev_n, "prior samples for --generative")->capture_default_str();
    ev->add_option("--n-random", ev_n_random, "random decodes per bucket for --corrected, 0 = bucket size")
        ->capture_default_str();
    ev->add_option("--seed", ev_seed, "seed for corrections and the generative study")
        ->capture_default_str();
    ev->callback([&] {
        cmd_evaluate(ev_ckpt, ev_test, ev_report, ev_buckets, ev_corrected, ev_generative, ev_n,
                     ev_n_random, ev_seed, out);
    });

    // search
    std::string se_ckpt, se_tests, se_out;
    search::SearchConfig se_cfg;
    auto* se = app.add_subcommand("search", "evolve latent vectors against unit tests");
    se->add_option("--checkpoint", se_ckpt, "tree model checkpoint")->required();
    se->add_option("--tests", se_tests, "fitness cases file")->required();
    se->add_option("--pop", se_cfg.population, "population size")->capture_default_str();
    se->add_option("--gens", se_cfg.generations, "generations")->capture_default_str();
    se->add_option("--sigma", se_cfg.mutation_sigma, "mutation scale")->capture_default_str();
    se->add_option("--elite", se_cfg.elite_fraction, "elite fraction")->capture_default_str();
    se->add_option("--seed", se_cfg.seed, "search seed")->capture_default_str();
    se->add_option("--max-nodes", se_cfg.max_nodes, "decode budget, 0 = checkpoint default")
        ->capture_default_str();
    se->add_option("--out", se_out, "also write the result to a file");
    se->callback([&] { cmd_search(se_ckpt, se_tests, se_cfg, se_out, out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace treevae::cli
