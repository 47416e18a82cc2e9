#include "treevae/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "treevae/checkpoint.hpp"

namespace treevae::train {

using nn::Graph;
using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (patience < 1) throw ConfigError("patience must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (cycles < 1) throw ConfigError("cycles must be positive");
    if (!(ramp_fraction > 0.0) || ramp_fraction > 1.0)
        throw ConfigError("ramp_fraction must lie in (0, 1]");
    if (word_dropout < 0.0 || word_dropout >= 1.0)
        throw ConfigError("word_dropout must lie in [0, 1)");
    for (double v : {weights.offspring, weights.sibling, weights.reserved, weights.label,
                     weights.identifier})
        if (v < 0.0) throw ConfigError("loss weights must be non-negative");
}

double kl_divergence(const std::vector<double>& mu, const std::vector<double>& logvar) {
    if (mu.size() != logvar.size()) throw ShapeMismatch("posterior mean and logvar disagree");
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        s += std::exp(logvar[i]) + mu[i] * mu[i] - logvar[i] - 1.0;
    return 0.5 * s;
}

double binary_cross_entropy(double p, double truth) {
    p = std::min(1.0 - 1e-7, std::max(1e-7, p));
    return -(truth * std::log(p) + (1.0 - truth) * std::log(1.0 - p));
}

double triplet_hinge(double s_true, double s_negative) {
    return std::max(s_negative - s_true, 0.0);
}

double cyclic_kl_weight(long step, long total_steps, int cycles, double ramp_fraction) {
    if (total_steps < 1 || cycles < 1 || !(ramp_fraction > 0.0))
        throw ConfigError("degenerate annealing schedule");
    double cycle_len = static_cast<double>(total_steps) / cycles;
    double frac = std::fmod(static_cast<double>(step), cycle_len) / cycle_len;
    return std::min(1.0, frac / ramp_fraction);
}

bool EarlyStopping::update(double valid_loss) {
    ++seen_;
    if (valid_loss < best_) {
        best_ = valid_loss;
        best_epoch_ = seen_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

std::vector<std::vector<int>> bucket_batches(const std::vector<int>& bucket_key, int batch_size,
                                             rng::Rng& r) {
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    std::map<int, std::vector<int>> groups;
    for (std::size_t i = 0; i < bucket_key.size(); ++i)
        groups[bucket_key[i]].push_back(static_cast<int>(i));

    std::vector<std::vector<int>> batches;
    for (auto& [key, idx] : groups) {
        (void)key;
        for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
            std::swap(idx[i], idx[r.uniform_int(0, i)]);
        for (std::size_t off = 0; off < idx.size(); off += batch_size) {
            std::size_t end = std::min(idx.size(), off + batch_size);
            batches.emplace_back(idx.begin() + off, idx.begin() + end);
        }
    }
    for (int i = static_cast<int>(batches.size()) - 1; i > 0; --i)
        std::swap(batches[i], batches[r.uniform_int(0, i)]);
    return batches;
}

TreeModel::TreeModel(nn::Vocab v, nn::EncoderConfig ec, nn::DecoderConfig dc, std::uint64_t seed)
    : vocab(std::move(v)), enc_cfg(ec), dec_cfg(dc) {
    if (ec.embed_dim != dc.embed_dim || ec.latent != dc.latent)
        throw ConfigError("encoder and decoder disagree on shared dimensions");
    rng::Rng init = rng::substream(seed, "init");
    emb = nn::make_embeddings(reg, vocab, ec.embed_dim, init);
    encoder = std::make_unique<nn::TreeEncoder>(reg, &vocab, emb, ec, init);
    decoder = std::make_unique<nn::TreeDecoder>(reg, &vocab, emb, dc, init);
}

SeqModel::SeqModel(nn::SeqVocab v, nn::BaselineConfig c, std::uint64_t seed)
    : vocab(std::move(v)), cfg(c) {
    rng::Rng init = rng::substream(seed, "init");
    vae = std::make_unique<nn::SeqVae>(reg, &vocab, cfg, init);
}

void save_tree_model(const std::string& path, const TreeModel& m) {
    json hp = {{"encoder",
                {{"embed_dim", m.enc_cfg.embed_dim},
                 {"hidden", m.enc_cfg.hidden},
                 {"latent", m.enc_cfg.latent},
                 {"layers", m.enc_cfg.layers},
                 {"dropout", m.enc_cfg.dropout}}},
               {"decoder",
                {{"embed_dim", m.dec_cfg.embed_dim},
                 {"hidden", m.dec_cfg.hidden},
                 {"latent", m.dec_cfg.latent},
                 {"literal_head", m.dec_cfg.literal_head},
                 {"max_nodes", m.dec_cfg.max_nodes}}}};
    nn::save_checkpoint(path, kTreeKind, hp, m.vocab.to_json(), m.reg);
}

std::unique_ptr<TreeModel> load_tree_model(const std::string& path) {
    nn::Checkpoint c = nn::load_checkpoint(path);
    nn::expect_kind(c, kTreeKind);
    const json& e = c.hyperparams.at("encoder");
    const json& d = c.hyperparams.at("decoder");
    nn::EncoderConfig ec;
    ec.embed_dim = e.at("embed_dim").get<int>();
    ec.hidden = e.at("hidden").get<int>();
    ec.latent = e.at("latent").get<int>();
    ec.layers = e.at("layers").get<int>();
    ec.dropout = e.at("dropout").get<double>();
    nn::DecoderConfig dc;
    dc.embed_dim = d.at("embed_dim").get<int>();
    dc.hidden = d.at("hidden").get<int>();
    dc.latent = d.at("latent").get<int>();
    dc.literal_head = d.at("literal_head").get<int>();
    dc.max_nodes = d.at("max_nodes").get<int>();
    auto m = std::make_unique<TreeModel>(nn::Vocab::from_json(c.vocab), ec, dc, 0);
    nn::load_into_registry(c, m->reg);
    return m;
}

void save_seq_model(const std::string& path, const SeqModel& m) {
    json hp = {{"embed_dim", m.cfg.embed_dim},   {"hidden", m.cfg.hidden},
               {"latent", m.cfg.latent},         {"adaptive_head", m.cfg.adaptive_head},
               {"word_dropout", m.cfg.word_dropout}, {"max_len", m.cfg.max_len}};
    nn::save_checkpoint(path, kSeqKind, hp, m.vocab.to_json(), m.reg);
}

std::unique_ptr<SeqModel> load_seq_model(const std::string& path) {
    nn::Checkpoint c = nn::load_checkpoint(path);
    nn::expect_kind(c, kSeqKind);
    nn::BaselineConfig cfg;
    cfg.embed_dim = c.hyperparams.at("embed_dim").get<int>();
    cfg.hidden = c.hyperparams.at("hidden").get<int>();
    cfg.latent = c.hyperparams.at("latent").get<int>();
    cfg.adaptive_head = c.hyperparams.at("adaptive_head").get<int>();
    cfg.word_dropout = c.hyperparams.at("word_dropout").get<double>();
    cfg.max_len = c.hyperparams.at("max_len").get<int>();
    auto m = std::make_unique<SeqModel>(nn::SeqVocab::from_json(c.vocab), cfg, 0);
    nn::load_into_registry(c, m->reg);
    return m;
}

std::string checkpoint_kind(const std::string& path) {
    return nn::load_checkpoint(path).model_kind;
}

ExampleLoss tree_example_loss(Graph& g, const TreeModel& m, const treelang::AstTree& tree,
                              double w, const LossWeights& lw, bool training, rng::Rng* noise,
                              rng::Rng* negative) {
    auto out = m.encoder->encode(g, tree, training, noise);
    auto fl = m.decoder->teacher_forced(g, tree, out.z, negative);
    Graph::Ref kl = g.kl_gauss(out.mu, out.logvar);
    Graph::Ref rec = g.add_n({g.scale(fl.offspring, lw.offspring), g.scale(fl.sibling, lw.sibling),
                              g.scale(fl.reserved, lw.reserved), g.scale(fl.label, lw.label),
                              g.scale(fl.identifier, lw.identifier)});
    ExampleLoss el;
    el.total = g.add(rec, g.scale(kl, w));
    el.values.l_a = g.scalar(fl.offspring);
    el.values.l_f = g.scalar(fl.sibling);
    el.values.l_r = g.scalar(fl.reserved);
    el.values.l_label = g.scalar(fl.label);
    el.values.l_ident = g.scalar(fl.identifier);
    el.values.l_rec_total = g.scalar(rec);
    el.values.kl = g.scalar(kl);
    el.values.w = w;
    el.values.total = g.scalar(el.total);
    return el;
}

ExampleLoss seq_example_loss(Graph& g, const SeqModel& m, const std::vector<int>& ids, double w,
                             bool training, rng::Rng* noise, rng::Rng* drop) {
    auto post = m.vae->encode_sequence(g, ids, training, noise);
    Graph::Ref rec = m.vae->reconstruction_nll(g, ids, post.z, training, drop);
    Graph::Ref kl = g.kl_gauss(post.mu, post.logvar);
    ExampleLoss el;
    el.total = g.add(rec, g.scale(kl, w));
    el.values.l_label = g.scalar(rec);
    el.values.l_rec_total = el.values.l_label;
    el.values.kl = g.scalar(kl);
    el.values.w = w;
    el.values.total = g.scalar(el.total);
    return el;
}

json EpochMetrics::to_json() const {
    return json{{"epoch", epoch},
                {"train_loss", train_loss},
                {"valid_loss", valid_loss},
                {"kl", kl},
                {"w_mean", w_mean}};
}

namespace {

struct LoopSpec {
    std::vector<int> bucket_key;  // one entry per train example
    int n_valid = 0;
    std::function<ExampleLoss(Graph&, int, int, double)> train_example;  // epoch, index, w
    std::function<ExampleLoss(Graph&, int)> valid_example;               // eval mode, w = 1
};

TrainResult run_loop(nn::ParamRegistry& reg, const TrainConfig& cfg, const LoopSpec& spec,
                     std::ostream* log) {
    cfg.validate();
    int n_train = static_cast<int>(spec.bucket_key.size());
    if (n_train == 0 || spec.n_valid == 0)
        throw EmptySplit("training needs non-empty train and valid splits");

    std::map<int, int> bucket_count;
    for (int k : spec.bucket_key) ++bucket_count[k];
    long steps_per_epoch = 0;
    for (const auto& [key, count] : bucket_count) {
        (void)key;
        steps_per_epoch += (count + cfg.batch_size - 1) / cfg.batch_size;
    }
    long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

    nn::Adam opt(cfg.lr);
    EarlyStopping stop(cfg.patience);
    std::vector<std::vector<float>> best;
    TrainResult result;
    Graph g;
    long gstep = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng::Rng shuffle = rng::substream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        auto batches = bucket_batches(spec.bucket_key, cfg.batch_size, shuffle);

        double sum_total = 0.0, sum_kl = 0.0, sum_w = 0.0;
        for (const auto& batch : batches) {
            double w = cyclic_kl_weight(gstep, total_steps, cfg.cycles, cfg.ramp_fraction);
            reg.zero_grad();
            for (int idx : batch) {
                g.reset();
                ExampleLoss el = spec.train_example(g, epoch, idx, w);
                if (!std::isfinite(el.values.total))
                    throw DivergedLoss("non-finite training loss at epoch " +
                                       std::to_string(epoch) + ", example " + std::to_string(idx));
                g.backward(el.total);
                sum_total += el.values.total;
                sum_kl += el.values.kl;
            }
            opt.step(reg);
            sum_w += w;
            ++gstep;
        }

        double vsum = 0.0;
        for (int i = 0; i < spec.n_valid; ++i) {
            g.reset();
            ExampleLoss el = spec.valid_example(g, i);
            if (!std::isfinite(el.values.total))
                throw DivergedLoss("non-finite validation loss at epoch " + std::to_string(epoch) +
                                   ", example " + std::to_string(i));
            vsum += el.values.total;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = sum_total / n_train;
        em.valid_loss = vsum / spec.n_valid;
        em.kl = sum_kl / n_train;
        em.w_mean = sum_w / static_cast<double>(batches.size());
        result.metrics.push_back(em);
        if (log) (*log) << em.to_json().dump() << '\n';

        if (stop.update(em.valid_loss)) {
            best.clear();
            for (const auto& p : reg.all()) best.push_back(p->value.data);
        }
        if (stop.exhausted()) break;
    }

    const auto& params = reg.all();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value.data = best[i];
    result.best_epoch = stop.best_epoch();
    result.best_valid = stop.best_loss();
    return result;
}

std::uint64_t example_key(int epoch, std::size_t n, int idx) {
    return static_cast<std::uint64_t>(epoch) * n + static_cast<std::uint64_t>(idx);
}

}  // namespace

TrainResult train_tree(TreeModel& m, const corpus::CorpusSplits& splits, const TrainConfig& cfg,
                       std::ostream* metrics_log) {
    std::vector<treelang::AstTree> ttrees, vtrees;
    LoopSpec spec;
    for (const auto& rec : splits.train) {
        ttrees.push_back(treelang::anonymize_identifiers(treelang::parse_source(rec.source)));
        spec.bucket_key.push_back(static_cast<int>(corpus::bucket_of(rec.token_count)));
    }
    for (const auto& rec : splits.valid)
        vtrees.push_back(treelang::anonymize_identifiers(treelang::parse_source(rec.source)));
    spec.n_valid = static_cast<int>(vtrees.size());

    spec.train_example = [&](Graph& g, int epoch, int idx, double w) {
        rng::Rng noise = rng::substream(cfg.seed, "noise", example_key(epoch, ttrees.size(), idx));
        rng::Rng neg =
            rng::substream(cfg.seed, "negative", example_key(epoch, ttrees.size(), idx));
        return tree_example_loss(g, m, ttrees[idx], w, cfg.weights, true, &noise, &neg);
    };
    spec.valid_example = [&](Graph& g, int idx) {
        rng::Rng neg = rng::substream(cfg.seed, "valid-negative", static_cast<std::uint64_t>(idx));
        return tree_example_loss(g, m, vtrees[idx], 1.0, cfg.weights, false, nullptr, &neg);
    };
    return run_loop(m.reg, cfg, spec, metrics_log);
}

TrainResult train_seq(SeqModel& m, const corpus::CorpusSplits& splits, const TrainConfig& cfg,
                      std::ostream* metrics_log) {
    std::vector<std::vector<int>> tids, vids;
    LoopSpec spec;
    for (const auto& rec : splits.train) {
        tids.push_back(nn::to_ids(m.vocab, nn::sequence_tokens(rec.source)));
        spec.bucket_key.push_back(static_cast<int>(corpus::bucket_of(rec.token_count)));
    }
    for (const auto& rec : splits.valid)
        vids.push_back(nn::to_ids(m.vocab, nn::sequence_tokens(rec.source)));
    spec.n_valid = static_cast<int>(vids.size());

    spec.train_example = [&](Graph& g, int epoch, int idx, double w) {
        rng::Rng noise = rng::substream(cfg.seed, "noise", example_key(epoch, tids.size(), idx));
        rng::Rng drop = rng::substream(cfg.seed, "dropout", example_key(epoch, tids.size(), idx));
        return seq_example_loss(g, m, tids[idx], w, true, &noise, &drop);
    };
    spec.valid_example = [&](Graph& g, int idx) {
        return seq_example_loss(g, m, vids[idx], 1.0, false, nullptr, nullptr);
    };
    return run_loop(m.reg, cfg, spec, metrics_log);
}

double overfit_trees(TreeModel& m, const std::vector<treelang::AstTree>& trees, int steps,
                     double lr, std::uint64_t seed, double stop_below) {
    if (trees.empty()) throw EmptyInput("nothing to overfit");
    long total_nodes = 0;
    for (const auto& t : trees) total_nodes += t.size;

    nn::Adam opt(lr);
    LossWeights lw;
    Graph g;
    double per_node = std::numeric_limits<double>::infinity();
    for (int s = 0; s < steps; ++s) {
        m.reg.zero_grad();
        double rec_sum = 0.0;
        for (std::size_t i = 0; i < trees.size(); ++i) {
            g.reset();
            rng::Rng neg = rng::substream(seed, "negative",
                                          static_cast<std::uint64_t>(s) * trees.size() + i);
            ExampleLoss el = tree_example_loss(g, m, trees[i], 0.0, lw, false, nullptr, &neg);
            if (!std::isfinite(el.values.total)) throw DivergedLoss("non-finite overfit loss");
            g.backward(el.total);
            rec_sum += el.values.l_rec_total;
        }
        opt.step(m.reg);
        per_node = rec_sum / static_cast<double>(total_nodes);
        if (stop_below > 0.0 && per_node < stop_below) break;
    }
    return per_node;
}

nn::EncoderConfig RunConfig::encoder_config() const {
    nn::EncoderConfig ec;
    ec.embed_dim = embed_dim;
    ec.hidden = hidden;
    ec.latent = latent;
    ec.layers = layers;
    ec.dropout = enc_dropout;
    return ec;
}

nn::DecoderConfig RunConfig::decoder_config() const {
    nn::DecoderConfig dc;
    dc.embed_dim = embed_dim;
    dc.hidden = hidden;
    dc.latent = latent;
    dc.literal_head = literal_head;
    dc.max_nodes = max_nodes;
    return dc;
}

nn::BaselineConfig RunConfig::baseline_config() const {
    nn::BaselineConfig bc;
    bc.embed_dim = embed_dim;
    bc.hidden = hidden;
    bc.latent = latent;
    bc.adaptive_head = adaptive_head;
    bc.word_dropout = train.word_dropout;  // the model owns the rate at run time
    bc.max_len = max_len;
    return bc;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig rc;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key=value on config line " + std::to_string(lineno));
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));

        auto real = [&]() {
            std::size_t pos = 0;
            double d;
            try {
                d = std::stod(val, &pos);
            } catch (const std::exception&) {
                throw ConfigError("bad value for " + key + ": " + val);
            }
            if (pos != val.size()) throw ConfigError("bad value for " + key + ": " + val);
            return d;
        };
        auto integer = [&]() {
            std::size_t pos = 0;
            long long x;
            try {
                x = std::stoll(val, &pos);
            } catch (const std::exception&) {
                throw ConfigError("bad value for " + key + ": " + val);
            }
            if (pos != val.size()) throw ConfigError("bad value for " + key + ": " + val);
            return static_cast<int>(x);
        };
        auto unsigned64 = [&]() {
            std::size_t pos = 0;
            unsigned long long x;
            try {
                x = std::stoull(val, &pos);
            } catch (const std::exception&) {
                throw ConfigError("bad value for " + key + ": " + val);
            }
            if (pos != val.size()) throw ConfigError("bad value for " + key + ": " + val);
            return static_cast<std::uint64_t>(x);
        };

        if (key == "lr") rc.train.lr = real();
        else if (key == "epochs") rc.train.epochs = integer();
        else if (key == "patience") rc.train.patience = integer();
        else if (key == "batch_size") rc.train.batch_size = integer();
        else if (key == "cycles") rc.train.cycles = integer();
        else if (key == "ramp_fraction") rc.train.ramp_fraction = real();
        else if (key == "word_dropout") rc.train.word_dropout = real();
        else if (key == "seed") rc.train.seed = unsigned64();
        else if (key == "w_offspring") rc.train.weights.offspring = real();
        else if (key == "w_sibling") rc.train.weights.sibling = real();
        else if (key == "w_reserved") rc.train.weights.reserved = real();
        else if (key == "w_label") rc.train.weights.label = real();
        else if (key == "w_identifier") rc.train.weights.identifier = real();
        else if (key == "embed_dim") rc.embed_dim = integer();
        else if (key == "hidden") rc.hidden = integer();
        else if (key == "latent") rc.latent = integer();
        else if (key == "layers") rc.layers = integer();
        else if (key == "enc_dropout") rc.enc_dropout = real();
        else if (key == "literal_head") rc.literal_head = integer();
        else if (key == "adaptive_head") rc.adaptive_head = integer();
        else if (key == "max_nodes") rc.max_nodes = integer();
        else if (key == "max_len") rc.max_len = integer();
        else throw ConfigError("unknown config key: " + key);
    }

    rc.train.validate();
    for (int v : {rc.embed_dim, rc.hidden, rc.latent, rc.layers, rc.literal_head,
                  rc.adaptive_head, rc.max_nodes, rc.max_len})
        if (v < 1) throw ConfigError("model dimensions must be positive");
    if (rc.enc_dropout < 0.0 || rc.enc_dropout >= 1.0)
        throw ConfigError("enc_dropout must lie in [0, 1)");
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

}  // namespace treevae::train
