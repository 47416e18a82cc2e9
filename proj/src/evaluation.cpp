#include "treevae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "treevae/baseline.hpp"
#include "treevae/rng.hpp"

namespace treevae::eval {

using nlohmann::json;
using treelang::AstTree;

double bleu(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
            int max_n) {
    if (max_n < 1 || max_n > 4) throw OutOfRange("BLEU order must lie in 1..4");
    if (reference.empty()) throw EmptyReference("BLEU needs a non-empty reference");
    if (candidate.empty()) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        std::map<std::string, int> ref_counts;
        for (int i = 0; i + n <= static_cast<int>(reference.size()); ++i) {
            std::string key;
            for (int j = 0; j < n; ++j) key += reference[i + j] + '\x1f';
            ++ref_counts[key];
        }
        int total = 0, matched = 0;
        std::map<std::string, int> used;
        for (int i = 0; i + n <= static_cast<int>(candidate.size()); ++i) {
            std::string key;
            for (int j = 0; j < n; ++j) key += candidate[i + j] + '\x1f';
            ++total;
            auto it = ref_counts.find(key);
            if (it != ref_counts.end() && used[key] < it->second) {
                ++used[key];
                ++matched;
            }
        }
        double p = (total > 0 && matched > 0) ? static_cast<double>(matched) / total : 1e-9;
        log_sum += std::log(p);
    }
    double gm = std::exp(log_sum / max_n);
    double bp = candidate.size() >= reference.size()
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(reference.size()) / candidate.size());
    return bp * gm;
}

std::vector<std::string> split_tokens(const std::string& canonical) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < canonical.size()) {
        std::size_t sp = canonical.find(' ', pos);
        if (sp == std::string::npos) sp = canonical.size();
        if (sp > pos) out.push_back(canonical.substr(pos, sp - pos));
        pos = sp + 1;
    }
    return out;
}

std::map<std::string, int> error_taxonomy(const std::vector<treelang::ValidationReport>& reports) {
    std::map<std::string, int> hist;
    for (const auto& rep : reports) {
        if (rep.ok) continue;
        for (const auto& err : rep.errors) ++hist[treelang::validation_error_name(err.kind)];
    }
    return hist;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string bleu_line(const std::array<double, 4>& b) {
    std::string s;
    for (int n = 0; n < 4; ++n) {
        if (n) s += ' ';
        s += "bleu" + std::to_string(n + 1) + ' ' + fmt(b[n]);
    }
    return s;
}

json bleu_json(const std::array<double, 4>& b) {
    return json{{"bleu1", b[0]}, {"bleu2", b[1]}, {"bleu3", b[2]}, {"bleu4", b[3]}};
}

struct BucketAcc {
    int count = 0;
    int compiled = 0;
    std::array<double, 4> bleu_sum{};
    std::vector<std::vector<std::string>> refs;
};

// candidate tokens + whether the decode compiles
using Recon = std::function<std::pair<std::vector<std::string>, bool>(const corpus::CorpusRecord&)>;
using Prior = std::function<std::vector<std::string>(const std::vector<double>&)>;

EvalReport run_eval(const std::string& kind, int latent,
                    const std::vector<corpus::CorpusRecord>& test, const EvalOptions& opt,
                    const Recon& recon, const Prior& prior) {
    opt.sampler.validate();
    if (test.empty()) throw EmptyInput("no test records to evaluate");

    std::map<corpus::SizeBucket, BucketAcc> acc;
    for (const auto& rec : test) {
        std::vector<std::string> ref = nn::sequence_tokens(rec.source);
        auto [cand, ok] = recon(rec);
        BucketAcc& a = acc[corpus::bucket_of(rec.token_count)];
        ++a.count;
        a.compiled += ok ? 1 : 0;
        for (int n = 1; n <= 4; ++n) a.bleu_sum[n - 1] += bleu(cand, ref, n);
        a.refs.push_back(std::move(ref));
    }

    EvalReport rep;
    rep.model_kind = kind;
    std::array<double, 4> raw_sum{}, corr_sum{};
    int compiled_sum = 0;
    for (auto& [bucket, a] : acc) {
        BucketScores bs;
        bs.bucket = corpus::bucket_name(bucket);
        bs.count = a.count;
        bs.compile_rate = static_cast<double>(a.compiled) / a.count;
        for (int n = 0; n < 4; ++n) {
            bs.raw[n] = a.bleu_sum[n] / a.count;
            raw_sum[n] += a.bleu_sum[n];
        }
        compiled_sum += a.compiled;
        rep.count += a.count;

        if (opt.corrected) {
            int n_random = opt.n_random > 0 ? opt.n_random : a.count;
            std::array<double, 4> csum{};
            for (int i = 0; i < n_random; ++i) {
                rng::Rng zr = rng::substream(opt.seed, "correction-" + bs.bucket,
                                             static_cast<std::uint64_t>(i));
                std::vector<std::string> cand = prior(zr.normal_vec(latent));
                const auto& ref = a.refs[i % a.refs.size()];
                for (int n = 1; n <= 4; ++n) csum[n - 1] += bleu(cand, ref, n);
            }
            for (int n = 0; n < 4; ++n) {
                bs.correction[n] = csum[n] / n_random;
                bs.corrected[n] = std::max(0.0, bs.raw[n] - bs.correction[n]);
                corr_sum[n] += bs.correction[n] * a.count;
            }
        }
        rep.buckets.push_back(std::move(bs));
    }

    rep.compile_rate = static_cast<double>(compiled_sum) / rep.count;
    for (int n = 0; n < 4; ++n) rep.raw[n] = raw_sum[n] / rep.count;
    if (opt.corrected) {
        rep.has_correction = true;
        for (int n = 0; n < 4; ++n) {
            rep.correction[n] = corr_sum[n] / rep.count;
            rep.corrected[n] = std::max(0.0, rep.raw[n] - rep.correction[n]);
        }
    }
    return rep;
}

std::vector<std::string> seq_output_tokens(const std::vector<int>& ids,
                                           const nn::SeqVocab& vocab) {
    std::vector<std::string> out;
    for (std::size_t i = 1; i < ids.size(); ++i) {
        if (ids[i] == nn::SeqVocab::kEos) break;
        out.push_back(vocab.tokens[ids[i]]);
    }
    return out;
}

bool tokens_compile(const std::vector<std::string>& tokens) {
    std::string src;
    for (const auto& t : tokens) {
        if (!src.empty()) src += ' ';
        src += t;
    }
    try {
        return treelang::validate(treelang::parse_source(src)).ok;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace

EvalReport evaluate_tree(const train::TreeModel& m,
                         const std::vector<corpus::CorpusRecord>& test, const EvalOptions& opt) {
    Recon recon = [&](const corpus::CorpusRecord& rec) {
        AstTree t = treelang::anonymize_identifiers(treelang::parse_source(rec.source));
        nn::Graph g;
        auto out = m.encoder->encode(g, t, false, nullptr);
        AstTree dec = m.decoder->decode(g.value(out.mu), opt.sampler);
        return std::pair{split_tokens(treelang::serialize(dec)), treelang::validate(dec).ok};
    };
    Prior prior = [&](const std::vector<double>& z) {
        return split_tokens(treelang::serialize(m.decoder->decode(z, opt.sampler)));
    };
    return run_eval(train::kTreeKind, m.enc_cfg.latent, test, opt, recon, prior);
}

EvalReport evaluate_seq(const train::SeqModel& m, const std::vector<corpus::CorpusRecord>& test,
                        const EvalOptions& opt) {
    Recon recon = [&](const corpus::CorpusRecord& rec) {
        auto ids = nn::to_ids(m.vocab, nn::sequence_tokens(rec.source));
        nn::Graph g;
        auto post = m.vae->encode_sequence(g, ids, false, nullptr);
        auto out_ids = m.vae->decode_sequence(g.value(post.mu), opt.sampler);
        auto toks = seq_output_tokens(out_ids, m.vocab);
        bool ok = tokens_compile(toks);
        return std::pair{std::move(toks), ok};
    };
    Prior prior = [&](const std::vector<double>& z) {
        return seq_output_tokens(m.vae->decode_sequence(z, opt.sampler), m.vocab);
    };
    return run_eval(train::kSeqKind, m.cfg.latent, test, opt, recon, prior);
}

json EvalReport::to_json() const {
    json buckets_json = json::array();
    for (const auto& b : buckets) {
        json jb = {{"bucket", b.bucket},
                   {"count", b.count},
                   {"raw", bleu_json(b.raw)},
                   {"compile_rate", b.compile_rate}};
        if (has_correction) {
            jb["correction"] = bleu_json(b.correction);
            jb["corrected"] = bleu_json(b.corrected);
        }
        buckets_json.push_back(std::move(jb));
    }
    json j = {{"model_kind", model_kind},
              {"count", count},
              {"raw", bleu_json(raw)},
              {"compile_rate", compile_rate},
              {"buckets", std::move(buckets_json)}};
    if (has_correction) {
        j["correction"] = bleu_json(correction);
        j["corrected"] = bleu_json(corrected);
    }
    return j;
}

std::string EvalReport::to_text(bool with_buckets) const {
    std::ostringstream o;
    o << "model: " << model_kind << "\n";
    o << "test records: " << count << "\n";
    o << "overall: " << bleu_line(raw) << " compile_rate " << fmt(compile_rate) << "\n";
    if (with_buckets)
        for (const auto& b : buckets)
            o << "bucket " << b.bucket << " (n=" << b.count << "): " << bleu_line(b.raw)
              << " compile_rate " << fmt(b.compile_rate) << "\n";
    if (has_correction) {
        o << "correction: " << bleu_line(correction) << "\n";
        o << "corrected: " << bleu_line(corrected) << "\n";
        if (with_buckets)
            for (const auto& b : buckets)
                o << "bucket " << b.bucket << " corrected: " << bleu_line(b.corrected) << "\n";
    }
    return o.str();
}

namespace {

json mode_json(const GenerativeModeReport& m) {
    return json{{"compile_rate", m.compile_rate},
                {"wellformed_rate", m.wellformed_rate},
                {"errors", m.errors}};
}

}  // namespace

json GenerativeReport::to_json() const {
    return json{{"model_kind", model_kind},
                {"n", n},
                {"greedy", mode_json(greedy)},
                {"sampled", mode_json(sampled)}};
}

std::string GenerativeReport::to_text() const {
    std::ostringstream o;
    o << "model: " << model_kind << "\n";
    o << "prior samples: " << n << "\n";
    auto mode = [&](const char* name, const GenerativeModeReport& m) {
        o << name << ": compile_rate " << fmt(m.compile_rate) << " wellformed_rate "
          << fmt(m.wellformed_rate) << "\n";
        for (const auto& [kind, cnt] : m.errors) o << "  " << kind << " " << cnt << "\n";
    };
    mode("greedy", greedy);
    mode("sampled", sampled);
    return o.str();
}

namespace {

sampling::SamplerConfig paper_sampler(std::uint64_t seed, std::uint64_t index) {
    sampling::SamplerConfig s;
    s.mode = sampling::Mode::Sample;
    s.k = 40;
    s.p = 0.9;
    s.temperature = 0.7;
    s.seed = rng::derive(seed, "sample", index);
    return s;
}

}  // namespace

GenerativeReport generative_tree(const train::TreeModel& m, int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("generative study needs at least one sample");
    GenerativeReport rep;
    rep.model_kind = train::kTreeKind;
    rep.n = n;
    sampling::SamplerConfig greedy;
    std::vector<treelang::ValidationReport> gfail, sfail;
    int gc = 0, sc = 0, gw = 0, sw = 0;
    for (int i = 0; i < n; ++i) {
        auto z = rng::substream(seed, "z", static_cast<std::uint64_t>(i))
                     .normal_vec(m.enc_cfg.latent);
        AstTree tg = m.decoder->decode(z, greedy);
        gw += treelang::structurally_sound(tg) ? 1 : 0;
        auto rg = treelang::validate(tg);
        if (rg.ok) ++gc; else gfail.push_back(std::move(rg));

        AstTree ts = m.decoder->decode(z, paper_sampler(seed, static_cast<std::uint64_t>(i)));
        sw += treelang::structurally_sound(ts) ? 1 : 0;
        auto rs = treelang::validate(ts);
        if (rs.ok) ++sc; else sfail.push_back(std::move(rs));
    }
    rep.greedy = {static_cast<double>(gc) / n, static_cast<double>(gw) / n,
                  error_taxonomy(gfail)};
    rep.sampled = {static_cast<double>(sc) / n, static_cast<double>(sw) / n,
                   error_taxonomy(sfail)};
    return rep;
}

GenerativeReport generative_seq(const train::SeqModel& m, int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("generative study needs at least one sample");
    GenerativeReport rep;
    rep.model_kind = train::kSeqKind;
    rep.n = n;
    sampling::SamplerConfig greedy;
    std::vector<treelang::ValidationReport> gfail, sfail;
    int gc = 0, sc = 0, gw = 0, sw = 0;
    auto score = [&](const std::vector<int>& ids, int& compiled, int& wellformed,
                     std::vector<treelang::ValidationReport>& fail) {
        auto toks = seq_output_tokens(ids, m.vocab);
        std::string src;
        for (const auto& t : toks) {
            if (!src.empty()) src += ' ';
            src += t;
        }
        try {
            AstTree t = treelang::parse_source(src);
            ++wellformed;
            auto r = treelang::validate(t);
            if (r.ok) ++compiled; else fail.push_back(std::move(r));
        } catch (const Error&) {
        }
    };
    for (int i = 0; i < n; ++i) {
        auto z =
            rng::substream(seed, "z", static_cast<std::uint64_t>(i)).normal_vec(m.cfg.latent);
        score(m.vae->decode_sequence(z, greedy), gc, gw, gfail);
        score(m.vae->decode_sequence(z, paper_sampler(seed, static_cast<std::uint64_t>(i))), sc,
              sw, sfail);
    }
    rep.greedy = {static_cast<double>(gc) / n, static_cast<double>(gw) / n,
                  error_taxonomy(gfail)};
    rep.sampled = {static_cast<double>(sc) / n, static_cast<double>(sw) / n,
                   error_taxonomy(sfail)};
    return rep;
}

}  // namespace treevae::eval
