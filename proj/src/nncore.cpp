#include "treevae/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace treevae::nn {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel()), 0.0f);
}

Tensor Tensor::full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::from_vector(std::vector<float> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data = std::move(v);
    return t;
}

std::int64_t Tensor::numel() const {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeMismatch("negative dimension");
        n *= d;
    }
    return shape.empty() ? 0 : n;
}

Param* ParamRegistry::add(const std::string& name, Tensor init) {
    if (by_name_.count(name)) throw Error("duplicate parameter name: " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->grad = Tensor(init.shape);
    p->value = std::move(init);
    Param* raw = p.get();
    by_name_[name] = raw;
    params_.push_back(std::move(p));
    return raw;
}

Param* ParamRegistry::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

const Param* ParamRegistry::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

void ParamRegistry::zero_grad() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
}

std::int64_t ParamRegistry::total_parameters() const {
    std::int64_t n = 0;
    for (auto& p : params_) n += p->value.numel();
    return n;
}

Tensor xavier_init(int fan_out, int fan_in, rng::Rng& r) {
    float limit = static_cast<float>(std::sqrt(6.0 / (fan_in + fan_out)));
    return uniform_init({fan_out, fan_in}, limit, r);
}

Tensor uniform_init(std::vector<int> shape, float limit, rng::Rng& r) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(r.uniform(-limit, limit));
    return t;
}

std::vector<double> linear(const std::vector<double>& w, int m, int n,
                           const std::vector<double>& x, const std::vector<double>* bias) {
    if (static_cast<int>(w.size()) != m * n || static_cast<int>(x.size()) != n)
        throw ShapeMismatch("linear: bad operand sizes");
    if (bias && static_cast<int>(bias->size()) != m) throw ShapeMismatch("linear: bad bias size");
    std::vector<double> y(m, 0.0);
    for (int i = 0; i < m; ++i) {
        double acc = bias ? (*bias)[i] : 0.0;
        const double* row = w.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

std::vector<double> softmax(const std::vector<double>& v) {
    if (v.empty()) throw EmptyInput("softmax of empty vector");
    double m = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (auto& o : out) o /= sum;
    return out;
}

std::vector<double> log_softmax(const std::vector<double>& v) {
    if (v.empty()) throw EmptyInput("log_softmax of empty vector");
    double m = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - m);
    double lse = m + std::log(sum);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
    return out;
}

static double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

LstmState lstm_cell(const std::vector<double>& w, const std::vector<double>& u,
                    const std::vector<double>& b, int hidden, int input,
                    const std::vector<double>& x, const LstmState& prev) {
    int h4 = 4 * hidden;
    if (static_cast<int>(w.size()) != h4 * input || static_cast<int>(u.size()) != h4 * hidden ||
        static_cast<int>(b.size()) != h4)
        throw ShapeMismatch("lstm_cell: bad parameter sizes");
    auto z = linear(w, h4, input, x, &b);
    auto uh = linear(u, h4, hidden, prev.h, nullptr);
    for (int i = 0; i < h4; ++i) z[i] += uh[i];
    LstmState next;
    next.h.resize(hidden);
    next.c.resize(hidden);
    for (int k = 0; k < hidden; ++k) {
        double i = stable_sigmoid(z[k]);
        double f = stable_sigmoid(z[hidden + k]);
        double o = stable_sigmoid(z[2 * hidden + k]);
        double g = std::tanh(z[3 * hidden + k]);
        next.c[k] = f * prev.c[k] + i * g;
        next.h[k] = o * std::tanh(next.c[k]);
    }
    return next;
}

static const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t n) {
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        unsigned v = data[i] << 16;
        if (i + 1 < n) v |= data[i + 1] << 8;
        if (i + 2 < n) v |= data[i + 2];
        out.push_back(kB64[(v >> 18) & 63]);
        out.push_back(kB64[(v >> 12) & 63]);
        out.push_back(i + 1 < n ? kB64[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < n ? kB64[v & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (text.size() % 4 != 0) throw CorruptCheckpoint("base64 length not a multiple of four");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int pad = 0;
        unsigned v = 0;
        for (int k = 0; k < 4; ++k) {
            char c = text[i + k];
            if (c == '=') {
                if (i + 4 != text.size() || k < 2) throw CorruptCheckpoint("misplaced base64 padding");
                ++pad;
                v <<= 6;
                continue;
            }
            if (pad) throw CorruptCheckpoint("data after base64 padding");
            int d = val(c);
            if (d < 0) throw CorruptCheckpoint("invalid base64 character");
            v = (v << 6) | static_cast<unsigned>(d);
        }
        out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
    }
    return out;
}

int Vocab::id_of(treelang::TokenCategory c, const std::string& text) const {
    int id = find_id(c, text);
    if (id < 0)
        throw OutOfVocab("token '" + text + "' missing from " +
                         std::string(treelang::category_name(c)) + " table");
    return id;
}

int Vocab::find_id(treelang::TokenCategory c, const std::string& text) const {
    const auto& ix = index[static_cast<int>(c)];
    auto it = ix.find(text);
    return it == ix.end() ? -1 : it->second;
}

void Vocab::rebuild_index() {
    for (int c = 0; c < 5; ++c) {
        index[c].clear();
        for (std::size_t i = 0; i < tables[c].size(); ++i)
            index[c][tables[c][i]] = static_cast<int>(i);
    }
}

nlohmann::json Vocab::to_json() const {
    using treelang::TokenCategory;
    nlohmann::json j;
    j["reserved"] = tables[static_cast<int>(TokenCategory::Reserved)];
    j["type"] = tables[static_cast<int>(TokenCategory::Type)];
    j["builtin"] = tables[static_cast<int>(TokenCategory::Builtin)];
    j["literal"] = tables[static_cast<int>(TokenCategory::Literal)];
    j["identifier_count"] = size(TokenCategory::Identifier);
    j["literal_counts"] = literal_counts;
    return j;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
    using treelang::TokenCategory;
    Vocab v;
    try {
        v.tables[static_cast<int>(TokenCategory::Reserved)] = j.at("reserved").get<std::vector<std::string>>();
        v.tables[static_cast<int>(TokenCategory::Type)] = j.at("type").get<std::vector<std::string>>();
        v.tables[static_cast<int>(TokenCategory::Builtin)] = j.at("builtin").get<std::vector<std::string>>();
        v.tables[static_cast<int>(TokenCategory::Literal)] = j.at("literal").get<std::vector<std::string>>();
        int idn = j.at("identifier_count").get<int>();
        for (int k = 0; k < idn; ++k)
            v.tables[static_cast<int>(TokenCategory::Identifier)].push_back("ID" + std::to_string(k));
        v.literal_counts = j.at("literal_counts").get<std::vector<std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("bad vocab section: ") + e.what());
    }
    if (v.literal_counts.size() != v.tables[static_cast<int>(TokenCategory::Literal)].size())
        throw CorruptCheckpoint("literal count table size mismatch");
    v.rebuild_index();
    return v;
}

static void collect_tokens(const treelang::AstNode& n,
                           std::array<std::set<std::string>, 5>& seen,
                           std::map<std::string, std::int64_t>& lit_counts) {
    int c = static_cast<int>(n.category);
    if (n.is_leaf()) {
        seen[c].insert(n.label);
        if (n.category == treelang::TokenCategory::Literal) ++lit_counts[n.label];
    } else {
        seen[static_cast<int>(treelang::TokenCategory::Reserved)].insert(n.label);
    }
    for (const auto& ch : n.children) collect_tokens(ch, seen, lit_counts);
}

Vocab build_vocab(const std::vector<corpus::CorpusRecord>& records, int identifier_headroom) {
    using treelang::TokenCategory;
    if (records.empty()) throw EmptyInput("cannot build a vocabulary from zero records");
    std::array<std::set<std::string>, 5> seen;
    std::map<std::string, std::int64_t> lit_counts;
    int max_ids = 0;
    for (const auto& rec : records) {
        auto tree = treelang::parse_source(rec.source);
        auto anon = treelang::anonymize_identifiers(tree);
        collect_tokens(anon.root, seen, lit_counts);
        max_ids = std::max(max_ids, static_cast<int>(anon.declared_ids.size()));
    }
    Vocab v;
    for (int c : {static_cast<int>(TokenCategory::Reserved), static_cast<int>(TokenCategory::Type),
                  static_cast<int>(TokenCategory::Builtin), static_cast<int>(TokenCategory::Literal)})
        v.tables[c].assign(seen[c].begin(), seen[c].end());
    int idn = max_ids + identifier_headroom;
    for (int k = 0; k < idn; ++k)
        v.tables[static_cast<int>(TokenCategory::Identifier)].push_back("ID" + std::to_string(k));
    for (const auto& lit : v.tables[static_cast<int>(TokenCategory::Literal)])
        v.literal_counts.push_back(lit_counts[lit]);
    for (int c = 0; c < 5; ++c)
        if (v.tables[c].empty()) throw EmptyCategoryTable(std::string(treelang::category_name(static_cast<TokenCategory>(c))) + " table is empty");
    v.rebuild_index();
    return v;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(ParamRegistry& reg) {
    const auto& ps = reg.all();
    if (m_.size() < ps.size()) {
        for (std::size_t i = m_.size(); i < ps.size(); ++i) {
            m_.emplace_back(ps[i]->value.numel(), 0.0);
            v_.emplace_back(ps[i]->value.numel(), 0.0);
        }
    }
    ++t_;
    double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& p = *ps[i];
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < p.value.data.size(); ++k) {
            double g = p.grad.data[k];
            m[k] = b1_ * m[k] + (1.0 - b1_) * g;
            v[k] = b2_ * v[k] + (1.0 - b2_) * g * g;
            double mh = m[k] / c1;
            double vh = v[k] / c2;
            p.value.data[k] = static_cast<float>(p.value.data[k] - lr_ * mh / (std::sqrt(vh) + eps_));
        }
    }
}

}  // namespace treevae::nn
