#include "treevae/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "treevae/treelang.hpp"

namespace treevae::corpus {

using treelang::AstNode;
using treelang::AstTree;
using treelang::TokenCategory;

CorpusRecord record_from_source(std::string id, const std::string& source) {
    CorpusRecord rec;
    rec.id = std::move(id);
    rec.source = source;
    AstTree tree = treelang::parse_source(source);
    rec.node_count = tree.size;
    rec.token_count = static_cast<int>(treelang::tokenize(source).size());
    return rec;
}

// ---------------------------------------------------------------------------
// Program generator. Programs are assembled directly as typed ASTs so that
// every emitted record validates; sizes follow a mixture over node-count
// targets whose tail deliberately overshoots the 750-node cap a little.

namespace {

enum class GType { Int, Bool, Arr, Void };

struct VarInfo {
    std::string name;
    GType type;
};

struct FuncInfo {
    std::string name;
    GType ret;
    std::vector<GType> params;
};

const char* kNamePool[] = {
    "a",   "b",   "c",   "d",   "e",    "f",   "g",   "h",   "i",    "j",
    "k",   "m",   "n",   "p",   "q",    "r",   "s",   "t",   "u",    "v",
    "w",   "x",   "y",   "z",   "acc",  "cnt", "sum", "tmp", "val",  "num",
    "pos", "idx", "lo",  "hi",  "step", "res", "buf", "out", "flag", "size",
};

struct Gen {
    rng::Rng& rng;
    int target;
    int count = 0;  // nodes created so far
    int names_used = 0;
    std::vector<std::vector<VarInfo>> scopes;
    std::vector<FuncInfo> funcs;  // helpers declared so far

    Gen(rng::Rng& r, int target_nodes) : rng(r), target(target_nodes) {}

    AstNode mk(std::string label, TokenCategory cat, std::vector<AstNode> children = {}) {
        ++count;
        AstNode n;
        n.label = std::move(label);
        n.category = cat;
        n.children = std::move(children);
        return n;
    }
    AstNode reserved(std::string label, std::vector<AstNode> children = {}) {
        return mk(std::move(label), TokenCategory::Reserved, std::move(children));
    }
    AstNode ident(const std::string& name) { return mk(name, TokenCategory::Identifier); }
    AstNode type_marker(GType t) {
        const char* name = t == GType::Int ? "int"
                           : t == GType::Bool ? "bool"
                           : t == GType::Arr ? "int[]"
                                             : "void";
        return reserved("type", {mk(name, TokenCategory::Type)});
    }
    AstNode int_literal(std::int64_t v) {
        return reserved("literal", {mk(std::to_string(v), TokenCategory::Literal)});
    }
    AstNode bool_literal(bool v) {
        return reserved("literal", {mk(v ? "true" : "false", TokenCategory::Literal)});
    }
    AstNode builtin_call(const std::string& name, std::vector<AstNode> args) {
        std::vector<AstNode> children;
        children.push_back(
            reserved("built-in-function-name", {mk(name, TokenCategory::Builtin)}));
        for (auto& a : args) children.push_back(std::move(a));
        return reserved("call", std::move(children));
    }

    std::string fresh_name() {
        constexpr int pool = sizeof(kNamePool) / sizeof(kNamePool[0]);
        int k = names_used++;
        if (k < pool) return kNamePool[k];
        return kNamePool[k % pool] + std::to_string(k / pool);
    }

    std::vector<const VarInfo*> vars_of(GType t) {
        std::vector<const VarInfo*> out;
        for (const auto& scope : scopes)
            for (const auto& v : scope)
                if (v.type == t) out.push_back(&v);
        return out;
    }

    std::vector<const FuncInfo*> funcs_of(GType ret) {
        std::vector<const FuncInfo*> out;
        for (const auto& f : funcs)
            if (f.ret == ret) out.push_back(&f);
        return out;
    }

    template <typename T>
    const T* pick(const std::vector<const T*>& xs) {
        return xs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(xs.size()) - 1))];
    }

    bool over_budget() const { return count >= target; }

    std::int64_t small_int() {
        return rng.uniform() < 0.5 ? rng.uniform_int(0, 9) : rng.uniform_int(0, 99);
    }

    AstNode int_expr(int depth) {
        auto ints = vars_of(GType::Int);
        auto arrs = vars_of(GType::Arr);
        auto fns = funcs_of(GType::Int);
        while (true) {
            double u = rng.uniform();
            if (u < 0.34 || depth <= 0 || over_budget()) {
                if (!ints.empty() && rng.uniform() < 0.6) return ident(pick(ints)->name);
                return int_literal(small_int());
            }
            if (u < 0.70) {
                std::string op;
                double o = rng.uniform();
                if (o < 0.35) op = "+";
                else if (o < 0.6) op = "-";
                else if (o < 0.8) op = "*";
                else if (o < 0.9) op = "/";
                else op = "%";
                AstNode lhs = int_expr(depth - 1);
                AstNode rhs = int_expr(depth - 1);
                return reserved(op, {std::move(lhs), std::move(rhs)});
            }
            if (u < 0.78 && !arrs.empty()) {
                const auto* a = pick(arrs);
                return reserved("index", {ident(a->name), int_expr(depth - 1)});
            }
            if (u < 0.84 && !arrs.empty())
                return builtin_call("len", {make_ident(pick(arrs)->name)});
            if (u < 0.88) return builtin_call("read", {});
            if (u < 0.96 && !fns.empty()) return call_expr(*pick(fns), depth);
            // fall through and redraw
        }
    }

    AstNode make_ident(const std::string& name) { return ident(name); }

    AstNode bool_expr(int depth) {
        auto bools = vars_of(GType::Bool);
        auto fns = funcs_of(GType::Bool);
        while (true) {
            double u = rng.uniform();
            if (u < 0.22 || depth <= 0 || over_budget()) {
                if (!bools.empty() && rng.uniform() < 0.5) return ident(pick(bools)->name);
                return bool_literal(rng.uniform() < 0.5);
            }
            if (u < 0.70) {
                std::string op;
                double o = rng.uniform();
                if (o < 0.3) op = "<";
                else if (o < 0.6) op = ">";
                else if (o < 0.8) op = "==";
                else op = "!=";
                return reserved(op, {int_expr(depth - 1), int_expr(depth - 1)});
            }
            if (u < 0.86) {
                std::string op = rng.uniform() < 0.5 ? "&&" : "||";
                return reserved(op, {bool_expr(depth - 1), bool_expr(depth - 1)});
            }
            if (u < 0.94 && !fns.empty()) return call_expr(*pick(fns), depth);
        }
    }

    AstNode expr_of(GType t, int depth) {
        return t == GType::Int ? int_expr(depth) : bool_expr(depth);
    }

    AstNode call_expr(const FuncInfo& f, int depth) {
        std::vector<AstNode> children;
        children.push_back(ident(f.name));
        for (GType p : f.params) children.push_back(expr_of(p, depth > 0 ? depth - 1 : 0));
        return reserved("call", std::move(children));
    }

    AstNode declare_var(GType t, bool with_init) {
        std::string name = fresh_name();
        std::vector<AstNode> children;
        children.push_back(type_marker(t));
        children.push_back(ident(name));
        if (with_init && t != GType::Arr) children.push_back(expr_of(t, 2));
        scopes.back().push_back({name, t});
        return reserved("var-decl", std::move(children));
    }

    AstNode bounded_loop(int block_depth) {
        // int i ; i = 0 ; while ( i < K ) { ... i = i + 1 ; }
        std::string name = fresh_name();
        AstNode decl = reserved("var-decl", {type_marker(GType::Int), ident(name)});
        AstNode init = reserved("assign", {ident(name), int_literal(0)});
        scopes.back().push_back({name, GType::Int});
        AstNode cond = reserved("<", {ident(name), int_literal(rng.uniform_int(2, 9))});
        scopes.emplace_back();
        std::vector<AstNode> body;
        int inner = rng.uniform_int(1, 3);
        for (int k = 0; k < inner && !over_budget(); ++k) append_statement(body, block_depth);
        scopes.pop_back();
        body.push_back(reserved(
            "assign", {ident(name), reserved("+", {ident(name), int_literal(1)})}));
        AstNode loop = reserved("while", {std::move(cond), reserved("block", std::move(body))});
        // Returned as a pack that append_statement splices into the caller.
        std::vector<AstNode> stmts;
        stmts.push_back(std::move(decl));
        stmts.push_back(std::move(init));
        stmts.push_back(std::move(loop));
        AstNode pack = reserved("block", std::move(stmts));
        --count;  // the pack node itself is unwrapped by the caller
        return pack;
    }

    AstNode block_of(int n_stmts, int block_depth) {
        scopes.emplace_back();
        std::vector<AstNode> stmts;
        for (int k = 0; k < n_stmts && !over_budget(); ++k) append_statement(stmts, block_depth);
        scopes.pop_back();
        return reserved("block", std::move(stmts));
    }

    void append_statement(std::vector<AstNode>& out, int block_depth) {
        AstNode s = statement(block_depth);
        if (s.label == "block") {
            for (auto& c : s.children) out.push_back(std::move(c));
        } else {
            out.push_back(std::move(s));
        }
    }

    AstNode statement(int block_depth) {
        auto ints = vars_of(GType::Int);
        auto bools = vars_of(GType::Bool);
        auto arrs = vars_of(GType::Arr);
        while (true) {
            double u = rng.uniform();
            if (u < 0.16) {
                double v = rng.uniform();
                GType t = v < 0.62 ? GType::Int : v < 0.82 ? GType::Bool : GType::Arr;
                return declare_var(t, rng.uniform() < 0.55);
            }
            if (u < 0.34) {
                if (ints.empty() && bools.empty()) continue;
                bool use_int = !ints.empty() && (bools.empty() || rng.uniform() < 0.7);
                if (use_int) {
                    const auto* v = pick(ints);
                    return reserved("assign", {ident(v->name), int_expr(2)});
                }
                const auto* v = pick(bools);
                return reserved("assign", {ident(v->name), bool_expr(2)});
            }
            if (u < 0.40) {
                if (arrs.empty()) continue;
                const auto* a = pick(arrs);
                if (rng.uniform() < 0.6)
                    return reserved("expr-stmt",
                                    {builtin_call("push", {ident(a->name), int_expr(2)})});
                return reserved("assign",
                                {reserved("index", {ident(a->name), int_expr(1)}), int_expr(2)});
            }
            if (u < 0.52) return reserved("expr-stmt", {builtin_call("print", {int_expr(2)})});
            if (u < 0.58) {
                if (ints.empty()) continue;
                const auto* v = pick(ints);
                return reserved("assign", {ident(v->name), builtin_call("read", {})});
            }
            if (u < 0.72 && block_depth < 3) {
                AstNode cond = bool_expr(2);
                AstNode then = block_of(rng.uniform_int(1, 3), block_depth + 1);
                if (rng.uniform() < 0.45) {
                    AstNode other = block_of(rng.uniform_int(1, 2), block_depth + 1);
                    return reserved("if-else",
                                    {std::move(cond), std::move(then), std::move(other)});
                }
                return reserved("if", {std::move(cond), std::move(then)});
            }
            if (u < 0.84 && block_depth < 3) {
                if (rng.uniform() < 0.05) {
                    // occasional free-form loop; may not terminate
                    AstNode cond = bool_expr(1);
                    return reserved("while",
                                    {std::move(cond), block_of(rng.uniform_int(1, 2),
                                                               block_depth + 1)});
                }
                return bounded_loop(block_depth + 1);
            }
            if (u < 0.90) {
                auto voids = funcs_of(GType::Void);
                if (voids.empty()) continue;
                return reserved("expr-stmt", {call_expr(*pick(voids), 1)});
            }
            // redraw
        }
    }

    AstNode function(const std::string& name, GType ret, const std::vector<GType>& params,
                     int fn_target) {
        scopes.emplace_back();
        std::vector<AstNode> children;
        children.push_back(type_marker(ret));
        children.push_back(ident(name));
        std::vector<AstNode> param_nodes;
        for (GType p : params) {
            std::string pname = fresh_name();
            param_nodes.push_back(reserved("param", {type_marker(p), ident(pname)}));
            scopes.back().push_back({pname, p});
        }
        children.push_back(reserved("params", std::move(param_nodes)));

        std::vector<AstNode> stmts;
        while (count < fn_target) append_statement(stmts, 0);
        if (ret == GType::Int) stmts.push_back(reserved("return", {int_expr(2)}));
        else if (ret == GType::Bool) stmts.push_back(reserved("return", {bool_expr(2)}));
        else if (rng.uniform() < 0.3) stmts.push_back(reserved("return"));
        scopes.pop_back();
        children.push_back(reserved("block", std::move(stmts)));
        return reserved("func-decl", std::move(children));
    }

    AstTree program() {
        int n_helpers = 0;
        if (target > 45) n_helpers = static_cast<int>(rng.uniform_int(0, 1));
        if (target > 120) n_helpers = static_cast<int>(rng.uniform_int(0, 2));
        if (target > 300) n_helpers = static_cast<int>(rng.uniform_int(1, 3));

        std::vector<AstNode> fns;
        for (int h = 0; h < n_helpers; ++h) {
            double u = rng.uniform();
            GType ret = u < 0.55 ? GType::Int : u < 0.8 ? GType::Bool : GType::Void;
            std::vector<GType> params;
            int np = static_cast<int>(rng.uniform_int(0, 3));
            for (int p = 0; p < np; ++p)
                params.push_back(rng.uniform() < 0.75 ? GType::Int : GType::Bool);
            std::string name = fresh_name();
            int share = count + std::max(8, (target - count) / (n_helpers - h + 2));
            fns.push_back(function(name, ret, params, share));
            funcs.push_back({name, ret, params});
        }
        fns.push_back(function("main", GType::Int, {}, target));
        AstTree tree;
        tree.root = reserved("program", std::move(fns));
        tree.finalize();
        return tree;
    }
};

int draw_target(rng::Rng& r) {
    double u = r.uniform();
    if (u < 0.70) return static_cast<int>(r.uniform_int(15, 220));
    if (u < 0.92) return static_cast<int>(r.uniform_int(221, 520));
    if (u < 0.97) return static_cast<int>(r.uniform_int(521, 740));
    return static_cast<int>(r.uniform_int(741, 900));
}

}  // namespace

std::string generate_raw_program(rng::Rng& r) {
    Gen g(r, draw_target(r));
    return treelang::serialize(g.program());
}

std::vector<CorpusRecord> generate_corpus(int n, std::uint64_t seed, int max_nodes) {
    if (n <= 0) throw Error("generate_corpus: n must be positive");
    std::vector<CorpusRecord> out;
    out.reserve(static_cast<size_t>(n));
    std::unordered_set<std::string> seen;
    long long budget = 1000LL * n;
    for (long long attempt = 0; attempt < budget && static_cast<int>(out.size()) < n;
         ++attempt) {
        rng::Rng r = rng::substream(seed, "gen", static_cast<std::uint64_t>(attempt));
        std::string src = generate_raw_program(r);
        AstTree tree = treelang::parse_source(src);
        if (tree.size > max_nodes) continue;
        int tokens = static_cast<int>(treelang::tokenize(src).size());
        if (tokens > 750) continue;
        if (!seen.insert(src).second) continue;
        CorpusRecord rec;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "p%06d", static_cast<int>(out.size()));
        rec.id = idbuf;
        rec.source = std::move(src);
        rec.node_count = tree.size;
        rec.token_count = tokens;
        out.push_back(std::move(rec));
    }
    if (static_cast<int>(out.size()) < n)
        throw GenerationBudgetExceeded("generate_corpus: attempt budget exhausted at " +
                                       std::to_string(out.size()) + "/" + std::to_string(n));
    return out;
}

CorpusSplits filter_and_split(const std::vector<CorpusRecord>& records, const SplitSpec& spec) {
    double total = spec.train_fraction + spec.valid_fraction + spec.test_fraction;
    if (spec.train_fraction < 0 || spec.valid_fraction < 0 || spec.test_fraction < 0 ||
        total < 0.999 || total > 1.001)
        throw ConfigError("split fractions must be non-negative and sum to 1");

    std::vector<CorpusRecord> kept;
    for (const auto& r : records)
        if (r.node_count <= 750 && r.token_count <= 750) kept.push_back(r);

    rng::Rng r = rng::substream(spec.seed, "split");
    for (size_t i = kept.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(r.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(kept[i - 1], kept[j]);
    }

    size_t n = kept.size();
    size_t n_train = static_cast<size_t>(n * spec.train_fraction);
    size_t n_valid = static_cast<size_t>(n * spec.valid_fraction);
    if (n_train + n_valid > n) n_valid = n - n_train;
    size_t n_test = n - n_train - n_valid;
    if (n_train == 0 || n_valid == 0 || n_test == 0)
        throw EmptySplit("filter_and_split: a split is empty (" + std::to_string(n_train) + "/" +
                         std::to_string(n_valid) + "/" + std::to_string(n_test) + ")");

    CorpusSplits splits;
    splits.train.assign(kept.begin(), kept.begin() + n_train);
    splits.valid.assign(kept.begin() + n_train, kept.begin() + n_train + n_valid);
    splits.test.assign(kept.begin() + n_train + n_valid, kept.end());
    return splits;
}

const char* bucket_name(SizeBucket b) {
    switch (b) {
        case SizeBucket::Small: return "small";
        case SizeBucket::Medium: return "medium";
        case SizeBucket::Large: return "large";
    }
    return "?";
}

SizeBucket bucket_of(int token_count) {
    if (token_count < 1 || token_count > 750)
        throw OutOfRange("bucket_of: token count " + std::to_string(token_count) +
                         " outside [1, 750]");
    if (token_count <= 250) return SizeBucket::Small;
    if (token_count <= 500) return SizeBucket::Medium;
    return SizeBucket::Large;
}

void write_corpus(const std::string& path, const std::vector<CorpusRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_corpus: cannot open " + path);
    for (const auto& r : records) {
        nlohmann::json j;
        j["id"] = r.id;
        j["source"] = r.source;
        j["node_count"] = r.node_count;
        j["token_count"] = r.token_count;
        out << j.dump() << "\n";
    }
}

std::vector<CorpusRecord> read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_corpus: cannot open " + path);
    std::vector<CorpusRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id") || !j.contains("source") ||
            !j.contains("node_count") || !j.contains("token_count"))
            throw Error("read_corpus: bad record at " + path + ":" + std::to_string(lineno));
        CorpusRecord r;
        r.id = j["id"].get<std::string>();
        r.source = j["source"].get<std::string>();
        r.node_count = j["node_count"].get<int>();
        r.token_count = j["token_count"].get<int>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace treevae::corpus
