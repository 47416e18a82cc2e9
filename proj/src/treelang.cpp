#include "treevae/treelang.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cstdlib>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace treevae::treelang {

namespace {

const std::set<std::string> kTypes = {"int", "bool", "int[]", "void"};
const std::set<std::string> kBuiltins = {"print", "read", "push", "len"};
const std::set<std::string> kKeywords = {"if", "else", "while", "return"};
const std::set<std::string> kBinops = {"+", "-", "*", "/", "%", "<", ">", "==", "!=", "&&", "||"};

const char* kLiteralMarker = "literal";
const char* kTypeMarker = "type";
const char* kBuiltinMarker = "built-in-function-name";

bool is_marker(const std::string& label) {
    return label == kLiteralMarker || label == kTypeMarker || label == kBuiltinMarker;
}

int binop_precedence(const std::string& op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "<" || op == ">" || op == "==" || op == "!=") return 3;
    if (op == "+" || op == "-") return 4;
    return 5;  // * / %
}

bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

const char* category_name(TokenCategory c) {
    switch (c) {
        case TokenCategory::Reserved: return "reserved";
        case TokenCategory::Type: return "type";
        case TokenCategory::Builtin: return "builtin";
        case TokenCategory::Literal: return "literal";
        case TokenCategory::Identifier: return "identifier";
    }
    return "?";
}

std::vector<Token> tokenize(const std::string& source) {
    std::vector<Token> out;
    int line = 1, col = 1;
    size_t i = 0;
    auto advance = [&](size_t n) {
        for (size_t k = 0; k < n; ++k) {
            if (source[i + k] == '\n') { ++line; col = 1; } else { ++col; }
        }
        i += n;
    };
    while (i < source.size()) {
        char c = source[i];
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') { advance(1); continue; }
        int tl = line, tc = col;
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
            size_t j = i;
            while (j < source.size() && is_word_char(source[j])) ++j;
            std::string word = source.substr(i, j - i);
            advance(j - i);
            if (word == "int" && i + 1 < source.size() && source[i] == '[' && source[i + 1] == ']') {
                word = "int[]";
                advance(2);
            }
            TokenCategory cat;
            if (kTypes.count(word)) cat = TokenCategory::Type;
            else if (kBuiltins.count(word)) cat = TokenCategory::Builtin;
            else if (kKeywords.count(word)) cat = TokenCategory::Reserved;
            else if (word == "true" || word == "false") cat = TokenCategory::Literal;
            else cat = TokenCategory::Identifier;
            out.push_back({word, cat, tl, tc});
            continue;
        }
        if (c >= '0' && c <= '9') {
            size_t j = i;
            while (j < source.size() && source[j] >= '0' && source[j] <= '9') ++j;
            if (j < source.size() && is_word_char(source[j]))
                throw LexError("malformed number", tl, tc);
            out.push_back({source.substr(i, j - i), TokenCategory::Literal, tl, tc});
            advance(j - i);
            continue;
        }
        if (i + 1 < source.size()) {
            std::string two = source.substr(i, 2);
            if (two == "==" || two == "!=" || two == "&&" || two == "||") {
                out.push_back({two, TokenCategory::Reserved, tl, tc});
                advance(2);
                continue;
            }
        }
        static const std::string singles = "(){};,=[]+-*/%<>";
        if (singles.find(c) != std::string::npos) {
            out.push_back({std::string(1, c), TokenCategory::Reserved, tl, tc});
            advance(1);
            continue;
        }
        throw LexError(std::string("unexpected character '") + c + "'", tl, tc);
    }
    return out;
}

// ---------------------------------------------------------------------------
// AST basics

namespace {

void assign_ids(AstNode& n, int& next, std::vector<std::string>& decls,
                const std::string& parent_label, int child_index) {
    n.node_id = next++;
    if (n.is_leaf() && n.category == TokenCategory::Identifier &&
        is_declaration_site(parent_label, child_index)) {
        decls.push_back(n.label);
    }
    for (size_t k = 0; k < n.children.size(); ++k)
        assign_ids(n.children[k], next, decls, n.label, static_cast<int>(k));
}

}  // namespace

void AstTree::finalize() {
    int next = 0;
    declared_ids.clear();
    assign_ids(root, next, declared_ids, "", -1);
    size = next;
}

bool tree_equal(const AstNode& a, const AstNode& b) {
    if (a.label != b.label || a.category != b.category || a.children.size() != b.children.size())
        return false;
    for (size_t i = 0; i < a.children.size(); ++i)
        if (!tree_equal(a.children[i], b.children[i])) return false;
    return true;
}

bool is_declaration_site(const std::string& parent_label, int child_index) {
    return child_index == 1 &&
           (parent_label == "func-decl" || parent_label == "param" || parent_label == "var-decl");
}

std::optional<TokenCategory> marker_category(const std::string& label) {
    if (label == kLiteralMarker) return TokenCategory::Literal;
    if (label == kTypeMarker) return TokenCategory::Type;
    if (label == kBuiltinMarker) return TokenCategory::Builtin;
    return std::nullopt;
}

namespace {

bool sound_node(const AstNode& n, const std::string& parent_label) {
    if (!n.is_leaf() && n.category != TokenCategory::Reserved) return false;
    if (n.is_leaf()) {
        bool lit = n.category == TokenCategory::Literal;
        bool typ = n.category == TokenCategory::Type;
        bool blt = n.category == TokenCategory::Builtin;
        if (lit != (parent_label == kLiteralMarker)) return false;
        if (typ != (parent_label == kTypeMarker)) return false;
        if (blt != (parent_label == kBuiltinMarker)) return false;
    } else if (is_marker(n.label)) {
        for (const auto& c : n.children)
            if (!c.is_leaf()) return false;
    }
    for (size_t i = 0; i < n.children.size(); ++i)
        if (!sound_node(n.children[i], n.label)) return false;
    return true;
}

}  // namespace

bool structurally_sound(const AstTree& tree) { return sound_node(tree.root, ""); }

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Parser {
    const std::vector<Token>& toks;
    size_t pos = 0;

    explicit Parser(const std::vector<Token>& t) : toks(t) {}

    [[noreturn]] void fail(const std::string& expected) const {
        if (pos < toks.size())
            throw ParseError("expected " + expected + ", found '" + toks[pos].text + "'",
                             toks[pos].line, toks[pos].col);
        int line = toks.empty() ? 1 : toks.back().line;
        int col = toks.empty() ? 1 : toks.back().col;
        throw ParseError("expected " + expected + ", found end of input", line, col);
    }

    bool done() const { return pos >= toks.size(); }
    const Token& peek() const {
        if (done()) fail("a token");
        return toks[pos];
    }
    bool peek_is(const std::string& text) const { return !done() && toks[pos].text == text; }
    bool peek2_is(const std::string& text) const {
        return pos + 1 < toks.size() && toks[pos + 1].text == text;
    }
    Token take() {
        if (done()) fail("a token");
        return toks[pos++];
    }
    Token expect(const std::string& text) {
        if (!peek_is(text)) fail("'" + text + "'");
        return toks[pos++];
    }

    static AstNode node(std::string label, TokenCategory cat, std::vector<AstNode> children = {}) {
        AstNode n;
        n.label = std::move(label);
        n.category = cat;
        n.children = std::move(children);
        return n;
    }
    static AstNode reserved(std::string label, std::vector<AstNode> children = {}) {
        return node(std::move(label), TokenCategory::Reserved, std::move(children));
    }
    static AstNode ident(std::string name) {
        return node(std::move(name), TokenCategory::Identifier);
    }

    AstNode type_marker() {
        const Token& t = peek();
        if (t.category != TokenCategory::Type) fail("a type");
        take();
        return reserved(kTypeMarker, {node(t.text, TokenCategory::Type)});
    }

    AstNode identifier_leaf() {
        const Token& t = peek();
        if (t.category != TokenCategory::Identifier) fail("an identifier");
        take();
        return ident(t.text);
    }

    AstNode program() {
        std::vector<AstNode> funcs;
        while (!done()) funcs.push_back(func_decl());
        return reserved("program", std::move(funcs));
    }

    AstNode func_decl() {
        AstNode ty = type_marker();
        AstNode name = identifier_leaf();
        expect("(");
        std::vector<AstNode> params;
        if (!peek_is(")")) {
            params.push_back(param());
            while (peek_is(",")) {
                take();
                params.push_back(param());
            }
        }
        expect(")");
        AstNode body = block();
        return reserved("func-decl",
                        {std::move(ty), std::move(name), reserved("params", std::move(params)),
                         std::move(body)});
    }

    AstNode param() { return reserved("param", {type_marker(), identifier_leaf()}); }

    AstNode block() {
        expect("{");
        std::vector<AstNode> stmts;
        while (!peek_is("}")) stmts.push_back(statement());
        expect("}");
        return reserved("block", std::move(stmts));
    }

    AstNode statement() {
        const Token& t = peek();
        if (t.category == TokenCategory::Type) return var_decl();
        if (t.text == "if") return if_stmt();
        if (t.text == "while") return while_stmt();
        if (t.text == "return") return return_stmt();
        AstNode e = expr();
        if (peek_is("=") && (e.category == TokenCategory::Identifier || e.label == "index")) {
            take();
            AstNode rhs = expr();
            expect(";");
            return reserved("assign", {std::move(e), std::move(rhs)});
        }
        expect(";");
        return reserved("expr-stmt", {std::move(e)});
    }

    AstNode var_decl() {
        AstNode ty = type_marker();
        AstNode name = identifier_leaf();
        std::vector<AstNode> children;
        children.push_back(std::move(ty));
        children.push_back(std::move(name));
        if (peek_is("=")) {
            take();
            children.push_back(expr());
        }
        expect(";");
        return reserved("var-decl", std::move(children));
    }

    AstNode if_stmt() {
        expect("if");
        expect("(");
        AstNode cond = expr();
        expect(")");
        AstNode then = block();
        if (peek_is("else")) {
            take();
            AstNode other = block();
            return reserved("if-else", {std::move(cond), std::move(then), std::move(other)});
        }
        return reserved("if", {std::move(cond), std::move(then)});
    }

    AstNode while_stmt() {
        expect("while");
        expect("(");
        AstNode cond = expr();
        expect(")");
        AstNode body = block();
        return reserved("while", {std::move(cond), std::move(body)});
    }

    AstNode return_stmt() {
        expect("return");
        if (peek_is(";")) {
            take();
            return reserved("return");
        }
        AstNode e = expr();
        expect(";");
        return reserved("return", {std::move(e)});
    }

    AstNode expr() { return binary(1); }

    AstNode binary(int min_prec) {
        if (min_prec > 5) return primary();
        AstNode lhs = binary(min_prec + 1);
        while (!done() && toks[pos].category == TokenCategory::Reserved &&
               kBinops.count(toks[pos].text) && binop_precedence(toks[pos].text) == min_prec) {
            std::string op = take().text;
            AstNode rhs = binary(min_prec + 1);
            lhs = reserved(op, {std::move(lhs), std::move(rhs)});
        }
        return lhs;
    }

    AstNode primary() {
        const Token& t = peek();
        if (t.text == "(") {
            take();
            AstNode e = expr();
            expect(")");
            return e;
        }
        if (t.category == TokenCategory::Literal) {
            take();
            return reserved(kLiteralMarker, {node(t.text, TokenCategory::Literal)});
        }
        if (t.category == TokenCategory::Builtin) {
            take();
            AstNode callee = reserved(kBuiltinMarker, {node(t.text, TokenCategory::Builtin)});
            return call_tail(std::move(callee));
        }
        if (t.category == TokenCategory::Identifier) {
            take();
            if (peek_is("(")) return call_tail(ident(t.text));
            if (peek_is("[")) {
                take();
                AstNode idx = expr();
                expect("]");
                return reserved("index", {ident(t.text), std::move(idx)});
            }
            return ident(t.text);
        }
        fail("an expression");
    }

    AstNode call_tail(AstNode callee) {
        expect("(");
        std::vector<AstNode> children;
        children.push_back(std::move(callee));
        if (!peek_is(")")) {
            children.push_back(expr());
            while (peek_is(",")) {
                take();
                children.push_back(expr());
            }
        }
        expect(")");
        return reserved("call", std::move(children));
    }
};

}  // namespace

AstTree parse(const std::vector<Token>& tokens) {
    if (tokens.empty()) throw ParseError("empty program", 1, 1);
    Parser p(tokens);
    AstTree tree;
    tree.root = p.program();
    tree.finalize();
    return tree;
}

AstTree parse_source(const std::string& source) { return parse(tokenize(source)); }

// ---------------------------------------------------------------------------
// Serializer

namespace {

struct Serializer {
    std::vector<std::string> out;

    void emit(const std::string& tok) { out.push_back(tok); }

    void check_leaf(const AstNode& n, const std::string& parent) {
        bool lit = n.category == TokenCategory::Literal;
        bool typ = n.category == TokenCategory::Type;
        bool blt = n.category == TokenCategory::Builtin;
        if (lit != (parent == kLiteralMarker) || typ != (parent == kTypeMarker) ||
            blt != (parent == kBuiltinMarker))
            throw MalformedTree("leaf '" + n.label + "' inconsistent with parent '" + parent + "'");
    }

    void child(const AstNode& n, size_t i, const std::string& fallback_parent) {
        if (i < n.children.size()) ser(n.children[i], n.label);
        else (void)fallback_parent;
    }

    // Children of a comma list (params, call args).
    void comma_list(const AstNode& n, size_t from, const std::string& parent) {
        for (size_t i = from; i < n.children.size(); ++i) {
            if (i > from) emit(",");
            ser(n.children[i], parent);
        }
    }

    void expr_child(const AstNode& parent, size_t i) {
        if (i >= parent.children.size()) return;
        const AstNode& c = parent.children[i];
        bool parens = false;
        if (!c.is_leaf() && kBinops.count(c.label) && kBinops.count(parent.label)) {
            int pp = binop_precedence(parent.label);
            int cp = binop_precedence(c.label);
            parens = cp < pp || (cp == pp && i == 1);
        }
        if (parens) emit("(");
        ser(c, parent.label);
        if (parens) emit(")");
    }

    void rest(const AstNode& n, size_t from) {
        for (size_t i = from; i < n.children.size(); ++i) ser(n.children[i], n.label);
    }

    void ser(const AstNode& n, const std::string& parent) {
        if (n.is_leaf()) {
            check_leaf(n, parent);
            if (n.category != TokenCategory::Reserved) {
                emit(n.label);
                return;
            }
            // Reserved leaves: emit their construct's empty form.
            if (n.label == "block") { emit("{"); emit("}"); return; }
            if (n.label == "return") { emit("return"); emit(";"); return; }
            if (n.label == "params" || n.label == "program") return;
            emit(n.label);
            return;
        }
        if (n.category != TokenCategory::Reserved)
            throw MalformedTree("non-reserved node '" + n.label + "' has children");

        const std::string& l = n.label;
        if (is_marker(l)) {
            for (const auto& c : n.children) {
                if (!c.is_leaf()) throw MalformedTree("marker '" + l + "' has an internal child");
                ser(c, l);
            }
            return;
        }
        if (l == "program") { rest(n, 0); return; }
        if (l == "func-decl") {
            child(n, 0, l);
            child(n, 1, l);
            emit("(");
            if (n.children.size() > 2) comma_list(n.children[2], 0, "params");
            emit(")");
            child(n, 3, l);
            rest(n, 4);
            return;
        }
        if (l == "param") { child(n, 0, l); child(n, 1, l); rest(n, 2); return; }
        if (l == "params") { comma_list(n, 0, l); return; }
        if (l == "block") {
            emit("{");
            rest(n, 0);
            emit("}");
            return;
        }
        if (l == "var-decl") {
            child(n, 0, l);
            child(n, 1, l);
            if (n.children.size() > 2) {
                emit("=");
                child(n, 2, l);
                rest(n, 3);
            }
            emit(";");
            return;
        }
        if (l == "assign") {
            child(n, 0, l);
            emit("=");
            child(n, 1, l);
            rest(n, 2);
            emit(";");
            return;
        }
        if (l == "if" || l == "if-else" || l == "while") {
            emit(l == "while" ? "while" : "if");
            emit("(");
            child(n, 0, l);
            emit(")");
            child(n, 1, l);
            if (l == "if-else") {
                emit("else");
                child(n, 2, l);
                rest(n, 3);
            } else {
                rest(n, 2);
            }
            return;
        }
        if (l == "return") {
            emit("return");
            rest(n, 0);
            emit(";");
            return;
        }
        if (l == "expr-stmt") {
            rest(n, 0);
            emit(";");
            return;
        }
        if (l == "call") {
            child(n, 0, l);
            emit("(");
            comma_list(n, 1, l);
            emit(")");
            return;
        }
        if (l == "index") {
            child(n, 0, l);
            emit("[");
            child(n, 1, l);
            emit("]");
            return;
        }
        if (kBinops.count(l)) {
            expr_child(n, 0);
            emit(l);
            expr_child(n, 1);
            rest(n, 2);
            return;
        }
        // Unknown reserved label (decoder inventiveness): serialize children.
        rest(n, 0);
    }
};

}  // namespace

std::string serialize(const AstTree& tree) {
    Serializer s;
    s.ser(tree.root, "");
    std::string out;
    for (size_t i = 0; i < s.out.size(); ++i) {
        if (i) out += ' ';
        out += s.out[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Validator

namespace {

enum class VType { Int, Bool, IntArray, Void, Invalid };

VType vtype_of(const std::string& name) {
    if (name == "int") return VType::Int;
    if (name == "bool") return VType::Bool;
    if (name == "int[]") return VType::IntArray;
    if (name == "void") return VType::Void;
    return VType::Invalid;
}

const char* vtype_name(VType t) {
    switch (t) {
        case VType::Int: return "int";
        case VType::Bool: return "bool";
        case VType::IntArray: return "int[]";
        case VType::Void: return "void";
        default: return "<invalid>";
    }
}

struct FuncSig {
    VType ret = VType::Invalid;
    std::vector<VType> params;
    int decl_node = -1;
};

struct Checker {
    ValidationReport report;
    std::vector<std::map<std::string, std::pair<VType, int>>> scopes;  // name -> (type, decl node)
    std::map<std::string, FuncSig> funcs;
    VType current_ret = VType::Invalid;

    void err(ValidationErrorKind kind, const AstNode& n, std::string detail) {
        report.errors.push_back({kind, n.node_id, std::move(detail)});
    }

    const std::pair<VType, int>* lookup(const std::string& name) const {
        for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
            auto f = it->find(name);
            if (f != it->end()) return &f->second;
        }
        return nullptr;
    }

    bool malformed(const AstNode& n, const std::string& what) {
        err(ValidationErrorKind::MalformedNode, n, what);
        return false;
    }

    // Expects a marker node with exactly one leaf of the marked category.
    std::optional<std::string> marker_leaf(const AstNode& n, const char* marker) {
        if (n.label != marker || n.children.size() != 1 || !n.children[0].is_leaf()) {
            malformed(n, std::string("expected ") + marker + " marker");
            return std::nullopt;
        }
        return n.children[0].label;
    }

    std::optional<VType> type_of_marker(const AstNode& n) {
        auto leaf = marker_leaf(n, kTypeMarker);
        if (!leaf) return std::nullopt;
        VType t = vtype_of(*leaf);
        if (t == VType::Invalid) {
            malformed(n, "unknown type " + *leaf);
            return std::nullopt;
        }
        return t;
    }

    bool ident_leaf(const AstNode& n) {
        if (!n.is_leaf() || n.category != TokenCategory::Identifier) {
            malformed(n, "expected an identifier");
            return false;
        }
        return true;
    }

    void declare(const AstNode& name_node, VType t) {
        auto& scope = scopes.back();
        if (scope.count(name_node.label)) {
            err(ValidationErrorKind::Redeclaration, name_node,
                "'" + name_node.label + "' already declared in this scope");
            return;
        }
        scope[name_node.label] = {t, name_node.node_id};
    }

    void check_program(const AstNode& root) {
        if (root.label != "program") {
            malformed(root, "root must be program");
            return;
        }
        bool has_entry = false;
        // First pass registers nothing: function names become visible in
        // declaration order, so bodies see only earlier functions and themselves.
        for (const auto& fn : root.children) {
            if (fn.label != "func-decl" || fn.children.size() != 4) {
                malformed(fn, "expected func-decl(type, name, params, block)");
                continue;
            }
            auto ret = type_of_marker(fn.children[0]);
            if (!ident_leaf(fn.children[1])) continue;
            const std::string& name = fn.children[1].label;
            FuncSig sig;
            sig.ret = ret.value_or(VType::Invalid);
            sig.decl_node = fn.children[1].node_id;
            const AstNode& params = fn.children[2];
            bool params_ok = params.label == "params";
            if (!params_ok) malformed(params, "expected params");
            scopes.emplace_back();
            if (params_ok) {
                for (const auto& p : params.children) {
                    if (p.label != "param" || p.children.size() != 2) {
                        malformed(p, "expected param(type, name)");
                        continue;
                    }
                    auto pt = type_of_marker(p.children[0]);
                    if (!ident_leaf(p.children[1])) continue;
                    declare(p.children[1], pt.value_or(VType::Invalid));
                    sig.params.push_back(pt.value_or(VType::Invalid));
                }
            }
            if (funcs.count(name)) {
                err(ValidationErrorKind::Redeclaration, fn.children[1],
                    "function '" + name + "' already declared");
            } else {
                funcs[name] = sig;
            }
            if (sig.params.empty()) has_entry = true;
            current_ret = sig.ret;
            check_block(fn.children[3]);
            scopes.pop_back();
        }
        if (!has_entry)
            err(ValidationErrorKind::MissingMain, root, "no zero-argument entry function");
    }

    void check_block(const AstNode& n) {
        if (n.label != "block") {
            malformed(n, "expected block");
            return;
        }
        scopes.emplace_back();
        for (const auto& stmt : n.children) check_stmt(stmt);
        scopes.pop_back();
    }

    void check_cond(const AstNode& n) {
        VType t = check_expr(n);
        if (t != VType::Int && t != VType::Bool && t != VType::Invalid)
            err(ValidationErrorKind::TypeMismatch, n,
                std::string("condition has type ") + vtype_name(t));
    }

    void check_stmt(const AstNode& n) {
        const std::string& l = n.label;
        if (l == "var-decl") {
            if (n.children.size() < 2 || n.children.size() > 3) {
                malformed(n, "var-decl arity");
                return;
            }
            auto ty = type_of_marker(n.children[0]);
            if (!ident_leaf(n.children[1])) return;
            VType t = ty.value_or(VType::Invalid);
            if (t == VType::Void) {
                err(ValidationErrorKind::TypeMismatch, n, "cannot declare a void variable");
                t = VType::Invalid;
            }
            if (n.children.size() == 3) {
                VType init = check_expr(n.children[2]);
                if (t == VType::IntArray && init != VType::Invalid) {
                    err(ValidationErrorKind::InvalidConversion, n,
                        "arrays cannot be initialized by assignment");
                } else if (t != VType::Invalid && init != VType::Invalid && init != t) {
                    if (init == VType::IntArray || init == VType::Void)
                        err(ValidationErrorKind::InvalidConversion, n,
                            std::string("cannot convert ") + vtype_name(init) + " to " +
                                vtype_name(t));
                    else
                        err(ValidationErrorKind::TypeMismatch, n,
                            std::string("initializer of type ") + vtype_name(init) + " for " +
                                vtype_name(t));
                }
            }
            declare(n.children[1], t);
            return;
        }
        if (l == "assign") {
            if (n.children.size() != 2) {
                malformed(n, "assign arity");
                return;
            }
            const AstNode& lv = n.children[0];
            VType target = VType::Invalid;
            if (lv.is_leaf() && lv.category == TokenCategory::Identifier) {
                if (const auto* e = lookup(lv.label)) {
                    target = e->first;
                    if (target == VType::IntArray) {
                        err(ValidationErrorKind::InvalidConversion, lv,
                            "arrays cannot be assigned");
                        target = VType::Invalid;
                    }
                } else {
                    err(ValidationErrorKind::UndeclaredReference, lv, lv.label);
                }
            } else if (lv.label == "index") {
                target = check_expr(lv);
            } else {
                malformed(lv, "assignment target must be a variable or index");
            }
            VType rhs = check_expr(n.children[1]);
            if (target != VType::Invalid && rhs != VType::Invalid && target != rhs) {
                if (rhs == VType::IntArray || rhs == VType::Void)
                    err(ValidationErrorKind::InvalidConversion, n,
                        std::string("cannot convert ") + vtype_name(rhs) + " to " +
                            vtype_name(target));
                else
                    err(ValidationErrorKind::TypeMismatch, n,
                        std::string("assigned ") + vtype_name(rhs) + " to " + vtype_name(target));
            }
            return;
        }
        if (l == "if" || l == "if-else") {
            size_t want = l == "if" ? 2 : 3;
            if (n.children.size() != want) {
                malformed(n, l + " arity");
                return;
            }
            check_cond(n.children[0]);
            check_block(n.children[1]);
            if (l == "if-else") check_block(n.children[2]);
            return;
        }
        if (l == "while") {
            if (n.children.size() != 2) {
                malformed(n, "while arity");
                return;
            }
            check_cond(n.children[0]);
            check_block(n.children[1]);
            return;
        }
        if (l == "return") {
            if (n.children.size() > 1) {
                malformed(n, "return arity");
                return;
            }
            if (n.children.empty()) {
                if (current_ret != VType::Void && current_ret != VType::Invalid)
                    err(ValidationErrorKind::TypeMismatch, n, "missing return value");
                return;
            }
            VType t = check_expr(n.children[0]);
            if (t != VType::Invalid && current_ret != VType::Invalid && t != current_ret)
                err(ValidationErrorKind::TypeMismatch, n,
                    std::string("returning ") + vtype_name(t) + " from " +
                        vtype_name(current_ret) + " function");
            return;
        }
        if (l == "expr-stmt") {
            if (n.children.size() != 1) {
                malformed(n, "expr-stmt arity");
                return;
            }
            check_expr(n.children[0]);
            return;
        }
        malformed(n, "unexpected statement '" + l + "'");
    }

    VType check_expr(const AstNode& n) {
        if (n.is_leaf() && n.category == TokenCategory::Identifier) {
            if (const auto* e = lookup(n.label)) return e->first;
            err(ValidationErrorKind::UndeclaredReference, n, n.label);
            return VType::Invalid;
        }
        const std::string& l = n.label;
        if (l == kLiteralMarker) {
            auto leaf = marker_leaf(n, kLiteralMarker);
            if (!leaf) return VType::Invalid;
            return (*leaf == "true" || *leaf == "false") ? VType::Bool : VType::Int;
        }
        if (l == "index") {
            if (n.children.size() != 2) {
                malformed(n, "index arity");
                return VType::Invalid;
            }
            VType base = check_expr(n.children[0]);
            VType idx = check_expr(n.children[1]);
            if (base != VType::IntArray && base != VType::Invalid)
                err(ValidationErrorKind::TypeMismatch, n,
                    std::string("indexing a ") + vtype_name(base));
            if (idx != VType::Int && idx != VType::Invalid)
                err(ValidationErrorKind::TypeMismatch, n, "index must be int");
            return base == VType::IntArray ? VType::Int : VType::Invalid;
        }
        if (l == "call") return check_call(n);
        if (kBinops.count(l) && !n.is_leaf()) {
            if (n.children.size() != 2) {
                malformed(n, "operator arity");
                return VType::Invalid;
            }
            VType a = check_expr(n.children[0]);
            VType b = check_expr(n.children[1]);
            bool arith = l == "+" || l == "-" || l == "*" || l == "/" || l == "%";
            bool cmp = l == "<" || l == ">";
            bool eq = l == "==" || l == "!=";
            bool logic = l == "&&" || l == "||";
            if (a == VType::Invalid || b == VType::Invalid)
                return VType::Invalid;
            if (arith || cmp) {
                if (a != VType::Int || b != VType::Int) {
                    err(ValidationErrorKind::TypeMismatch, n,
                        "operator " + l + " on " + vtype_name(a) + ", " + vtype_name(b));
                    return VType::Invalid;
                }
                return arith ? VType::Int : VType::Bool;
            }
            if (eq) {
                if (a != b || (a != VType::Int && a != VType::Bool)) {
                    err(ValidationErrorKind::TypeMismatch, n,
                        "operator " + l + " on " + vtype_name(a) + ", " + vtype_name(b));
                    return VType::Invalid;
                }
                return VType::Bool;
            }
            if (logic) {
                if (a != VType::Bool || b != VType::Bool) {
                    err(ValidationErrorKind::TypeMismatch, n,
                        "operator " + l + " on " + vtype_name(a) + ", " + vtype_name(b));
                    return VType::Invalid;
                }
                return VType::Bool;
            }
        }
        malformed(n, "unexpected expression '" + l + "'");
        return VType::Invalid;
    }

    VType check_call(const AstNode& n) {
        if (n.children.empty()) {
            malformed(n, "call without callee");
            return VType::Invalid;
        }
        const AstNode& callee = n.children[0];
        std::vector<VType> args;
        for (size_t i = 1; i < n.children.size(); ++i) args.push_back(check_expr(n.children[i]));

        if (callee.label == kBuiltinMarker) {
            auto leaf = marker_leaf(callee, kBuiltinMarker);
            if (!leaf) return VType::Invalid;
            const std::string& b = *leaf;
            auto arity = [&](size_t want) {
                if (args.size() != want) {
                    err(ValidationErrorKind::TypeMismatch, n,
                        b + " expects " + std::to_string(want) + " argument(s)");
                    return false;
                }
                return true;
            };
            if (b == "print") {
                if (!arity(1)) return VType::Void;
                if (args[0] != VType::Int && args[0] != VType::Invalid)
                    err(ValidationErrorKind::TypeMismatch, n, "print expects an int");
                return VType::Void;
            }
            if (b == "read") {
                arity(0);
                return VType::Int;
            }
            if (b == "push" || b == "len") {
                // Array "member" builtins: a non-array receiver is BadMemberCall.
                if (!arity(b == "push" ? 2 : 1)) return b == "push" ? VType::Void : VType::Int;
                if (args[0] != VType::IntArray && args[0] != VType::Invalid)
                    err(ValidationErrorKind::BadMemberCall, n,
                        b + " on " + vtype_name(args[0]));
                if (b == "push" && args[1] != VType::Int && args[1] != VType::Invalid)
                    err(ValidationErrorKind::TypeMismatch, n, "push expects an int value");
                return b == "push" ? VType::Void : VType::Int;
            }
            malformed(callee, "unknown builtin " + b);
            return VType::Invalid;
        }
        if (callee.is_leaf() && callee.category == TokenCategory::Identifier) {
            auto it = funcs.find(callee.label);
            if (it == funcs.end()) {
                err(ValidationErrorKind::UndeclaredReference, callee, callee.label);
                return VType::Invalid;
            }
            const FuncSig& sig = it->second;
            if (args.size() != sig.params.size()) {
                err(ValidationErrorKind::TypeMismatch, n,
                    callee.label + " expects " + std::to_string(sig.params.size()) +
                        " argument(s)");
            } else {
                for (size_t i = 0; i < args.size(); ++i) {
                    if (args[i] != VType::Invalid && sig.params[i] != VType::Invalid &&
                        args[i] != sig.params[i])
                        err(ValidationErrorKind::TypeMismatch, n,
                            "argument " + std::to_string(i + 1) + " of " + callee.label);
                }
            }
            return sig.ret;
        }
        malformed(callee, "callee must be a function name or builtin");
        return VType::Invalid;
    }
};

}  // namespace

const char* validation_error_name(ValidationErrorKind k) {
    switch (k) {
        case ValidationErrorKind::UndeclaredReference: return "UndeclaredReference";
        case ValidationErrorKind::Redeclaration: return "Redeclaration";
        case ValidationErrorKind::TypeMismatch: return "TypeMismatch";
        case ValidationErrorKind::InvalidConversion: return "InvalidConversion";
        case ValidationErrorKind::BadMemberCall: return "BadMemberCall";
        case ValidationErrorKind::MissingMain: return "MissingMain";
        case ValidationErrorKind::MalformedNode: return "MalformedNode";
    }
    return "?";
}

ValidationReport validate(const AstTree& tree) {
    Checker c;
    c.check_program(tree.root);
    c.report.ok = c.report.errors.empty();
    return c.report;
}

// ---------------------------------------------------------------------------
// Binding resolution (scope walk without type checking)

namespace {

struct Binder {
    Bindings out;
    std::vector<std::map<std::string, int>> scopes;

    void declare(const AstNode& name_node) {
        out.declaration_nodes.push_back(name_node.node_id);
        scopes.back()[name_node.label] = name_node.node_id;
    }

    void reference(const AstNode& n) {
        for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
            auto f = it->find(n.label);
            if (f != it->end()) {
                out.reference_to_declaration[n.node_id] = f->second;
                return;
            }
        }
        out.complete = false;
    }

    void walk(const AstNode& n) {
        if (n.is_leaf()) return;
        if (n.label == "program") {
            scopes.emplace_back();
            for (const auto& fn : n.children) {
                if (fn.label == "func-decl" && fn.children.size() >= 2 &&
                    fn.children[1].is_leaf() &&
                    fn.children[1].category == TokenCategory::Identifier) {
                    declare(fn.children[1]);
                }
                if (fn.label == "func-decl") {
                    scopes.emplace_back();
                    if (fn.children.size() >= 3)
                        for (const auto& p : fn.children[2].children)
                            if (p.label == "param" && p.children.size() == 2 &&
                                p.children[1].is_leaf() &&
                                p.children[1].category == TokenCategory::Identifier)
                                declare(p.children[1]);
                    if (fn.children.size() >= 4) walk_block(fn.children[3]);
                    scopes.pop_back();
                }
            }
            scopes.pop_back();
            return;
        }
        walk_block(n);
    }

    void walk_block(const AstNode& block) {
        scopes.emplace_back();
        for (const auto& s : block.children) walk_stmt(s);
        scopes.pop_back();
    }

    void walk_stmt(const AstNode& n) {
        const std::string& l = n.label;
        if (l == "var-decl") {
            if (n.children.size() == 3) walk_expr(n.children[2]);
            if (n.children.size() >= 2 && n.children[1].is_leaf() &&
                n.children[1].category == TokenCategory::Identifier)
                declare(n.children[1]);
            return;
        }
        if (l == "block") { walk_block(n); return; }
        if (l == "if" || l == "while") {
            if (!n.children.empty()) walk_expr(n.children[0]);
            if (n.children.size() > 1) walk_block(n.children[1]);
            return;
        }
        if (l == "if-else") {
            if (!n.children.empty()) walk_expr(n.children[0]);
            if (n.children.size() > 1) walk_block(n.children[1]);
            if (n.children.size() > 2) walk_block(n.children[2]);
            return;
        }
        for (const auto& c : n.children) walk_expr(c);
    }

    void walk_expr(const AstNode& n) {
        if (n.is_leaf()) {
            if (n.category == TokenCategory::Identifier) reference(n);
            return;
        }
        if (is_marker(n.label)) return;
        for (const auto& c : n.children) walk_expr(c);
    }
};

}  // namespace

Bindings resolve_bindings(const AstTree& tree) {
    Binder b;
    b.walk(tree.root);
    return b.out;
}

// ---------------------------------------------------------------------------
// Interpreter

namespace {

struct RuntimeSignal {};
struct TimeoutSignal {};

struct Value {
    VType t = VType::Void;
    std::int64_t i = 0;
    std::shared_ptr<std::vector<std::int64_t>> arr;
};

struct Interp {
    const std::vector<std::int64_t>& input;
    std::int64_t step_limit;
    std::int64_t steps = 0;
    size_t read_pos = 0;
    std::vector<std::int64_t> output;
    std::map<std::string, const AstNode*> funcs;
    std::vector<std::vector<std::map<std::string, Value>>> frames;
    int depth = 0;

    Interp(const std::vector<std::int64_t>& in, std::int64_t limit)
        : input(in), step_limit(limit) {}

    void step() {
        if (steps >= step_limit) throw TimeoutSignal{};
        ++steps;
    }

    Value* lookup(const std::string& name) {
        auto& scopes = frames.back();
        for (auto it = scopes.rbegin(); it != scopes.rend(); ++it) {
            auto f = it->find(name);
            if (f != it->end()) return &f->second;
        }
        return nullptr;
    }

    static std::int64_t wrap_add(std::int64_t a, std::int64_t b) {
        return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) +
                                         static_cast<std::uint64_t>(b));
    }
    static std::int64_t wrap_sub(std::int64_t a, std::int64_t b) {
        return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) -
                                         static_cast<std::uint64_t>(b));
    }
    static std::int64_t wrap_mul(std::int64_t a, std::int64_t b) {
        return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) *
                                         static_cast<std::uint64_t>(b));
    }

    bool truthy(const Value& v) { return v.i != 0; }

    struct ReturnSignal { Value v; };

    Value call_function(const AstNode& fn, std::vector<Value> args) {
        if (++depth > 200) throw RuntimeSignal{};
        frames.emplace_back();
        frames.back().emplace_back();
        const AstNode& params = fn.children[2];
        for (size_t i = 0; i < params.children.size() && i < args.size(); ++i)
            frames.back().back()[params.children[i].children[1].label] = args[i];
        Value result;
        try {
            exec_block(fn.children[3]);
        } catch (ReturnSignal& r) {
            result = std::move(r.v);
        }
        frames.pop_back();
        --depth;
        return result;
    }

    void exec_block(const AstNode& block) {
        frames.back().emplace_back();
        for (const auto& s : block.children) exec_stmt(s);
        frames.back().pop_back();
    }

    void exec_stmt(const AstNode& n) {
        step();
        const std::string& l = n.label;
        if (l == "var-decl") {
            VType t = vtype_of(n.children[0].children[0].label);
            Value v;
            v.t = t;
            if (t == VType::IntArray) v.arr = std::make_shared<std::vector<std::int64_t>>();
            if (n.children.size() == 3) v = eval(n.children[2]);
            frames.back().back()[n.children[1].label] = std::move(v);
            return;
        }
        if (l == "assign") {
            const AstNode& lv = n.children[0];
            Value rhs = eval(n.children[1]);
            if (lv.is_leaf()) {
                Value* slot = lookup(lv.label);
                if (!slot) throw RuntimeSignal{};
                *slot = std::move(rhs);
                return;
            }
            // index assignment
            Value* base = lookup(lv.children[0].label);
            if (!base || !base->arr) throw RuntimeSignal{};
            Value idx = eval(lv.children[1]);
            if (idx.i < 0 || static_cast<size_t>(idx.i) >= base->arr->size())
                throw RuntimeSignal{};
            (*base->arr)[static_cast<size_t>(idx.i)] = rhs.i;
            return;
        }
        if (l == "if" || l == "if-else") {
            Value c = eval(n.children[0]);
            if (truthy(c)) exec_block(n.children[1]);
            else if (l == "if-else") exec_block(n.children[2]);
            return;
        }
        if (l == "while") {
            while (true) {
                Value c = eval(n.children[0]);
                if (!truthy(c)) break;
                exec_block(n.children[1]);
                step();
            }
            return;
        }
        if (l == "return") {
            ReturnSignal r;
            if (!n.children.empty()) r.v = eval(n.children[0]);
            throw r;
        }
        if (l == "expr-stmt") {
            eval(n.children[0]);
            return;
        }
        throw RuntimeSignal{};
    }

    Value eval(const AstNode& n) {
        step();
        if (n.is_leaf() && n.category == TokenCategory::Identifier) {
            Value* v = lookup(n.label);
            if (!v) throw RuntimeSignal{};
            return *v;
        }
        const std::string& l = n.label;
        if (l == kLiteralMarker) {
            const std::string& text = n.children[0].label;
            Value v;
            if (text == "true" || text == "false") {
                v.t = VType::Bool;
                v.i = text == "true" ? 1 : 0;
            } else {
                v.t = VType::Int;
                v.i = std::strtoll(text.c_str(), nullptr, 10);
            }
            return v;
        }
        if (l == "index") {
            Value* base = lookup(n.children[0].label);
            if (!base || !base->arr) throw RuntimeSignal{};
            Value idx = eval(n.children[1]);
            if (idx.i < 0 || static_cast<size_t>(idx.i) >= base->arr->size())
                throw RuntimeSignal{};
            Value v;
            v.t = VType::Int;
            v.i = (*base->arr)[static_cast<size_t>(idx.i)];
            return v;
        }
        if (l == "call") return eval_call(n);
        // binary operator
        const std::string& op = l;
        if (op == "&&" || op == "||") {
            Value a = eval(n.children[0]);
            Value out;
            out.t = VType::Bool;
            if (op == "&&" && !truthy(a)) { out.i = 0; return out; }
            if (op == "||" && truthy(a)) { out.i = 1; return out; }
            Value b = eval(n.children[1]);
            out.i = truthy(b) ? 1 : 0;
            return out;
        }
        Value a = eval(n.children[0]);
        Value b = eval(n.children[1]);
        Value out;
        out.t = VType::Int;
        if (op == "+") out.i = wrap_add(a.i, b.i);
        else if (op == "-") out.i = wrap_sub(a.i, b.i);
        else if (op == "*") out.i = wrap_mul(a.i, b.i);
        else if (op == "/" || op == "%") {
            if (b.i == 0) throw RuntimeSignal{};
            if (a.i == std::numeric_limits<std::int64_t>::min() && b.i == -1)
                throw RuntimeSignal{};
            out.i = op == "/" ? a.i / b.i : a.i % b.i;
        } else {
            out.t = VType::Bool;
            if (op == "<") out.i = a.i < b.i;
            else if (op == ">") out.i = a.i > b.i;
            else if (op == "==") out.i = a.i == b.i;
            else if (op == "!=") out.i = a.i != b.i;
            else throw RuntimeSignal{};
        }
        return out;
    }

    Value eval_call(const AstNode& n) {
        const AstNode& callee = n.children[0];
        if (callee.label == kBuiltinMarker) {
            const std::string& b = callee.children[0].label;
            if (b == "read") {
                if (read_pos >= input.size()) throw RuntimeSignal{};
                Value v;
                v.t = VType::Int;
                v.i = input[read_pos++];
                return v;
            }
            if (b == "print") {
                Value v = eval(n.children[1]);
                output.push_back(v.i);
                return Value{};
            }
            if (b == "len") {
                Value a = eval(n.children[1]);
                if (!a.arr) throw RuntimeSignal{};
                Value v;
                v.t = VType::Int;
                v.i = static_cast<std::int64_t>(a.arr->size());
                return v;
            }
            if (b == "push") {
                Value a = eval(n.children[1]);
                Value x = eval(n.children[2]);
                if (!a.arr) throw RuntimeSignal{};
                a.arr->push_back(x.i);
                return Value{};
            }
            throw RuntimeSignal{};
        }
        auto it = funcs.find(callee.label);
        if (it == funcs.end()) throw RuntimeSignal{};
        const AstNode& fn = *it->second;
        std::vector<Value> args;
        for (size_t i = 1; i < n.children.size(); ++i) args.push_back(eval(n.children[i]));
        return call_function(fn, std::move(args));
    }
};

}  // namespace

ExecResult interpret(const AstTree& tree, const std::vector<std::int64_t>& input,
                     std::int64_t step_limit) {
    Interp in(input, step_limit);
    ExecResult res;

    // Entry point: a function named main when it is zero-argument, otherwise
    // the last zero-argument function (anonymized and decoded programs have
    // no function literally named main).
    const AstNode* entry = nullptr;
    for (const auto& fn : tree.root.children) {
        if (fn.label != "func-decl" || fn.children.size() != 4) continue;
        in.funcs[fn.children[1].label] = &fn;
        if (fn.children[2].children.empty()) {
            if (fn.children[1].label == "main") entry = &fn;
            else if (!entry || entry->children[1].label != "main") entry = &fn;
        }
    }
    if (!entry) {
        res.status = ExecStatus::RuntimeError;
        return res;
    }
    try {
        in.call_function(*entry, {});
        res.status = ExecStatus::Ok;
    } catch (TimeoutSignal&) {
        res.status = ExecStatus::Timeout;
        in.steps = step_limit;
    } catch (RuntimeSignal&) {
        res.status = ExecStatus::RuntimeError;
    } catch (Interp::ReturnSignal&) {
        res.status = ExecStatus::Ok;
    }
    res.output = std::move(in.output);
    res.steps = in.steps;
    return res;
}

// ---------------------------------------------------------------------------
// Identifier anonymization

namespace {

void collect_declared_names(const AstNode& n, const std::string& parent, int index,
                            std::vector<std::string>& order,
                            std::unordered_set<std::string>& seen) {
    if (n.is_leaf() && n.category == TokenCategory::Identifier &&
        is_declaration_site(parent, index) && !seen.count(n.label)) {
        seen.insert(n.label);
        order.push_back(n.label);
    }
    for (size_t i = 0; i < n.children.size(); ++i)
        collect_declared_names(n.children[i], n.label, static_cast<int>(i), order, seen);
}

void rename_identifiers(AstNode& n, const std::unordered_map<std::string, std::string>& map) {
    if (n.is_leaf() && n.category == TokenCategory::Identifier) {
        auto it = map.find(n.label);
        if (it != map.end()) n.label = it->second;
        return;
    }
    for (auto& c : n.children) rename_identifiers(c, map);
}

}  // namespace

AstTree anonymize_identifiers(const AstTree& tree) {
    std::vector<std::string> order;
    std::unordered_set<std::string> seen;
    collect_declared_names(tree.root, "", -1, order, seen);
    std::unordered_map<std::string, std::string> map;
    for (size_t k = 0; k < order.size(); ++k)
        map[order[k]] = "ID" + std::to_string(k);
    AstTree out = tree;
    rename_identifiers(out.root, map);
    out.finalize();
    return out;
}

}  // namespace treevae::treelang
