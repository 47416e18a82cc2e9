// MiniLang: a small C-like language used as the modelling target.
//
// The pipeline is tokenize -> parse -> (validate | interpret | anonymize),
// with serialize turning an AST back into the canonical single-space token
// form. serialize(parse(s)) is a normal form: parsing it again yields the
// same tree, and serializing that tree reproduces the string bit-exactly.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treevae/errors.hpp"

namespace treevae::treelang {

enum class TokenCategory { Reserved, Type, Builtin, Literal, Identifier };

const char* category_name(TokenCategory c);

struct Token {
    std::string text;
    TokenCategory category;
    int line = 1;
    int col = 1;
};

// Splits a source string into categorized tokens. Throws LexError on any
// character outside the language alphabet.
std::vector<Token> tokenize(const std::string& source);

// Labeled ordered tree. Internal nodes always carry Reserved labels; leaf
// category is determined by the parent marker ("literal", "type",
// "built-in-function-name") or defaults to Identifier / Reserved.
struct AstNode {
    std::string label;
    TokenCategory category = TokenCategory::Reserved;
    std::vector<AstNode> children;
    int node_id = 0;  // preorder index, assigned by AstTree::finalize

    bool is_leaf() const { return children.empty(); }
};

struct AstTree {
    AstNode root;
    int size = 0;                            // total node count
    std::vector<std::string> declared_ids;   // identifier labels in declaration order

    // Recomputes node ids (preorder), size, and declared_ids.
    void finalize();
};

bool tree_equal(const AstNode& a, const AstNode& b);
inline bool tree_equal(const AstTree& a, const AstTree& b) { return tree_equal(a.root, b.root); }

// True when (parent label, child index) is an identifier declaration site.
bool is_declaration_site(const std::string& parent_label, int child_index);

// Leaf category dictated by a marker label ("literal", "type",
// "built-in-function-name"), or nothing for any other label.
std::optional<TokenCategory> marker_category(const std::string& label);

// Checks the structural invariants that any decoded tree must satisfy:
// internal nodes Reserved, leaf categories consistent with parent markers.
bool structurally_sound(const AstTree& tree);

// Recursive descent over the published grammar (docs/grammar.md).
AstTree parse(const std::vector<Token>& tokens);
AstTree parse_source(const std::string& source);

// Canonical token rendering, single space between tokens. Throws
// MalformedTree if a non-Reserved node has children or a leaf's category is
// inconsistent with its parent marker; total on anything structurally sound.
std::string serialize(const AstTree& tree);

enum class ValidationErrorKind {
    UndeclaredReference,
    Redeclaration,
    TypeMismatch,
    InvalidConversion,
    BadMemberCall,
    MissingMain,
    MalformedNode,
};

const char* validation_error_name(ValidationErrorKind k);

struct ValidationError {
    ValidationErrorKind kind;
    int node_id;
    std::string detail;
};

struct ValidationReport {
    bool ok = false;
    std::vector<ValidationError> errors;
};

// Scope and type checking. Never throws on structurally sound trees;
// problems are reported, not raised.
ValidationReport validate(const AstTree& tree);

// Scope analysis detail shared with the model pipeline: for every identifier
// reference leaf, the node id of the declaration it resolves to.
struct Bindings {
    std::vector<int> declaration_nodes;        // node ids of declaration identifier leaves, in order
    std::map<int, int> reference_to_declaration;  // ref node id -> decl node id
    bool complete = true;  // false when some reference did not resolve
};

Bindings resolve_bindings(const AstTree& tree);

enum class ExecStatus { Ok, RuntimeError, Timeout };

struct ExecResult {
    ExecStatus status = ExecStatus::Ok;
    std::vector<std::int64_t> output;
    std::int64_t steps = 0;
};

// Tree-walking interpreter over a validated tree. `input` feeds read();
// print() appends to output. Runtime errors (division by zero, index out of
// range, exhausted input) yield status RuntimeError. Timeout iff
// steps == step_limit.
ExecResult interpret(const AstTree& tree, const std::vector<std::int64_t>& input,
                     std::int64_t step_limit = 100000);

// Renames identifiers so the k-th distinct identifier in declaration order
// becomes "ID<k>"; references follow their declarations. Idempotent.
AstTree anonymize_identifiers(const AstTree& tree);

}  // namespace treevae::treelang
