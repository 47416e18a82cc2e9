// Exception types shared across modules. Every failure mode that callers are
// expected to handle gets its own type; generic invariant violations use Error.
#pragma once

#include <stdexcept>
#include <string>

namespace treevae {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct LexError : Error {
    int line = 0, col = 0;
    LexError(const std::string& msg, int line_, int col_)
        : Error(msg + " at " + std::to_string(line_) + ":" + std::to_string(col_)),
          line(line_), col(col_) {}
};

struct ParseError : Error {
    int line = 0, col = 0;
    ParseError(const std::string& msg, int line_, int col_)
        : Error(msg + " at " + std::to_string(line_) + ":" + std::to_string(col_)),
          line(line_), col(col_) {}
};

struct MalformedTree : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct OutOfVocab : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct EmptyCategoryTable : Error { using Error::Error; };
struct CorruptCheckpoint : Error { using Error::Error; };
struct KindMismatch : Error { using Error::Error; };
struct GenerationBudgetExceeded : Error { using Error::Error; };
struct EmptySplit : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };
struct UnknownTarget : Error { using Error::Error; };
struct EmptyReference : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };

}  // namespace treevae
