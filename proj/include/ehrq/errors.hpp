#pragma once

#include <stdexcept>
#include <string>

namespace ehrq {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised while reading table files from disk (missing table, bad cell).
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LookupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Template bank / lexicon file failed its invariants.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RenderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InstantiationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CompositionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A model, embedding, or text backend could not produce a reply.
struct BackendError : std::runtime_error {
    BackendError(const std::string& what, int attempts = 1)
        : std::runtime_error(what), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvaluatorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BuildError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PersistenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Syntax error in the supported SQL subset; `position` is a byte offset.
struct SqlSyntaxError : std::runtime_error {
    SqlSyntaxError(const std::string& what, std::size_t position)
        : std::runtime_error(what), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

}  // namespace ehrq
