#pragma once

#include <stdexcept>
#include <string>

namespace dualtrace {

/// A parse location: 1-based line number plus the field being read.
struct Locator {
    int line = 0;
    std::string field;
};

/// An entry or pair violated a structural rule (invalid slug, wrong
/// cross-link, missing disclaimer, score out of range, ...).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed serialized text. Carries the line/field where parsing stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, Locator where)
        : std::runtime_error(what + " (line " + std::to_string(where.line) +
                             (where.field.empty() ? "" : ", field '" + where.field + "'") + ")"),
          locator_(std::move(where)) {}

    const Locator& where() const { return locator_; }

private:
    Locator locator_;
};

/// Storage I/O failure. The store guarantees no partial pair is visible
/// after one of these.
class StoreError : public std::runtime_error {
public:
    explicit StoreError(const std::string& what) : std::runtime_error(what) {}
};

/// A cross-link that should resolve does not (dangling linked_scene or
/// linked_fact). Distinct from "absent" lookups.
class IntegrityError : public std::runtime_error {
public:
    explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

/// Input file does not match the expected schema; names the missing or
/// unexpected field.
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

/// Backend failure from a text-generation or embedding call. Retryable
/// errors (timeouts, 429/5xx, transport drops) may be re-attempted;
/// fatal ones (bad request, auth) may not.
class ProviderError : public std::runtime_error {
public:
    ProviderError(const std::string& what, bool retryable)
        : std::runtime_error(what), retryable_(retryable) {}

    bool retryable() const { return retryable_; }

private:
    bool retryable_;
};

/// A statistical operation was asked for an undefined quantity
/// (e.g. McNemar with zero discordant pairs).
class StatsError : public std::runtime_error {
public:
    explicit StatsError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace dualtrace
