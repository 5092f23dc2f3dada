#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dozer {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input was not an strace log at all (nothing parsed from nonempty text).
class TraceFormatError : public Error {
public:
    using Error::Error;
};

// Shell text uses grammar outside the single-command subset.
class UnsupportedConstruct : public Error {
public:
    using Error::Error;
};

// Shell text is malformed (e.g. unterminated quote).
class ShellParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Knowledge base was built with a different canonicalization config.
class ConfigMismatch : public Error {
public:
    using Error::Error;
};

class FormatVersionMismatch : public Error {
public:
    using Error::Error;
};

class CorruptRecord : public Error {
public:
    CorruptRecord(std::size_t line, std::string record_id, const std::string& what)
        : Error("corrupt knowledge base at line " + std::to_string(line) +
                (record_id.empty() ? std::string() : " (record " + record_id + ")") + ": " + what),
          line_(line),
          record_id_(std::move(record_id)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& record_id() const noexcept { return record_id_; }

private:
    std::size_t line_;
    std::string record_id_;
};

class EmptyKnowledgeBase : public Error {
public:
    EmptyKnowledgeBase() : Error("knowledge base has no records") {}
};

class BaseMismatch : public Error {
public:
    using Error::Error;
};

class SandboxUnavailable : public Error {
public:
    using Error::Error;
};

// A single sandbox run failed; validate() captures these per candidate.
class ExecutionError : public Error {
public:
    using Error::Error;
};

}  // namespace dozer
