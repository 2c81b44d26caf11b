#pragma once

#include <stdexcept>
#include <string>

namespace prefgen {

// Invalid or inconsistent configuration / plan. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The instruction corpus cannot supply the requested slice.
class CorpusExhausted : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Every backend request in a run failed; nothing was produced. CLI exit code 3.
class BackendExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace prefgen
