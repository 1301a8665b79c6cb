#pragma once

#include <stdexcept>
#include <string>

namespace fwmerge {

// Base class for all library errors.
class MergeError : public std::runtime_error {
public:
    explicit MergeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Two parameter sets (or pool entries) do not share layer names/shapes/order.
class SchemaError : public MergeError {
public:
    explicit SchemaError(const std::string& msg) : MergeError(msg) {}
};

// An arithmetic result or an optimizer state became NaN/Inf.
class NumericsError : public MergeError {
public:
    explicit NumericsError(const std::string& msg) : MergeError(msg) {}
};

// Malformed checkpoint file: bad magic/version, truncation, header/data disagreement.
class FormatError : public MergeError {
public:
    explicit FormatError(const std::string& msg) : MergeError(msg) {}
};

class EmptyPoolError : public MergeError {
public:
    explicit EmptyPoolError(const std::string& msg) : MergeError(msg) {}
};

class DimensionError : public MergeError {
public:
    explicit DimensionError(const std::string& msg) : MergeError(msg) {}
};

class ConfigError : public MergeError {
public:
    explicit ConfigError(const std::string& msg) : MergeError(msg) {}
};

// Simplex weight vector violates nonnegativity / sum constraints.
class SimplexError : public MergeError {
public:
    explicit SimplexError(const std::string& msg) : MergeError(msg) {}
};

}  // namespace fwmerge
