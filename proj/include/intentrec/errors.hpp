#pragma once

#include <stdexcept>
#include <string>

namespace intentrec {

// Broad failure classes. The numeric values double as CLI exit codes.
enum class ErrorKind {
    Config = 2,
    Data = 3,
    Numeric = 4,
    Dimension = 5,
    Index = 6,
    Contract = 7,
    Io = 8,
};

class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

class ConfigError : public Error {
   public:
    explicit ConfigError(const std::string& m) : Error(ErrorKind::Config, m) {}
};

class DataError : public Error {
   public:
    explicit DataError(const std::string& m) : Error(ErrorKind::Data, m) {}
};

class NumericError : public Error {
   public:
    explicit NumericError(const std::string& m) : Error(ErrorKind::Numeric, m) {}
};

class DimensionError : public Error {
   public:
    explicit DimensionError(const std::string& m) : Error(ErrorKind::Dimension, m) {}
};

class IndexError : public Error {
   public:
    explicit IndexError(const std::string& m) : Error(ErrorKind::Index, m) {}
};

class ContractError : public Error {
   public:
    explicit ContractError(const std::string& m) : Error(ErrorKind::Contract, m) {}
};

class IoError : public Error {
   public:
    explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};

}  // namespace intentrec
