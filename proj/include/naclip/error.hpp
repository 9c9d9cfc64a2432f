#pragma once

#include <stdexcept>
#include <string>

namespace naclip {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape/size disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Out-of-domain scalar argument (sigma <= 0, tau outside (0,1), ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Inconsistent or missing configuration (no classes, template without "{}", ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Unparseable archive header or input file.
class FormatError : public Error {
public:
    using Error::Error;
};

// Archive payload inconsistent with its header.
class CorruptionError : public Error {
public:
    using Error::Error;
};

// Archive does not satisfy a weight manifest.
class ValidationError : public Error {
public:
    using Error::Error;
};

// NaN or Inf produced by a kernel.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace naclip
