#pragma once

#include <stdexcept>
#include <string>

namespace mml {

/// Base of every error the library raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class InvalidLabel : public Error {
public:
    using Error::Error;
};

class NoActiveHeads : public Error {
public:
    using Error::Error;
};

class InvalidTransform : public Error {
public:
    using Error::Error;
};

class InvalidEval : public Error {
public:
    using Error::Error;
};

/// Malformed or unsupported file content (checkpoints, TSV rows, traces).
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace mml
