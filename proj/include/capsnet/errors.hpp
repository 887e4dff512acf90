#pragma once

#include <stdexcept>
#include <string>

namespace capsnet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes that do not compose.
class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

// Violated precondition on an argument that is not a shape or an index.
class ContractError : public Error {
public:
    using Error::Error;
};

// Anything wrong with on-disk input: unreadable files, bad layouts.
class DataError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public DataError {
public:
    using DataError::DataError;
};

class VersionError : public DataError {
public:
    using DataError::DataError;
};

class FingerprintError : public DataError {
public:
    using DataError::DataError;
};

class TruncationError : public DataError {
public:
    using DataError::DataError;
};

// Payload longer or shorter than the header declares, with the file otherwise intact.
class LengthMismatchError : public DataError {
public:
    using DataError::DataError;
};

// Non-finite values during training, or a failed gradient check.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace capsnet
