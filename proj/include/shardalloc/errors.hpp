#pragma once

#include <stdexcept>
#include <string>

namespace shardalloc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantViolation : public Error {
public:
    using Error::Error;
};

class MalformedFile : public Error {
public:
    using Error::Error;
};

class GenerationFailure : public Error {
public:
    using Error::Error;
};

/// Every score in a shard column is zero; no attack bound is defined.
class DegenerateShard : public Error {
public:
    using Error::Error;
};

class NumericalFailure : public Error {
public:
    using Error::Error;
};

class InstanceTooLarge : public Error {
public:
    using Error::Error;
};

class EmptyShard : public Error {
public:
    using Error::Error;
};

} // namespace shardalloc
