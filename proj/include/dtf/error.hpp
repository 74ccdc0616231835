#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dtf {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Text could not be parsed; message carries "line:column".
class ParseError : public Error {
public:
    using Error::Error;
};

// An entry references an id that does not exist.
class ReferenceError : public Error {
public:
    ReferenceError(const std::string& what, std::string dangling_id)
        : Error(what), dangling_id_(std::move(dangling_id)) {}
    const std::string& dangling_id() const noexcept { return dangling_id_; }

private:
    std::string dangling_id_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

// A domain invariant does not hold for an entry.
class InvariantError : public Error {
public:
    using Error::Error;
};

class MergeConflict : public Error {
public:
    MergeConflict(const std::string& what, std::vector<std::string> offending)
        : Error(what), offending_(std::move(offending)) {}
    const std::vector<std::string>& offending() const noexcept { return offending_; }

private:
    std::vector<std::string> offending_;
};

class InsufficientData : public Error {
public:
    using Error::Error;
};

class MissingCurve : public Error {
public:
    using Error::Error;
};

class UnmappedState : public Error {
public:
    using Error::Error;
};

class Infeasible : public Error {
public:
    using Error::Error;
};

class SimulationError : public Error {
public:
    using Error::Error;
};

}  // namespace dtf
