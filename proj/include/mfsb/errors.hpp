/*
 Copyright 2026 The mfsb Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#ifndef MFSB_ERRORS_HPP
#define MFSB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mfsb {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions, bad flags, malformed programs.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Bad caller-supplied values (negative weights, mismatched sizes).
class InputError : public Error {
public:
    using Error::Error;
};

/// A numerical precondition does not hold (singular covariance, delta >= 1/2, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class OrderingError : public Error {
public:
    using Error::Error;
};

class ControllabilityError : public Error {
public:
    using Error::Error;
};

/// Gain recovery hit a near-singular covariance.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, int knot) : Error(what), knot_(knot) {}
    int knot() const { return knot_; }

private:
    int knot_;
};

class LookupError : public Error {
public:
    using Error::Error;
};

/// Scenario document does not match the schema. `path()` is the JSON path.
class SchemaError : public Error {
public:
    SchemaError(const std::string& path, const std::string& msg)
        : Error("schema error at \"" + path + "\": " + msg), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// The swarm simulation produced a non-finite state.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int knot, int agent)
        : Error(what), knot_(knot), agent_(agent) {}
    int knot() const { return knot_; }
    int agent() const { return agent_; }

private:
    int knot_;
    int agent_;
};

/// A conic solve did not return an optimal point. Carries the status text.
class SolveError : public Error {
public:
    SolveError(const std::string& what, std::string status, bool infeasible)
        : Error(what), status_(std::move(status)), infeasible_(infeasible) {}
    const std::string& status() const { return status_; }
    bool infeasible() const { return infeasible_; }

private:
    std::string status_;
    bool infeasible_;
};

}  // namespace mfsb

#endif  // MFSB_ERRORS_HPP
