// Copyright 2026 The dmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmix {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidShape : public Error {
public:
    using Error::Error;
};

class InvalidSchedule : public Error {
public:
    using Error::Error;
};

/// An argument lies outside its admissible range (timestep, probability, ratio...).
class OutOfRange : public Error {
public:
    using Error::Error;
};

/// A formula is undefined at the requested point (e.g. t = 0 in the eps map).
class DomainError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class TrainingFailure : public Error {
public:
    TrainingFailure(std::size_t step, const std::string& what)
        : Error("training failed at step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Wraps a failure raised inside a reverse-diffusion loop with the step it happened at.
class SamplingFailure : public Error {
public:
    SamplingFailure(std::size_t step, const std::string& what)
        : Error("sampling failed at step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace dmix
