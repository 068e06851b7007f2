// Copyright (c) 2026, The ATM-SAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared matrix aliases and the error hierarchy used across the library.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace atm {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;
using VectorF = Vector<float>;
using VectorD = Vector<double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value; `field()` names the offending key.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered; `tensor()` names where.
class NumericError : public Error {
public:
    NumericError(std::string tensor, const std::string& what)
        : Error(tensor + ": " + what), tensor_(std::move(tensor)) {}
    const std::string& tensor() const noexcept { return tensor_; }

private:
    std::string tensor_;
};

/// Malformed binary file; `offset()` is the byte position of the problem.
class FormatError : public Error {
public:
    FormatError(std::uint64_t offset, const std::string& what)
        : Error("at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace atm
