// Copyright 2026 The gta-attention Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gta {

// Library error taxonomy. The CLI maps these onto process exit codes:
// configuration/shape/contract problems -> 2, numeric failures -> 3,
// filesystem and container problems -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is invalid (bad block plan, indivisible channels, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API precondition was violated (backward without tape, retention off, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared or an iteration diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

// The filesystem failed us (open/read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

// A container is malformed (bad magic, truncation, unparsable header).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A container is well-formed but its checksum does not match.
class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace gta
