// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <stdexcept>
#include <string>

namespace evsplit {

/// Invalid configuration: mismatched shapes, out-of-range settings, unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Time ordering violated (e.g. merging a record from the future).
class OrderingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Broken internal contract, e.g. a cache that does not belong to the model.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evsplit
