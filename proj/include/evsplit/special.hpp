// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

namespace evsplit::special {

/// psi(x) for x > 0. Upward recurrence to x >= 10, then the asymptotic
/// Bernoulli series.
double digamma(double x);

/// psi'(x) for x > 0.
double trigamma(double x);

/// ln Gamma(x) for x > 0.
double log_gamma(double x);

}  // namespace evsplit::special
