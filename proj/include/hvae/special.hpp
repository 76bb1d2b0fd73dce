#pragma once

namespace hvae {

/// Digamma function Psi(x) = d/dx log Gamma(x) for x > 0.
/// Shifts x above 10 with Psi(x) = Psi(x+1) - 1/x, then sums the asymptotic
/// series through the x^-14 term. Throws DomainError for x <= 0 or non-finite x.
double digamma(double x);

}  // namespace hvae
